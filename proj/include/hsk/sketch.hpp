#pragma once

#include "hsk/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hsk {

/// An m x n matrix with exactly one stored entry per column: S(positions[i], i) = values[i].
/// Positions are 0-based in memory and 1-based in persisted records.
struct CountSketchType {
  Index rows = 0;
  std::vector<Index> positions;
  Vector values;

  Index cols() const { return static_cast<Index>(positions.size()); }

  /// Throws ValidationError when a position is out of range or sizes disagree.
  void validate() const;

  static CountSketchType identity(Index n, double scale = 1.0);
};

enum class SketchKind { Gaussian, CountSketch, Sjlt, CountSketchType, OracleSplit };

std::string to_string(SketchKind kind);

/// Counts scalar multiply-adds performed by SketchMatrix::apply.
struct ApplyStats {
  std::uint64_t multiply_adds = 0;
};

/// A sketch operator. Sparse variants are never densified on the apply path.
class SketchMatrix {
 public:
  struct Gaussian {
    std::uint64_t seed = 0;
    Matrix entries;  // already scaled by 1/sqrt(m)
  };
  struct Sjlt {
    Index block_rows = 0;
    std::vector<CountSketchType> blocks;
  };
  struct OracleSplit {
    Index n = 0;
    std::vector<Index> kept;  // sorted, 0-based
    CountSketchType inner;    // over the complement rows, in increasing order
  };

  /// Re-materializes a Gaussian sketch from its seed; identical seeds give identical matrices.
  static SketchMatrix gaussian(Index m, Index n, std::uint64_t seed);
  static SketchMatrix countsketch(CountSketchType cs, SketchKind kind = SketchKind::CountSketchType);
  static SketchMatrix sjlt(std::vector<CountSketchType> blocks);
  static SketchMatrix oracle_split(Index n, std::vector<Index> kept, CountSketchType inner);
  static SketchMatrix identity(Index n, double scale = 1.0);

  SketchKind kind() const { return kind_; }
  Index rows() const;
  Index cols() const;

  /// Exact product S * A. Throws DimensionError when cols() != A.rows().
  Matrix apply(const Matrix& A, ApplyStats* stats = nullptr) const;

  /// Realized dense matrix; intended for tests and small diagnostics.
  Matrix dense() const;

  /// Short family label used in result files: gaussian, countsketch, sjlt:s, learned, oracle.
  std::string family() const;

  bool is_sparse() const { return kind_ != SketchKind::Gaussian; }

  const Gaussian& gaussian_payload() const { return std::get<Gaussian>(payload_); }
  const CountSketchType& countsketch_payload() const { return std::get<CountSketchType>(payload_); }
  const Sjlt& sjlt_payload() const { return std::get<Sjlt>(payload_); }
  const OracleSplit& oracle_payload() const { return std::get<OracleSplit>(payload_); }

 private:
  SketchMatrix(SketchKind kind, std::variant<Gaussian, CountSketchType, Sjlt, OracleSplit> payload)
      : kind_(kind), payload_(std::move(payload)) {}

  SketchKind kind_;
  std::variant<Gaussian, CountSketchType, Sjlt, OracleSplit> payload_;
};

/// Dense Gaussian sketch with N(0, 1/m) entries. Draws a 64-bit seed from rng so the
/// result can be persisted as (seed, m, n).
SketchMatrix make_gaussian(Index m, Index n, Rng& rng);

/// Random CountSketch: uniform positions, Rademacher values, columns independent.
SketchMatrix make_countsketch(Index m, Index n, Rng& rng);

/// Raw CountSketch-type payload with the same distribution as make_countsketch.
CountSketchType random_countsketch(Index m, Index n, Rng& rng);

/// Vertical stack of s independent CountSketch blocks of m/s rows each.
SketchMatrix make_sjlt(Index m, Index n, Index s, Rng& rng);

/// Persisted record: {variant, m, n, p, v} for sparse variants (p is 1-based),
/// {variant:"gaussian", seed, m, n} for Gaussian.
nlohmann::json serialize_sketch(const SketchMatrix& S);

/// Throws ParseError on a malformed record.
SketchMatrix deserialize_sketch(const nlohmann::json& record);

nlohmann::json countsketch_to_json(const CountSketchType& cs);
CountSketchType countsketch_from_json(const nlohmann::json& record);

/// Per-round sketch source for the iterative solvers. When both members are present
/// the safeguarded selection decides between them.
struct RoundSketches {
  std::optional<SketchMatrix> learned;
  std::optional<SketchMatrix> random;
};

}  // namespace hsk
