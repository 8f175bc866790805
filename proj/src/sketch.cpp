#include "hsk/sketch.hpp"

#include <algorithm>
#include <cmath>

namespace hsk {

using nlohmann::json;

void CountSketchType::validate() const {
  if (rows < 1) throw ValidationError("countsketch: row count must be positive");
  if (values.size() != cols())
    throw ValidationError("countsketch: positions and values differ in length");
  for (Index i = 0; i < cols(); ++i) {
    const Index p = positions[static_cast<std::size_t>(i)];
    if (p < 0 || p >= rows)
      throw ValidationError("countsketch: position of column " + std::to_string(i + 1) +
                            " is outside [1.." + std::to_string(rows) + "]");
  }
}

CountSketchType CountSketchType::identity(Index n, double scale) {
  CountSketchType cs;
  cs.rows = n;
  cs.positions.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) cs.positions[static_cast<std::size_t>(i)] = i;
  cs.values = Vector::Constant(n, scale);
  return cs;
}

std::string to_string(SketchKind kind) {
  switch (kind) {
    case SketchKind::Gaussian: return "gaussian";
    case SketchKind::CountSketch: return "countsketch";
    case SketchKind::Sjlt: return "sjlt";
    case SketchKind::CountSketchType: return "countsketch_type";
    case SketchKind::OracleSplit: return "oracle_split";
  }
  return "unknown";
}

SketchMatrix SketchMatrix::gaussian(Index m, Index n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw ValidationError("gaussian sketch: dimensions must be positive");
  Rng local(seed);
  Matrix G = gaussian_matrix(m, n, local) / std::sqrt(static_cast<double>(m));
  return SketchMatrix(SketchKind::Gaussian, Gaussian{seed, std::move(G)});
}

SketchMatrix SketchMatrix::countsketch(CountSketchType cs, SketchKind kind) {
  cs.validate();
  if (kind != SketchKind::CountSketch && kind != SketchKind::CountSketchType)
    throw ValidationError("countsketch: invalid kind");
  return SketchMatrix(kind, std::move(cs));
}

SketchMatrix SketchMatrix::sjlt(std::vector<CountSketchType> blocks) {
  if (blocks.empty()) throw ValidationError("sjlt: needs at least one block");
  const Index rows = blocks.front().rows, cols = blocks.front().cols();
  for (const auto& b : blocks) {
    b.validate();
    if (b.rows != rows || b.cols() != cols) throw ValidationError("sjlt: blocks differ in shape");
  }
  return SketchMatrix(SketchKind::Sjlt, Sjlt{rows, std::move(blocks)});
}

SketchMatrix SketchMatrix::oracle_split(Index n, std::vector<Index> kept, CountSketchType inner) {
  std::sort(kept.begin(), kept.end());
  if (std::adjacent_find(kept.begin(), kept.end()) != kept.end())
    throw ValidationError("oracle sketch: duplicate kept row");
  if (!kept.empty() && (kept.front() < 0 || kept.back() >= n))
    throw ValidationError("oracle sketch: kept row outside [1..n]");
  if (inner.cols() != n - static_cast<Index>(kept.size()))
    throw ValidationError("oracle sketch: inner sketch must cover the complement rows");
  if (inner.cols() > 0 || inner.rows > 0) inner.validate();
  return SketchMatrix(SketchKind::OracleSplit, OracleSplit{n, std::move(kept), std::move(inner)});
}

SketchMatrix SketchMatrix::identity(Index n, double scale) {
  return countsketch(CountSketchType::identity(n, scale), SketchKind::CountSketchType);
}

Index SketchMatrix::rows() const {
  switch (kind_) {
    case SketchKind::Gaussian: return gaussian_payload().entries.rows();
    case SketchKind::Sjlt:
      return sjlt_payload().block_rows * static_cast<Index>(sjlt_payload().blocks.size());
    case SketchKind::OracleSplit:
      return static_cast<Index>(oracle_payload().kept.size()) + oracle_payload().inner.rows;
    default: return countsketch_payload().rows;
  }
}

Index SketchMatrix::cols() const {
  switch (kind_) {
    case SketchKind::Gaussian: return gaussian_payload().entries.cols();
    case SketchKind::Sjlt: return sjlt_payload().blocks.front().cols();
    case SketchKind::OracleSplit: return oracle_payload().n;
    default: return countsketch_payload().cols();
  }
}

namespace {

// out.row(offset + p_i) += v_i * A.row(source_i), skipping stored zeros of A.
// `source` maps the sketch column index to the row of A it reads.
template <typename SourceRow>
void accumulate(const CountSketchType& cs, const Matrix& A, Index offset, SourceRow source,
                Matrix& out, std::uint64_t& count) {
  const Index d = A.cols();
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < cs.cols(); ++i) {
      const double a = A(source(i), j);
      if (a == 0.0) continue;
      out(offset + cs.positions[static_cast<std::size_t>(i)], j) += cs.values(i) * a;
      ++count;
    }
  }
}

}  // namespace

Matrix SketchMatrix::apply(const Matrix& A, ApplyStats* stats) const {
  if (A.rows() != cols())
    throw DimensionError("sketch apply: sketch has " + std::to_string(cols()) +
                         " columns but the matrix has " + std::to_string(A.rows()) + " rows");
  std::uint64_t count = 0;
  Matrix out = Matrix::Zero(rows(), A.cols());
  auto same = [](Index i) { return i; };
  switch (kind_) {
    case SketchKind::Gaussian: {
      out.noalias() = gaussian_payload().entries * A;
      count = static_cast<std::uint64_t>(rows()) * static_cast<std::uint64_t>((A.array() != 0.0).count());
      break;
    }
    case SketchKind::CountSketch:
    case SketchKind::CountSketchType:
      accumulate(countsketch_payload(), A, 0, same, out, count);
      break;
    case SketchKind::Sjlt: {
      const auto& p = sjlt_payload();
      for (std::size_t k = 0; k < p.blocks.size(); ++k)
        accumulate(p.blocks[k], A, static_cast<Index>(k) * p.block_rows, same, out, count);
      break;
    }
    case SketchKind::OracleSplit: {
      const auto& p = oracle_payload();
      const Index kept = static_cast<Index>(p.kept.size());
      for (Index k = 0; k < kept; ++k) out.row(k) = A.row(p.kept[static_cast<std::size_t>(k)]);
      std::vector<Index> complement;
      complement.reserve(static_cast<std::size_t>(p.n - kept));
      for (Index i = 0, k = 0; i < p.n; ++i) {
        if (k < kept && p.kept[static_cast<std::size_t>(k)] == i) {
          ++k;
          continue;
        }
        complement.push_back(i);
      }
      accumulate(p.inner, A, kept, [&](Index i) { return complement[static_cast<std::size_t>(i)]; },
                 out, count);
      break;
    }
  }
  if (stats) stats->multiply_adds += count;
  return out;
}

Matrix SketchMatrix::dense() const {
  if (kind_ == SketchKind::Gaussian) return gaussian_payload().entries;
  return apply(Matrix::Identity(cols(), cols()));
}

std::string SketchMatrix::family() const {
  switch (kind_) {
    case SketchKind::Gaussian: return "gaussian";
    case SketchKind::CountSketch: return "countsketch";
    case SketchKind::Sjlt: return "sjlt:" + std::to_string(sjlt_payload().blocks.size());
    case SketchKind::CountSketchType: return "learned";
    case SketchKind::OracleSplit: return "oracle";
  }
  return "unknown";
}

CountSketchType random_countsketch(Index m, Index n, Rng& rng) {
  if (m < 1 || n < 1) throw ValidationError("countsketch: dimensions must be positive");
  std::uniform_int_distribution<Index> row(0, m - 1);
  std::bernoulli_distribution sign(0.5);
  CountSketchType cs;
  cs.rows = m;
  cs.positions.resize(static_cast<std::size_t>(n));
  cs.values.resize(n);
  for (Index i = 0; i < n; ++i) {
    cs.positions[static_cast<std::size_t>(i)] = row(rng);
    cs.values(i) = sign(rng) ? 1.0 : -1.0;
  }
  return cs;
}

SketchMatrix make_gaussian(Index m, Index n, Rng& rng) { return SketchMatrix::gaussian(m, n, rng()); }

SketchMatrix make_countsketch(Index m, Index n, Rng& rng) {
  return SketchMatrix::countsketch(random_countsketch(m, n, rng), SketchKind::CountSketch);
}

SketchMatrix make_sjlt(Index m, Index n, Index s, Rng& rng) {
  if (s < 1 || m % s != 0)
    throw ValidationError("sjlt: block count " + std::to_string(s) + " must divide m = " +
                          std::to_string(m));
  std::vector<CountSketchType> blocks;
  blocks.reserve(static_cast<std::size_t>(s));
  for (Index k = 0; k < s; ++k) blocks.push_back(random_countsketch(m / s, n, rng));
  return SketchMatrix::sjlt(std::move(blocks));
}

// ---------------------------------------------------------------------------
// Persistence

json countsketch_to_json(const CountSketchType& cs) {
  json p = json::array(), v = json::array();
  for (Index i = 0; i < cs.cols(); ++i) {
    p.push_back(cs.positions[static_cast<std::size_t>(i)] + 1);
    v.push_back(cs.values(i));
  }
  return json{{"m", cs.rows}, {"n", cs.cols()}, {"p", std::move(p)}, {"v", std::move(v)}};
}

namespace {

const json& field(const json& record, const char* name) {
  if (!record.is_object() || !record.contains(name))
    throw ParseError(std::string("sketch record: missing field '") + name + "'");
  return record.at(name);
}

Index index_field(const json& record, const char* name) {
  const json& f = field(record, name);
  if (!f.is_number_integer()) throw ParseError(std::string("sketch record: '") + name + "' must be an integer");
  return f.get<Index>();
}

CountSketchType parse_entries(const json& p, const json& v, Index rows, Index begin, Index count) {
  CountSketchType cs;
  cs.rows = rows;
  cs.positions.resize(static_cast<std::size_t>(count));
  cs.values.resize(count);
  for (Index i = 0; i < count; ++i) {
    const json& pi = p.at(static_cast<std::size_t>(begin + i));
    const json& vi = v.at(static_cast<std::size_t>(begin + i));
    if (!pi.is_number_integer() || !vi.is_number())
      throw ParseError("sketch record: non-numeric p/v entry");
    cs.positions[static_cast<std::size_t>(i)] = pi.get<Index>() - 1;
    cs.values(i) = vi.get<double>();
  }
  return cs;
}

}  // namespace

CountSketchType countsketch_from_json(const json& record) {
  const Index m = index_field(record, "m");
  const Index n = index_field(record, "n");
  const json& p = field(record, "p");
  const json& v = field(record, "v");
  if (!p.is_array() || !v.is_array() || static_cast<Index>(p.size()) != n ||
      static_cast<Index>(v.size()) != n)
    throw ParseError("sketch record: p and v must be arrays of length n");
  CountSketchType cs = parse_entries(p, v, m, 0, n);
  try {
    cs.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("sketch record: ") + e.what());
  }
  return cs;
}

json serialize_sketch(const SketchMatrix& S) {
  switch (S.kind()) {
    case SketchKind::Gaussian:
      return json{{"variant", "gaussian"}, {"seed", S.gaussian_payload().seed}, {"m", S.rows()},
                  {"n", S.cols()}};
    case SketchKind::CountSketch:
    case SketchKind::CountSketchType: {
      json r = countsketch_to_json(S.countsketch_payload());
      r["variant"] = to_string(S.kind());
      return r;
    }
    case SketchKind::Sjlt: {
      // Flat layout: entry k*n + i is block k, column i; p holds global 1-based rows.
      const auto& sj = S.sjlt_payload();
      json p = json::array(), v = json::array();
      for (std::size_t k = 0; k < sj.blocks.size(); ++k)
        for (Index i = 0; i < sj.blocks[k].cols(); ++i) {
          p.push_back(static_cast<Index>(k) * sj.block_rows + sj.blocks[k].positions[static_cast<std::size_t>(i)] + 1);
          v.push_back(sj.blocks[k].values(i));
        }
      return json{{"variant", "sjlt"}, {"m", S.rows()}, {"n", S.cols()},
                  {"s", sj.blocks.size()}, {"p", std::move(p)}, {"v", std::move(v)}};
    }
    case SketchKind::OracleSplit: {
      const auto& o = S.oracle_payload();
      json kept = json::array();
      for (Index k : o.kept) kept.push_back(k + 1);
      json r = countsketch_to_json(o.inner);
      r["variant"] = "oracle_split";
      r["n"] = o.n;
      r["kept"] = std::move(kept);
      return r;
    }
  }
  throw Error("serialize_sketch: unknown variant");
}

SketchMatrix deserialize_sketch(const json& record) {
  const json& variant = field(record, "variant");
  if (!variant.is_string()) throw ParseError("sketch record: variant must be a string");
  const std::string name = variant.get<std::string>();
  if (name == "gaussian") {
    const json& seed = field(record, "seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer())
      throw ParseError("sketch record: seed must be an integer");
    const Index m = index_field(record, "m"), n = index_field(record, "n");
    if (m < 1 || n < 1) throw ParseError("sketch record: dimensions must be positive");
    return SketchMatrix::gaussian(m, n, seed.get<std::uint64_t>());
  }
  if (name == "countsketch")
    return SketchMatrix::countsketch(countsketch_from_json(record), SketchKind::CountSketch);
  if (name == "countsketch_type")
    return SketchMatrix::countsketch(countsketch_from_json(record), SketchKind::CountSketchType);
  if (name == "sjlt") {
    const Index m = index_field(record, "m"), n = index_field(record, "n"), s = index_field(record, "s");
    if (s < 1 || m < 1 || m % s != 0) throw ParseError("sketch record: s must divide m");
    const json& p = field(record, "p");
    const json& v = field(record, "v");
    if (!p.is_array() || !v.is_array() || static_cast<Index>(p.size()) != s * n ||
        static_cast<Index>(v.size()) != s * n)
      throw ParseError("sketch record: sjlt p and v must have s*n entries");
    const Index block_rows = m / s;
    std::vector<CountSketchType> blocks;
    for (Index k = 0; k < s; ++k) {
      CountSketchType cs = parse_entries(p, v, block_rows, k * n, n);
      for (auto& pos : cs.positions) {
        pos -= k * block_rows;
        if (pos < 0 || pos >= block_rows)
          throw ParseError("sketch record: sjlt position outside its block");
      }
      blocks.push_back(std::move(cs));
    }
    return SketchMatrix::sjlt(std::move(blocks));
  }
  if (name == "oracle_split") {
    const Index n = index_field(record, "n");
    const json& kept_json = field(record, "kept");
    if (!kept_json.is_array()) throw ParseError("sketch record: kept must be an array");
    std::vector<Index> kept;
    for (const auto& k : kept_json) {
      if (!k.is_number_integer()) throw ParseError("sketch record: kept must hold integers");
      const Index row = k.get<Index>() - 1;
      if (row < 0 || row >= n) throw ParseError("sketch record: kept row out of range");
      kept.push_back(row);
    }
    json inner = record;
    inner["n"] = n - static_cast<Index>(kept.size());
    try {
      return SketchMatrix::oracle_split(n, std::move(kept), countsketch_from_json(inner));
    } catch (const ValidationError& e) {
      throw ParseError(std::string("sketch record: ") + e.what());
    }
  }
  throw ParseError("sketch record: unknown variant '" + name + "'");
}

}  // namespace hsk
