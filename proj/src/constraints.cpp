#include "hsk/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace hsk {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

void validate(const ConstraintSpec& spec) {
  std::visit(overloaded{
                 [](const Free&) {},
                 [](const Simplex&) {},
                 [](const L1Penalty& c) {
                   if (!(c.lambda >= 0.0)) throw ValidationError("l1 penalty: lambda must be >= 0");
                 },
                 [](const NuclearBall& c) {
                   if (!(c.rho > 0.0)) throw ValidationError("nuclear ball: rho must be > 0");
                 },
             },
             spec);
}

Matrix prox_l1(const Matrix& x, double threshold) {
  if (threshold < 0.0) throw ValidationError("prox_l1: negative threshold");
  return x.unaryExpr([threshold](double v) {
    const double mag = std::abs(v) - threshold;
    return mag > 0.0 ? std::copysign(mag, v) : 0.0;
  });
}

Vector project_simplex(const Vector& x) {
  const Index d = x.size();
  if (d == 0) throw DimensionError("project_simplex: empty vector");
  std::vector<double> sorted(x.data(), x.data() + d);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (Index k = 0; k < d; ++k) {
    cumulative += sorted[static_cast<std::size_t>(k)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] - candidate > 0.0) theta = candidate;
  }
  return (x.array() - theta).max(0.0).matrix();
}

Vector project_l1_ball_nonneg(const Vector& s, double radius) {
  if (s.sum() <= radius) return s;
  // The projection is a uniform shift; reuse the simplex routine on the rescaled vector.
  return radius * project_simplex(s / radius);
}

double nuclear_norm(const Matrix& X) { return X.size() == 0 ? 0.0 : singular_values(X).sum(); }

Matrix project_nuclear_ball(const Matrix& X, double rho) {
  if (!(rho > 0.0)) throw ValidationError("project_nuclear_ball: rho must be > 0");
  if (X.size() == 0) return X;
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  if (sigma.sum() <= rho) return X;
  const Vector shrunk = project_l1_ball_nonneg(sigma, rho);
  return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

Matrix prox_or_project(const ConstraintSpec& spec, const Matrix& point, double step) {
  return std::visit(overloaded{
                        [&](const Free&) -> Matrix { return point; },
                        [&](const L1Penalty& c) -> Matrix { return prox_l1(point, c.lambda * step); },
                        [&](const Simplex&) -> Matrix {
                          if (point.cols() != 1)
                            throw DimensionError("simplex constraint applies to vectors only");
                          return project_simplex(point.col(0));
                        },
                        [&](const NuclearBall& c) -> Matrix { return project_nuclear_ball(point, c.rho); },
                    },
                    spec);
}

double regularizer(const ConstraintSpec& spec, const Matrix& x) {
  if (const auto* l1 = std::get_if<L1Penalty>(&spec)) return l1->lambda * x.cwiseAbs().sum();
  return 0.0;
}

bool feasible(const ConstraintSpec& spec, const Matrix& x, double tol) {
  return std::visit(overloaded{
                        [](const Free&) { return true; },
                        [](const L1Penalty&) { return true; },
                        [&](const Simplex&) {
                          return x.cols() == 1 && x.minCoeff() >= -tol && std::abs(x.sum() - 1.0) <= tol;
                        },
                        [&](const NuclearBall& c) { return nuclear_norm(x) <= c.rho + tol; },
                    },
                    spec);
}

std::string describe(const ConstraintSpec& spec) {
  return std::visit(overloaded{
                        [](const Free&) -> std::string { return "free"; },
                        [](const L1Penalty&) -> std::string { return "l1"; },
                        [](const Simplex&) -> std::string { return "simplex"; },
                        [](const NuclearBall&) -> std::string { return "nuclear"; },
                    },
                    spec);
}

nlohmann::json constraint_to_json(const ConstraintSpec& spec) {
  nlohmann::json j{{"constraint", describe(spec)}};
  if (const auto* l1 = std::get_if<L1Penalty>(&spec)) j["lambda"] = l1->lambda;
  if (const auto* nb = std::get_if<NuclearBall>(&spec)) j["rho"] = nb->rho;
  return j;
}

ConstraintSpec constraint_from_json(const nlohmann::json& config) {
  if (!config.is_object() || !config.contains("constraint") || !config["constraint"].is_string())
    throw ParseError("constraint config: missing 'constraint' string");
  const std::string name = config["constraint"].get<std::string>();
  auto number = [&](const char* key) {
    if (!config.contains(key) || !config[key].is_number())
      throw ParseError(std::string("constraint config: '") + name + "' needs numeric '" + key + "'");
    return config[key].get<double>();
  };
  ConstraintSpec spec;
  if (name == "free") spec = Free{};
  else if (name == "l1") spec = L1Penalty{number("lambda")};
  else if (name == "simplex") spec = Simplex{};
  else if (name == "nuclear") spec = NuclearBall{number("rho")};
  else throw ParseError("constraint config: unknown constraint '" + name + "'");
  try {
    validate(spec);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  return spec;
}

}  // namespace hsk
