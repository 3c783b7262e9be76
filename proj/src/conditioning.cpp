#include "traitgeo/conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "traitgeo/error.hpp"
#include "traitgeo/kernels.hpp"

namespace traitgeo {

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::C0: return "C0";
    case Scheme::C1: return "C1";
    case Scheme::C2: return "C2";
    case Scheme::C3: return "C3";
    case Scheme::C4: return "C4";
    case Scheme::C5: return "C5";
  }
  return "C0";
}

std::optional<Scheme> parse_scheme(std::string_view text) {
  if (text.size() != 2 || (text[0] != 'c' && text[0] != 'C')) return std::nullopt;
  switch (text[1]) {
    case '0': return Scheme::C0;
    case '1': return Scheme::C1;
    case '2': return Scheme::C2;
    case '3': return Scheme::C3;
    case '4': return Scheme::C4;
    case '5': return Scheme::C5;
    default: return std::nullopt;
  }
}

std::string ConditioningSpec::params_string() const {
  std::vector<std::string> parts;
  auto num = [](double v) { return fmt::format("{:g}", v); };
  if (scheme == Scheme::C1 && gamma) parts.push_back("gamma=" + num(*gamma));
  if ((scheme == Scheme::C3 || scheme == Scheme::C4) && tau) parts.push_back("tau=" + num(*tau));
  if (scheme == Scheme::C4 && beta) parts.push_back("beta=" + num(*beta));
  if ((scheme == Scheme::C2 || scheme == Scheme::C3 || scheme == Scheme::C4) && !order.empty()) {
    parts.push_back("order=" + fmt::format("{}", fmt::join(order, "-")));
  }
  if (parts.empty()) return "-";
  return fmt::format("{}", fmt::join(parts, ";"));
}

// ---------------------------------------------------------------------------

GramMatrix gram(const DirectionSet& set) {
  const auto c = static_cast<Eigen::Index>(set.traits());
  Eigen::MatrixXd g(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = i; j < c; ++j) {
      const double v = kernels::dot(set.row(static_cast<std::size_t>(i)),
                                    set.row(static_cast<std::size_t>(j)));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return {std::move(g)};
}

Eigen::MatrixXd inv_sqrt_psd(const Eigen::MatrixXd& m, double eig_floor) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "inv_sqrt_psd needs a non-empty square matrix");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorKind::NotSymmetric, "matrix is not symmetric to 1e-10");
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::RankDeficient, "eigendecomposition did not converge");
  }
  const Eigen::VectorXd& lambda = es.eigenvalues();  // ascending
  const double lmax = lambda(lambda.size() - 1);
  if (!(lmax > 0.0) || lambda(0) < eig_floor * lmax) {
    throw Error(ErrorKind::RankDeficient,
                fmt::format("smallest eigenvalue {:.3e} is below {:.1e} x largest {:.3e}", lambda(0),
                            eig_floor, lmax));
  }
  const Eigen::VectorXd inv_root = lambda.array().rsqrt();
  const Eigen::MatrixXd& v = es.eigenvectors();
  Eigen::MatrixXd s = v * inv_root.asDiagonal() * v.transpose();
  return 0.5 * (s + s.transpose());
}

std::vector<double> mix_rows(const Eigen::MatrixXd& m, const DirectionSet& set) {
  const std::size_t c = set.traits();
  const std::size_t d = set.dim();
  std::vector<double> out(c * d, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    std::span<double> dst(out.data() + i * d, d);
    for (std::size_t j = 0; j < c; ++j) {
      kernels::axpy(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), set.row(j), dst);
    }
  }
  return out;
}

namespace {

void require_normalized(const DirectionSet& set) {
  if (!set.normalized()) {
    throw Error(ErrorKind::InvalidParameter, "conditioning expects unit-norm rows; normalize first");
  }
}

void require_unit_interval(std::string_view name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorKind::InvalidParameter, fmt::format("{}={} is outside [0,1]", name, v));
  }
}

std::vector<std::size_t> resolve_order(std::span<const std::size_t> order, std::size_t c) {
  if (order.empty()) {
    std::vector<std::size_t> canonical(c);
    std::iota(canonical.begin(), canonical.end(), std::size_t{0});
    return canonical;
  }
  std::vector<std::size_t> sorted(order.begin(), order.end());
  std::sort(sorted.begin(), sorted.end());
  bool ok = sorted.size() == c;
  for (std::size_t i = 0; ok && i < c; ++i) ok = sorted[i] == i;
  if (!ok) {
    throw Error(ErrorKind::InvalidParameter,
                fmt::format("order [{}] is not a permutation of 0..{}", fmt::join(order, ","), c - 1));
  }
  return {order.begin(), order.end()};
}

// Re-normalize rows in place and package the result.
ConditionedSet finish(const DirectionSet& original, std::vector<double> values,
                      ConditioningSpec spec, std::size_t projections = 0) {
  const std::size_t c = original.traits();
  const std::size_t d = original.dim();
  std::vector<double> norms(c);
  for (std::size_t i = 0; i < c; ++i) {
    std::span<double> r(values.data() + i * d, d);
    norms[i] = std::sqrt(kernels::squared_norm(r));
    if (norms[i] < 1e-12) {
      throw Error(ErrorKind::RankDeficient,
                  "conditioned row for '" + original.trait_names()[i] + "' collapsed to zero");
    }
    kernels::scale(1.0 / norms[i], r);
  }
  nlohmann::json meta = original.source_meta();
  if (!meta.is_object()) meta = nlohmann::json::object();
  meta["conditioning"] = {{"scheme", scheme_name(spec.scheme)}, {"params", spec.params_string()}};
  DirectionSet out(original.trait_names(), d, std::move(values), std::move(meta));
  return ConditionedSet{std::move(out), std::move(spec), std::move(norms), projections};
}

// Shared sweep for C2-C4. For each row in `order`, walk the previously
// finished rows and remove (a fraction of) the projection onto each.
//  - classical: coefficients use the untouched input row (Gram-Schmidt);
//    every projection fires.
//  - otherwise coefficients and the |cos| > tau test use the running row.
struct SweepOptions {
  bool classical = false;
  double tau = 0.0;
  double beta = 1.0;
};

ConditionedSet sweep(const DirectionSet& set, std::span<const std::size_t> order_in,
                     const SweepOptions& opt, ConditioningSpec spec) {
  const std::size_t c = set.traits();
  const std::size_t d = set.dim();
  const std::vector<std::size_t> order = resolve_order(order_in, c);
  std::vector<double> values(set.values().begin(), set.values().end());
  std::vector<double> norms(c, 1.0);
  std::size_t fired = 0;

  auto row = [&](std::size_t i) { return std::span<double>(values.data() + i * d, d); };

  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    std::span<double> v = row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const std::size_t j = order[p];
      std::span<const double> e = row(j);  // already unit norm
      double coeff = 0.0;
      if (opt.classical) {
        coeff = kernels::dot(set.row(i), e);
      } else {
        coeff = kernels::dot(v, e);
        const double vnorm = std::sqrt(kernels::squared_norm(v));
        const double cosine = vnorm > 0.0 ? coeff / vnorm : 0.0;
        if (!(std::abs(cosine) > opt.tau)) continue;
        coeff *= opt.beta;
      }
      kernels::axpy(-coeff, e, v);
      ++fired;
    }
    const double n = std::sqrt(kernels::squared_norm(v));
    if (n < 1e-10) {
      throw Error(ErrorKind::RankDeficient,
                  fmt::format("residual of '{}' fell to {:.3e} during the sweep",
                              set.trait_names()[i], n));
    }
    norms[i] = n;
    kernels::scale(1.0 / n, v);
  }

  // Rows are already unit norm; finish() divides by ~1 and records those norms,
  // so overwrite with the residual norms seen before normalization.
  ConditionedSet out = finish(set, std::move(values), std::move(spec), fired);
  out.pre_normalization_norms = std::move(norms);
  return out;
}

}  // namespace

ConditionedSet condition_c0(const DirectionSet& set) {
  require_normalized(set);
  nlohmann::json meta = set.source_meta();
  if (!meta.is_object()) meta = nlohmann::json::object();
  meta["conditioning"] = {{"scheme", "C0"}, {"params", "-"}};
  DirectionSet same(set.trait_names(), set.dim(), {set.values().begin(), set.values().end()},
                    std::move(meta));
  return ConditionedSet{std::move(same), {Scheme::C0}, std::vector<double>(set.traits(), 1.0), 0};
}

ConditionedSet condition_c1(const DirectionSet& set, double gamma) {
  require_normalized(set);
  require_unit_interval("gamma", gamma);
  const auto c = static_cast<Eigen::Index>(set.traits());
  const Eigen::MatrixXd regularized =
      (1.0 - gamma) * gram(set).values + gamma * Eigen::MatrixXd::Identity(c, c);
  ConditioningSpec spec{Scheme::C1};
  spec.gamma = gamma;
  return finish(set, mix_rows(inv_sqrt_psd(regularized), set), std::move(spec));
}

ConditionedSet condition_c2(const DirectionSet& set, std::span<const std::size_t> order) {
  require_normalized(set);
  ConditioningSpec spec{Scheme::C2};
  spec.order.assign(order.begin(), order.end());
  return sweep(set, order, {.classical = true}, std::move(spec));
}

ConditionedSet condition_c3(const DirectionSet& set, double tau,
                            std::span<const std::size_t> order) {
  require_normalized(set);
  require_unit_interval("tau", tau);
  ConditioningSpec spec{Scheme::C3};
  spec.tau = tau;
  spec.order.assign(order.begin(), order.end());
  return sweep(set, order, {.classical = false, .tau = tau, .beta = 1.0}, std::move(spec));
}

ConditionedSet condition_c4(const DirectionSet& set, double beta, double tau,
                            std::span<const std::size_t> order) {
  require_normalized(set);
  require_unit_interval("beta", beta);
  require_unit_interval("tau", tau);
  ConditioningSpec spec{Scheme::C4};
  spec.tau = tau;
  spec.beta = beta;
  spec.order.assign(order.begin(), order.end());
  return sweep(set, order, {.classical = false, .tau = tau, .beta = beta}, std::move(spec));
}

ConditionedSet condition_c5(const DirectionSet& set) {
  require_normalized(set);
  return finish(set, mix_rows(inv_sqrt_psd(gram(set).values), set), {Scheme::C5});
}

ConditionedSet apply_condition(const DirectionSet& set, const ConditioningSpec& spec) {
  auto need = [&](const std::optional<double>& v, std::string_view name) {
    if (!v) {
      throw Error(ErrorKind::MissingParameter,
                  fmt::format("scheme {} requires {}", scheme_name(spec.scheme), name));
    }
    return *v;
  };
  ConditionedSet out = [&] {
    switch (spec.scheme) {
      case Scheme::C0: return condition_c0(set);
      case Scheme::C1: return condition_c1(set, need(spec.gamma, "gamma"));
      case Scheme::C2: return condition_c2(set, spec.order);
      case Scheme::C3: return condition_c3(set, need(spec.tau, "tau"), spec.order);
      case Scheme::C4:
        return condition_c4(set, need(spec.beta, "beta"), need(spec.tau, "tau"), spec.order);
      case Scheme::C5: return condition_c5(set);
    }
    throw Error(ErrorKind::InvalidParameter, "unknown scheme");
  }();
  out.spec = spec;
  return out;
}

}  // namespace traitgeo
