#include "traitgeo/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"
#include "traitgeo/kernels.hpp"

namespace traitgeo {

double max_offdiag_abs_cos(const DirectionSet& set) {
  if (set.traits() < 2) throw Error(ErrorKind::TooFewTraits, "need at least two traits");
  double worst = 0.0;
  for (std::size_t i = 0; i < set.traits(); ++i) {
    for (std::size_t j = i + 1; j < set.traits(); ++j) {
      worst = std::max(worst, std::abs(kernels::dot(set.row(i), set.row(j))));
    }
  }
  return worst;
}

std::vector<double> signal_retention(const DirectionSet& original,
                                     const ConditionedSet& conditioned) {
  const DirectionSet& after = conditioned.directions;
  if (original.traits() != after.traits() || original.dim() != after.dim() ||
      original.trait_names() != after.trait_names()) {
    throw Error(ErrorKind::ShapeMismatch, "conditioned set does not match the original's traits");
  }
  std::vector<double> out(original.traits());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double denom = original.row_norm(i) * after.row_norm(i);
    out[i] = denom > 0.0 ? kernels::dot(original.row(i), after.row(i)) / denom : 0.0;
  }
  return out;
}

GeometryDiagnostics diagnose(const DirectionSet& original, const ConditionedSet& conditioned) {
  GeometryDiagnostics g;
  g.scheme = conditioned.spec;
  g.retention = signal_retention(original, conditioned);
  g.max_offdiag_abs_cos =
      conditioned.directions.traits() >= 2 ? max_offdiag_abs_cos(conditioned.directions) : 0.0;
  auto [lo, hi] = std::minmax_element(g.retention.begin(), g.retention.end());
  g.retention_min = *lo;
  g.retention_max = *hi;
  return g;
}

std::vector<GeometryDiagnostics> diagnostics_report(const DirectionSet& original,
                                                    std::span<const ConditionedSet> conditioned) {
  std::vector<GeometryDiagnostics> rows;
  rows.reserve(conditioned.size());
  for (const auto& c : conditioned) rows.push_back(diagnose(original, c));
  return rows;
}

std::string diagnostics_csv(std::span<const GeometryDiagnostics> rows) {
  std::string out = "scheme,params,max_offdiag_abs_cos,retention_min,retention_max\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6g},{:.6g},{:.6g}\n", scheme_name(r.scheme.scheme),
                       csv_escape(r.scheme.params_string()), r.max_offdiag_abs_cos, r.retention_min,
                       r.retention_max);
  }
  return out;
}

}  // namespace traitgeo
