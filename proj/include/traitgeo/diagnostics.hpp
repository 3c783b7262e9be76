#pragma once

#include <span>
#include <string>
#include <vector>

#include "traitgeo/conditioning.hpp"
#include "traitgeo/directions.hpp"

namespace traitgeo {

struct GeometryDiagnostics {
  ConditioningSpec scheme;
  double max_offdiag_abs_cos = 0.0;
  std::vector<double> retention;  // signed cos(original_i, conditioned_i)
  double retention_min = 0.0;
  double retention_max = 0.0;
};

/// max_{i != j} |<d_i, d_j>| on unit rows. Throws TooFewTraits for C < 2.
double max_offdiag_abs_cos(const DirectionSet& set);

/// Signed cosine between each original row and its conditioned counterpart.
/// Throws ShapeMismatch when C, D or trait order differ.
std::vector<double> signal_retention(const DirectionSet& original, const ConditionedSet& conditioned);

GeometryDiagnostics diagnose(const DirectionSet& original, const ConditionedSet& conditioned);

std::vector<GeometryDiagnostics> diagnostics_report(const DirectionSet& original,
                                                    std::span<const ConditionedSet> conditioned);

/// CSV with header `scheme,params,max_offdiag_abs_cos,retention_min,retention_max`,
/// numbers to 6 significant digits.
std::string diagnostics_csv(std::span<const GeometryDiagnostics> rows);

}  // namespace traitgeo
