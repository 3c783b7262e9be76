#pragma once

// Geometric conditioning of trait direction sets.
//
//   C0  baseline, rows untouched
//   C1  soft symmetric whitening   D' = ((1-gamma) G + gamma I)^{-1/2} D
//   C2  classical Gram-Schmidt in a caller-supplied order
//   C3  greedy selective projection: remove <d_i, d_j> d_j only when |cos| > tau
//   C4  as C3 but each removal scaled by beta
//   C5  Loewdin symmetric orthonormalization  D' = G^{-1/2} D
//
// Every scheme re-normalizes its output rows; the norms seen just before that
// final step are kept in ConditionedSet::pre_normalization_norms.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "traitgeo/directions.hpp"

namespace traitgeo {

enum class Scheme { C0, C1, C2, C3, C4, C5 };

std::string_view scheme_name(Scheme s);          // "C0" .. "C5"
std::optional<Scheme> parse_scheme(std::string_view text);  // case-insensitive

inline constexpr double kDefaultGamma = 0.5;
inline constexpr double kDefaultTau = 0.5;
inline constexpr double kDefaultBeta = 0.5;
inline constexpr double kDefaultEigFloor = 1e-10;

struct ConditioningSpec {
  Scheme scheme = Scheme::C0;
  std::optional<double> gamma = {};   // C1
  std::optional<double> tau = {};     // C3, C4
  std::optional<double> beta = {};    // C4
  std::vector<std::size_t> order = {};  // C2-C4; empty means canonical

  /// Compact "key=value;..." rendering of the parameters that apply to `scheme`.
  std::string params_string() const;
};

struct GramMatrix {
  Eigen::MatrixXd values;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

struct ConditionedSet {
  DirectionSet directions;
  ConditioningSpec spec;
  std::vector<double> pre_normalization_norms;
  /// Projections that fired during a C2-C4 sweep (0 for the global schemes).
  std::size_t projections_applied = 0;
};

GramMatrix gram(const DirectionSet& set);

/// Symmetric inverse square root of a symmetric PSD matrix via eigendecomposition.
/// Throws NotSymmetric when |m - m^T| exceeds 1e-10 (scaled by max|m| when that is
/// above 1), RankDeficient when an eigenvalue falls below eig_floor * lambda_max.
Eigen::MatrixXd inv_sqrt_psd(const Eigen::MatrixXd& m, double eig_floor = kDefaultEigFloor);

ConditionedSet condition_c0(const DirectionSet& set);
ConditionedSet condition_c1(const DirectionSet& set, double gamma);
ConditionedSet condition_c2(const DirectionSet& set, std::span<const std::size_t> order = {});
ConditionedSet condition_c3(const DirectionSet& set, double tau,
                            std::span<const std::size_t> order = {});
ConditionedSet condition_c4(const DirectionSet& set, double beta, double tau,
                            std::span<const std::size_t> order = {});
ConditionedSet condition_c5(const DirectionSet& set);

/// Dispatch on spec.scheme. Throws MissingParameter when a required parameter is
/// absent, InvalidParameter when one is out of range or the order is not a
/// permutation.
ConditionedSet apply_condition(const DirectionSet& set, const ConditioningSpec& spec);

/// Left-multiply the stacked rows by a C x C matrix: out_i = sum_j m(i,j) row_j.
std::vector<double> mix_rows(const Eigen::MatrixXd& m, const DirectionSet& set);

}  // namespace traitgeo
