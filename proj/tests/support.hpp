#pragma once

// Helpers shared by the unit and acceptance tests: seeded random direction
// sets, independent numerical oracles and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "traitgeo/directions.hpp"
#include "traitgeo/error.hpp"

namespace testsupport {

inline std::vector<std::string> trait_labels(std::size_t c) {
  static const char* canonical[] = {"Openness", "Conscientiousness", "Extraversion", "Agreeableness",
                                    "Neuroticism"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < c; ++i) out.push_back(c == 5 ? canonical[i] : "T" + std::to_string(i));
  return out;
}

inline traitgeo::DirectionSet from_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return traitgeo::DirectionSet(trait_labels(rows.size()), rows.front().size(), flat);
}

/// Gaussian rows, unit-normalized, optionally pulled toward a shared vector so
/// the set is visibly non-orthogonal.
inline traitgeo::DirectionSet random_set(std::size_t c, std::size_t d, std::uint64_t seed,
                                         double shared = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> common(d);
  for (auto& v : common) v = n01(rng);
  std::vector<double> flat(c * d);
  for (std::size_t i = 0; i < c; ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      flat[i * d + k] = n01(rng) + shared * common[k];
      norm += flat[i * d + k] * flat[i * d + k];
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < d; ++k) flat[i * d + k] /= norm;
  }
  return traitgeo::DirectionSet(trait_labels(c), d, flat);
}

inline Eigen::MatrixXd to_eigen(const traitgeo::DirectionSet& s) {
  Eigen::MatrixXd m(s.traits(), s.dim());
  for (std::size_t i = 0; i < s.traits(); ++i)
    for (std::size_t k = 0; k < s.dim(); ++k) m(i, k) = s(i, k);
  return m;
}

inline double max_abs_diff(const traitgeo::DirectionSet& a, const traitgeo::DirectionSet& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Max row sum of |D D^T - I|.
inline double orthonormality_error(const traitgeo::DirectionSet& s) {
  const Eigen::MatrixXd m = to_eigen(s);
  const Eigen::MatrixXd e = m * m.transpose() - Eigen::MatrixXd::Identity(m.rows(), m.rows());
  return e.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Löwdin oracle: for D = U S V^T (thin SVD), G^{-1/2} D = U V^T.
inline Eigen::MatrixXd lowdin_oracle(const traitgeo::DirectionSet& s) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(s), Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Gram-Schmidt oracle via Householder QR of the transposed rows taken in
/// `order`, with column signs fixed so R has a positive diagonal.
inline Eigen::MatrixXd gram_schmidt_oracle(const traitgeo::DirectionSet& s,
                                           const std::vector<std::size_t>& order) {
  const Eigen::MatrixXd m = to_eigen(s);
  Eigen::MatrixXd cols(m.cols(), m.rows());
  for (std::size_t k = 0; k < order.size(); ++k) cols.col(k) = m.row(order[k]).transpose();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(cols);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.cols(), m.rows());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m.rows()).triangularView<Eigen::Upper>();
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double sign = r(k, k) < 0 ? -1.0 : 1.0;
    out.row(order[k]) = sign * q.col(k).transpose();
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("traitgeo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path data_path(const std::string& file) {
  return std::filesystem::path(TRAITGEO_TEST_DATA_DIR) / file;
}

}  // namespace testsupport

// CHECK that `expr` throws traitgeo::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                      \
  do {                                                             \
    bool thrown_ = false;                                          \
    try {                                                          \
      (void)(expr);                                                \
    } catch (const traitgeo::Error& e_) {                          \
      thrown_ = true;                                              \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());      \
    }                                                              \
    CHECK_MESSAGE(thrown_, "expected traitgeo::Error from " #expr); \
  } while (0)
