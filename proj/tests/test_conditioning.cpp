#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "traitgeo/conditioning.hpp"
#include "traitgeo/diagnostics.hpp"

using namespace traitgeo;
using testsupport::from_rows;
using testsupport::max_abs_diff;
using testsupport::random_set;
using testsupport::to_eigen;

namespace {

const double kSqrt3Half = 0.8660254037844386;

DirectionSet toy60() { return from_rows({{1, 0}, {0.5, kSqrt3Half}}); }

// Rows with planted pairwise cosines (0,1)=0.7, (0,2)=0.3, (1,2)=0.2 via the
// Cholesky factor of the target Gram matrix.
DirectionSet planted_three() {
  Eigen::Matrix3d g;
  g << 1, 0.7, 0.3, 0.7, 1, 0.2, 0.3, 0.2, 1;
  const Eigen::Matrix3d l = g.llt().matrixL();
  return from_rows({{l(0, 0), l(0, 1), l(0, 2), 0},
                    {l(1, 0), l(1, 1), l(1, 2), 0},
                    {l(2, 0), l(2, 1), l(2, 2), 0}});
}

double span_residual(const DirectionSet& original, const DirectionSet& out) {
  const Eigen::MatrixXd o = to_eigen(out);
  const Eigen::MatrixXd x = to_eigen(original);
  // Orthonormal basis of the output span, then residual of each original row.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(o.transpose());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(o.cols(), o.rows());
  const Eigen::MatrixXd proj = x * q * q.transpose();
  return (x - proj).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("gram") {
  const auto g = gram(toy60());
  CHECK(g(0, 0) == doctest::Approx(1.0));
  CHECK(g(0, 1) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(g(1, 0) == g(0, 1));
  CHECK(max_abs_diff(gram(from_rows({{1, 0, 0}, {0, 0, 1}})).values, Eigen::MatrixXd::Identity(2, 2)) == 0.0);
  CHECK(gram(from_rows({{0.6, 0.8}})).values(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("inv_sqrt_psd against the closed-form 2x2 oracle") {
  CHECK(max_abs_diff(inv_sqrt_psd(Eigen::MatrixXd::Identity(3, 3)), Eigen::MatrixXd::Identity(3, 3)) < 1e-14);

  Eigen::MatrixXd m(2, 2);
  m << 1, 0.5, 0.5, 1;
  const double a = 1 / std::sqrt(1.5), b = 1 / std::sqrt(0.5);
  const Eigen::MatrixXd s = inv_sqrt_psd(m);
  CHECK(s(0, 0) == doctest::Approx((a + b) / 2).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx((a - b) / 2).epsilon(1e-12));
  CHECK(s(0, 0) == doctest::Approx(1.11536).epsilon(1e-4));
  CHECK(s(0, 1) == doctest::Approx(-0.29886).epsilon(1e-4));
  CHECK(max_abs_diff(s * s * m, Eigen::MatrixXd::Identity(2, 2)) < 1e-8);

  Eigen::MatrixXd r(2, 2);
  r << 1, 1, 1, 1;
  CHECK_ERROR_KIND(inv_sqrt_psd(r), ErrorKind::RankDeficient);
  Eigen::MatrixXd ns(2, 2);
  ns << 1, 0.5, 0.4, 1;
  CHECK_ERROR_KIND(inv_sqrt_psd(ns), ErrorKind::NotSymmetric);
}

TEST_CASE("C0 is the identity") {
  const auto s = random_set(5, 12, 3);
  const auto c = condition_c0(s);
  for (std::size_t i = 0; i < s.values().size(); ++i) CHECK(c.directions.values()[i] == s.values()[i]);
  for (double n : c.pre_normalization_norms) CHECK(n == 1.0);
  CHECK(max_abs_diff(gram(c.directions).values, gram(s).values) == 0.0);
  CHECK(c.spec.scheme == Scheme::C0);
}

TEST_CASE("C1 limits and shrinkage") {
  const auto s = random_set(5, 20, 4);
  CHECK(max_abs_diff(condition_c1(s, 1.0).directions, s) < 1e-10);
  CHECK(max_abs_diff(condition_c1(s, 0.0).directions, condition_c5(s).directions) < 1e-8);

  const double cos_half = max_offdiag_abs_cos(condition_c1(toy60(), 0.5).directions);
  CHECK(cos_half > 0.0);
  CHECK(cos_half < 0.5);

  // Monotone shrinkage as gamma decreases.
  double previous = 2.0;
  for (double gamma : {1.0, 0.75, 0.5, 0.25, 0.0}) {
    const double c = max_offdiag_abs_cos(condition_c1(s, gamma).directions);
    CHECK(c <= previous + 1e-12);
    previous = c;
  }
  CHECK_ERROR_KIND(condition_c1(from_rows({{1, 0}, {1, 0}}), 0.0), ErrorKind::RankDeficient);
  CHECK_ERROR_KIND(condition_c1(s, 1.5), ErrorKind::InvalidParameter);
}

TEST_CASE("C2 Gram-Schmidt is order dependent") {
  const std::vector<std::size_t> fwd{0, 1}, rev{1, 0};
  const auto a = condition_c2(toy60(), fwd).directions;
  CHECK(a(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(a(1, 0)) < 1e-12);
  CHECK(a(1, 1) == doctest::Approx(1.0));

  const auto b = condition_c2(toy60(), rev).directions;
  CHECK(b(1, 0) == doctest::Approx(0.5));
  CHECK(b(1, 1) == doctest::Approx(kSqrt3Half));
  CHECK(b(0, 0) == doctest::Approx(kSqrt3Half));
  CHECK(b(0, 1) == doctest::Approx(-0.5));
  CHECK(max_abs_diff(a, b) > 0.1);

  CHECK_ERROR_KIND(condition_c2(from_rows({{1, 0, 0}, {1, 0, 0}})), ErrorKind::RankDeficient);
}

TEST_CASE("C2 matches the Householder QR oracle for random orders") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = random_set(5, 9, 100 + seed);
    std::vector<std::size_t> order{0, 1, 2, 3, 4};
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto out = condition_c2(s, order).directions;
    CHECK(max_abs_diff(to_eigen(out), testsupport::gram_schmidt_oracle(s, order)) < 1e-10);
    CHECK(testsupport::orthonormality_error(out) < 1e-8);
  }
}

TEST_CASE("C3 thresholded projections") {
  const auto s = random_set(4, 10, 5);
  CHECK(max_abs_diff(condition_c3(s, 1.0).directions, s) < 1e-15);
  CHECK(max_abs_diff(condition_c3(s, 0.0).directions, condition_c2(s).directions) < 1e-10);

  const auto planted = planted_three();
  const auto g = gram(planted);
  CHECK(g(0, 1) == doctest::Approx(0.7));
  CHECK(g(0, 2) == doctest::Approx(0.3));
  CHECK(g(1, 2) == doctest::Approx(0.2));
  const auto c3 = condition_c3(planted, 0.5);
  CHECK(c3.projections_applied == 1);
  CHECK(std::abs(gram(c3.directions)(0, 1)) < 1e-12);
}

TEST_CASE("C4 soft projection") {
  const auto s = random_set(5, 10, 6);
  CHECK(max_abs_diff(condition_c4(s, 1.0, 0.5).directions, condition_c3(s, 0.5).directions) < 1e-12);
  CHECK(max_abs_diff(condition_c4(s, 0.0, 0.5).directions, s) < 1e-15);

  const auto out = condition_c4(toy60(), 0.5, 0.4).directions;
  // Hand computation: normalize((0.5, 0.866) - 0.25 (1, 0)).
  const double hx = 0.25, hy = kSqrt3Half, hn = std::hypot(hx, hy);
  CHECK(out(1, 0) == doctest::Approx(hx / hn).epsilon(1e-12));
  CHECK(out(1, 1) == doctest::Approx(hy / hn).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(0.27735).epsilon(1e-5));
  CHECK(out(1, 1) == doctest::Approx(0.96077).epsilon(1e-5));
  CHECK(gram(out)(0, 1) == doctest::Approx(0.27735).epsilon(1e-5));
  CHECK(out(0, 0) == 1.0);
}

TEST_CASE("C5 Löwdin orthonormalization") {
  const auto out = condition_c5(toy60()).directions;
  CHECK(out(0, 0) == doctest::Approx(0.96593).epsilon(1e-4));
  CHECK(out(0, 1) == doctest::Approx(-0.25882).epsilon(1e-4));
  CHECK(out(1, 0) == doctest::Approx(0.25882).epsilon(1e-4));
  CHECK(out(1, 1) == doctest::Approx(0.96593).epsilon(1e-4));

  const auto ortho = from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
  CHECK(max_abs_diff(condition_c5(ortho).directions, ortho) < 1e-10);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_set(5, 64, 200 + seed);
    const auto c5 = condition_c5(s);
    CHECK(max_offdiag_abs_cos(c5.directions) < 1e-8);
    CHECK(testsupport::orthonormality_error(c5.directions) < 1e-8);
    CHECK(max_abs_diff(to_eigen(c5.directions), testsupport::lowdin_oracle(s)) < 1e-9);
  }
  CHECK_ERROR_KIND(condition_c5(from_rows({{1, 0, 0}, {1, 0, 0}})), ErrorKind::RankDeficient);
}

TEST_CASE("span preservation for C2, C3(tau=0) and C5") {
  const auto s = random_set(4, 9, 7);
  CHECK(span_residual(s, condition_c2(s).directions) < 1e-8);
  CHECK(span_residual(s, condition_c3(s, 0.0).directions) < 1e-8);
  CHECK(span_residual(s, condition_c5(s).directions) < 1e-8);
}

TEST_CASE("pre-normalization norms are recorded") {
  const auto c4 = condition_c4(toy60(), 0.5, 0.4);
  CHECK(c4.pre_normalization_norms[0] == doctest::Approx(1.0));
  CHECK(c4.pre_normalization_norms[1] == doctest::Approx(std::hypot(0.25, kSqrt3Half)));
  const auto c2 = condition_c2(toy60());
  CHECK(c2.pre_normalization_norms[1] == doctest::Approx(kSqrt3Half));
  CHECK(c2.directions.normalized());
}

TEST_CASE("apply_condition dispatch and validation") {
  const auto s = toy60();
  CHECK(max_abs_diff(apply_condition(s, {Scheme::C5}).directions, condition_c5(s).directions) == 0.0);
  CHECK_ERROR_KIND(apply_condition(s, {Scheme::C1}), ErrorKind::MissingParameter);
  CHECK_ERROR_KIND(apply_condition(s, {Scheme::C3}), ErrorKind::MissingParameter);

  ConditioningSpec c4{Scheme::C4};
  c4.beta = kDefaultBeta;
  c4.tau = kDefaultTau;
  CHECK(c4.beta == 0.5);
  CHECK(c4.tau == 0.5);
  const auto out = apply_condition(random_set(5, 16, 8), c4);
  CHECK(out.spec.params_string() == "tau=0.5;beta=0.5");

  ConditioningSpec bad{Scheme::C2};
  bad.order = {0, 0};
  CHECK_ERROR_KIND(apply_condition(s, bad), ErrorKind::InvalidParameter);
  CHECK_ERROR_KIND(condition_c5(from_rows({{3, 4}, {0, 1}})), ErrorKind::InvalidParameter);

  CHECK(parse_scheme("c3") == Scheme::C3);
  CHECK(parse_scheme("C5") == Scheme::C5);
  CHECK_FALSE(parse_scheme("c6").has_value());
  CHECK(scheme_name(Scheme::C1) == "C1");
}
