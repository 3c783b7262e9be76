#include <doctest.h>

#include "support.hpp"
#include "traitgeo/conditioning.hpp"
#include "traitgeo/diagnostics.hpp"
#include "traitgeo/kernels.hpp"
#include "traitgeo/steersim.hpp"

using namespace traitgeo;
using namespace traitgeo::sim;

namespace {

WorldConfig base_config(double rho = 0.0, std::uint64_t seed = 1) {
  WorldConfig cfg;
  cfg.trait_count = 5;
  cfg.dim = 32;
  cfg.layer_count = 3;
  if (rho != 0.0) cfg.trait_correlation = uniform_correlation(5, rho);
  cfg.seed = seed;
  return cfg;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  return kernels::dot(a, b) / std::sqrt(kernels::squared_norm(a) * kernels::squared_norm(b));
}

ConditionedSet exact(const SyntheticWorld& w) { return condition_c0(w.true_axes()); }

}  // namespace

TEST_CASE("make_world plants the correlation") {
  const auto w = make_world(base_config());
  CHECK(testsupport::orthonormality_error(w.true_axes()) < 1e-9);

  auto cfg = base_config();
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(5, 5);
  r(0, 1) = r(1, 0) = 0.6;
  cfg.trait_correlation = r;
  const auto g = gram(make_world(cfg).true_axes());
  CHECK(std::abs(g(0, 1) - 0.6) < 1e-9);
  CHECK(std::abs(g(2, 3)) < 1e-9);

  r(0, 1) = r(1, 0) = 1.2;
  cfg.trait_correlation = r;
  CHECK_ERROR_KIND(make_world(cfg), ErrorKind::BadCorrelation);
  r(0, 1) = 0.3;
  cfg.trait_correlation = r;
  CHECK_ERROR_KIND(make_world(cfg), ErrorKind::BadCorrelation);

  const auto a = make_world(base_config(0.3, 9)), b = make_world(base_config(0.3, 9));
  CHECK(testsupport::max_abs_diff(a.true_axes(), b.true_axes()) == 0.0);
}

TEST_CASE("labelled activations") {
  auto cfg = base_config();
  const auto w = make_world(cfg);
  const auto hi = sample_labeled_activations(w, 2, Level::High, 1, 1);
  const auto lo = sample_labeled_activations(w, 2, Level::Low, 1, 1);
  for (std::size_t k = 0; k < w.dim(); ++k)
    CHECK(hi(0, k) - lo(0, k) == doctest::Approx(2.0 * w.true_axes()(2, k)).epsilon(1e-12));

  cfg.estimation_noise_sigma = 0.5;
  const auto noisy = make_world(cfg);
  const std::size_t n = 10000;
  const auto many = sample_labeled_activations(noisy, 0, Level::High, n, 0);
  for (std::size_t k = 0; k < noisy.dim(); ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += many(i, k);
    mean /= n;
    const double expected = noisy.layer_base(0)[k] + noisy.true_axes()(0, k);
    CHECK(std::abs(mean - expected) <= 3 * 0.5 / std::sqrt(double(n)) * 1.5);
  }

  auto other = cfg;
  other.seed = 2;
  const auto x = sample_labeled_activations(noisy, 0, Level::High, 2, 0);
  const auto y = sample_labeled_activations(make_world(other), 0, Level::High, 2, 0);
  CHECK(x.data != y.data);
}

TEST_CASE("difference-of-means estimation") {
  auto cfg = base_config(0.3);
  const auto exact_world = make_world(cfg);
  const auto est = estimate_directions_diff_means(exact_world, 2);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(cosine(est.directions.row(t), exact_world.true_axes().row(t)) >= 1 - 1e-10);
  for (std::size_t t = 0; t < 5; ++t) {
    double sum = 0.0;
    for (std::size_t l = 0; l < est.layers.size(); ++l) sum += est.layer_weights(t, l);
    CHECK(sum == doctest::Approx(1.0));
  }

  cfg.estimation_noise_sigma = 3.0;
  const auto noisy = make_world(cfg);
  const auto rough = estimate_directions_diff_means(noisy, 4);
  CHECK(cosine(rough.directions.row(0), noisy.true_axes().row(0)) < 0.9);
  CHECK_ERROR_KIND(estimate_directions_diff_means(noisy, 1), ErrorKind::InvalidParameter);

  cfg.weighting = LayerWeighting::Uniform;
  cfg.estimation_noise_sigma = 0.0;
  const auto uni = estimate_directions_diff_means(make_world(cfg), 2);
  CHECK(uni.layer_weights(0, 0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("layer sensitivity and selection") {
  auto cfg = base_config();
  cfg.per_layer_gain = {0.1, 1.0, 0.1};
  const auto w = make_world(cfg);
  const auto d = w.true_axes().row(0);
  std::vector<double> s;
  for (std::size_t l = 0; l < 3; ++l) s.push_back(layer_sensitivity(w, d, l, 0.01, 8));
  CHECK(s[1] > s[0]);
  CHECK(s[1] > s[2]);
  CHECK(select_prior_layer(w, d) == 1);
  CHECK(layer_sensitivity(w, d, 1, 0.0, 8) == 0.0);

  cfg.per_layer_gain = {0.0, 1.0, 1.0};
  CHECK(layer_sensitivity(make_world(cfg), d, 0, 0.01, 8) == 0.0);

  cfg.per_layer_gain = {1.0, 1.0, 1.0};
  CHECK(select_prior_layer(make_world(cfg), d) == 0);

  auto single = base_config();
  single.layer_count = 1;
  CHECK(select_prior_layer(make_world(single), d) == 0);
}

TEST_CASE("dynamic layer check") {
  auto cfg = base_config();
  cfg.per_layer_gain = {1.0, 1.0, 1.0};
  const auto w = make_world(cfg);
  const auto d = w.true_axes().row(1);
  const auto probe = neutral_probe(w, 0);
  CHECK(dynamic_layer_check(w, d, probe, 1, 0) == 1);
  CHECK(dynamic_layer_check(w, d, probe, 2, 5) <= 2);

  // Prompt state orthogonal to the readout at layer 0, aligned with it at layer 1.
  const auto u = w.prompt_readout();
  PromptState p{RowMatrix(3, w.dim())};
  std::vector<double> ortho(w.dim(), 0.0);
  ortho[0] = 1.0;
  kernels::axpy(-u[0] / kernels::squared_norm(u), u, ortho);
  CHECK(std::abs(kernels::dot(ortho, u)) < 1e-12);
  std::copy(ortho.begin(), ortho.end(), p.layers.row(0).begin());
  std::copy(u.begin(), u.end(), p.layers.row(1).begin());
  std::copy(ortho.begin(), ortho.end(), p.layers.row(2).begin());
  CHECK(prompt_sensitivity(w, d, p, 0, 0.01) == 0.0);
  CHECK(dynamic_layer_check(w, d, p, 0, 1) == 1);
  CHECK(dynamic_layer_check(w, d, p, 0, 0) == 0);
}

TEST_CASE("steer_and_score") {
  auto cfg = base_config();
  const auto w = make_world(cfg);
  const auto c = exact(w);
  const auto base = steer_and_score(w, c, 0, Polarity::Base, 1.0, 0);
  const auto zero = steer_and_score(w, c, 0, Polarity::Positive, 0.0, 0);
  CHECK(base.score == zero.score);
  for (double s : base.score) CHECK(s == 3.0);

  const auto pos = steer_and_score(w, c, 0, Polarity::Positive, 1e-3, 0);
  for (std::size_t j = 1; j < 5; ++j) CHECK(std::abs(pos.raw[j]) < 1e-9);

  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(5, 5);
  r(0, 1) = r(1, 0) = 0.6;
  cfg.trait_correlation = r;
  const auto wc = make_world(cfg);
  const auto s = steer_and_score(wc, exact(wc), 0, Polarity::Positive, 1e-3, 0);
  CHECK(std::abs(s.raw[1] / s.raw[0] - 0.6) < 1e-9);
}

TEST_CASE("simulate_bleed closed form and properties") {
  const auto w = make_world(base_config(0.4, 3));
  const auto c5 = condition_c5(w.true_axes());
  const double intensity = 1e-4;
  const auto m = simulate_bleed(w, c5, intensity);
  const auto layers = selected_layers(w, c5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double slope = w.gain(layers[i]) * 2.0 * w.config().readout_scale / w.config().raw_scale;
      const double oracle = 2 * intensity * slope * kernels::dot(c5.directions.row(i), w.true_axes().row(j));
      CHECK(std::abs(m(i, j) - oracle) < 1e-9);
    }

  const auto doubled = simulate_bleed(w, c5, 2 * intensity);
  for (std::size_t i = 0; i < 25; ++i) CHECK(std::abs(doubled.values()[i] - 2 * m.values()[i]) < 1e-9);

  const auto identity_world = make_world(base_config(0.0, 3));
  const auto diag = simulate_bleed(identity_world, exact(identity_world), intensity);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) CHECK(std::abs(diag(i, j)) < 1e-9);

  const auto c0 = simulate_bleed(w, exact(w), intensity);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) CHECK(std::abs(c0(i, j) / c0(i, i) - 0.4) < 1e-6);

  // C5 changes the off-diagonals but they stay well away from zero.
  CHECK(max_offdiag_abs_cos(c5.directions) < 1e-8);
  CHECK(std::abs(m(0, 1) - c0(0, 1)) > 1e-7);
  CHECK(m(0, 1) > 0.1 * m(0, 0));
}

TEST_CASE("world config JSON") {
  nlohmann::json doc = {{"trait_count", 3}, {"dim", 8},   {"layer_count", 2},
                        {"uniform_correlation", 0.2}, {"seed", 5}, {"layer_weighting", "gain"}};
  const auto cfg = world_config_from_json(doc);
  CHECK(cfg.trait_count == 3);
  CHECK(cfg.trait_correlation(0, 2) == doctest::Approx(0.2));
  CHECK(cfg.weighting == LayerWeighting::Gain);
  const auto again = world_config_from_json(world_config_to_json(cfg));
  CHECK(again.seed == 5);
  CHECK(again.trait_names == cfg.trait_names);
  CHECK(make_world(again).traits() == 3);

  doc["layer_weighting"] = "loudest";
  CHECK_ERROR_KIND(world_config_from_json(doc), ErrorKind::ParseError);
  nlohmann::json bad = {{"trait_count", 3}, {"dim", 8}, {"vocab_size", 1}};
  CHECK_THROWS_AS(make_world(world_config_from_json(bad)), Error);
}
