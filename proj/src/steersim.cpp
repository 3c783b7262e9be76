#include "traitgeo/steersim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>

#include <fmt/format.h>

#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"
#include "traitgeo/kernels.hpp"
#include "traitgeo/traits.hpp"

namespace traitgeo::sim {

namespace {

// Independent random streams per (seed, purpose, ids), so that the order in
// which parts of the world are generated never changes any of them.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::string_view tag,
                       std::initializer_list<std::uint64_t> ids = {}) {
  std::uint64_t h = splitmix64(seed);
  for (char c : tag) h = splitmix64(h ^ static_cast<unsigned char>(c));
  for (std::uint64_t id : ids) h = splitmix64(h ^ id);
  return std::mt19937_64(h);
}

void fill_gaussian(std::mt19937_64& rng, std::span<double> out, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  for (double& v : out) v = n(rng);
}

std::vector<std::string> default_names(std::size_t c) {
  if (c == kCanonicalTraits.size()) return canonical_trait_names();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i) names.push_back("T" + std::to_string(i));
  return names;
}

void check_layer(const SyntheticWorld& world, std::size_t layer) {
  if (layer >= world.layers()) {
    throw Error(ErrorKind::InvalidParameter,
                fmt::format("layer {} is outside 0..{}", layer, world.layers() - 1));
  }
}

void check_direction(const SyntheticWorld& world, std::span<const double> d) {
  if (d.size() != world.dim()) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("direction has {} entries, world dim is {}", d.size(), world.dim()));
  }
}

std::vector<double> softmax(std::vector<double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

std::vector<double> readout_logits(const SyntheticWorld& world, std::span<const double> h) {
  const RowMatrix& w = world.token_readout();
  std::vector<double> logits(w.rows);
  for (std::size_t v = 0; v < w.rows; ++v) logits[v] = kernels::dot(w.row(v), h);
  return logits;
}

double engagement(const SyntheticWorld& world, std::span<const double> state) {
  const double n = std::sqrt(kernels::squared_norm(state));
  if (n == 0.0) return 0.0;
  return std::abs(kernels::dot(world.prompt_readout(), state)) / n;
}

template <class F>
void for_each_sample(const SyntheticWorld& world, std::size_t trait, Level level, std::size_t n,
                     std::size_t layer, F&& consume) {
  const auto& cfg = world.config();
  const double sign = level == Level::High ? 1.0 : -1.0;
  auto rng = stream(cfg.seed, "activations",
                    {trait, level == Level::High ? 1u : 0u, static_cast<std::uint64_t>(layer)});
  std::vector<double> sample(world.dim());
  std::vector<double> noise(world.dim());
  for (std::size_t k = 0; k < n; ++k) {
    std::copy(world.layer_base(layer).begin(), world.layer_base(layer).end(), sample.begin());
    kernels::axpy(sign * cfg.axis_strength, world.true_axes().row(trait), sample);
    if (cfg.estimation_noise_sigma > 0.0) {
      fill_gaussian(rng, noise, cfg.estimation_noise_sigma);
      kernels::axpy(1.0, noise, sample);
    }
    consume(std::span<const double>(sample));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

Eigen::MatrixXd uniform_correlation(std::size_t c, double rho) {
  const auto n = static_cast<Eigen::Index>(c);
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(n, n, rho);
  r.diagonal().setOnes();
  return r;
}

WorldConfig resolve_config(WorldConfig cfg) {
  auto bad = [](const std::string& what) { return Error(ErrorKind::InvalidParameter, what); };
  if (cfg.trait_count < 1) throw bad("trait_count must be >= 1");
  if (cfg.dim < cfg.trait_count) throw bad("dim must be >= trait_count");
  if (cfg.layer_count < 1) throw bad("layer_count must be >= 1");
  if (cfg.vocab_size < 2) throw bad("vocab_size must be >= 2");
  if (!(cfg.estimation_noise_sigma >= 0.0)) throw bad("estimation_noise_sigma must be >= 0");
  if (!(cfg.raw_scale > 0.0)) throw bad("raw_scale must be > 0");
  if (!(cfg.probe_intensity > 0.0)) throw bad("probe_intensity must be > 0");
  if (cfg.n_probes < 1) throw bad("n_probes must be >= 1");
  if (!std::isfinite(cfg.axis_strength) || !std::isfinite(cfg.readout_scale)) {
    throw bad("axis_strength and readout_scale must be finite");
  }

  if (cfg.per_layer_gain.empty()) cfg.per_layer_gain.assign(cfg.layer_count, 1.0);
  if (cfg.per_layer_gain.size() != cfg.layer_count) {
    throw bad(fmt::format("per_layer_gain has {} entries for {} layers", cfg.per_layer_gain.size(),
                          cfg.layer_count));
  }
  for (double g : cfg.per_layer_gain) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw bad("per_layer_gain entries must be finite and >= 0");
  }
  if (cfg.trait_names.empty()) cfg.trait_names = default_names(cfg.trait_count);
  if (cfg.trait_names.size() != cfg.trait_count) throw bad("trait_names length differs from trait_count");

  const auto c = static_cast<Eigen::Index>(cfg.trait_count);
  if (cfg.trait_correlation.size() == 0) cfg.trait_correlation = Eigen::MatrixXd::Identity(c, c);
  const Eigen::MatrixXd& r = cfg.trait_correlation;
  if (r.rows() != c || r.cols() != c) {
    throw Error(ErrorKind::BadCorrelation, fmt::format("trait_correlation must be {}x{}", c, c));
  }
  if (!r.allFinite() || (r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      (r.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw Error(ErrorKind::BadCorrelation, "trait_correlation must be symmetric with unit diagonal");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues()(0) <= 1e-12) {
    throw Error(ErrorKind::BadCorrelation, "trait_correlation is not positive definite");
  }
  return cfg;
}

namespace {

template <class T>
void read_opt(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

WorldConfig world_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::ParseError, "world config must be a JSON object");
  WorldConfig cfg;
  try {
    read_opt(doc, "trait_count", cfg.trait_count);
    read_opt(doc, "dim", cfg.dim);
    read_opt(doc, "layer_count", cfg.layer_count);
    read_opt(doc, "estimation_noise_sigma", cfg.estimation_noise_sigma);
    read_opt(doc, "per_layer_gain", cfg.per_layer_gain);
    read_opt(doc, "vocab_size", cfg.vocab_size);
    read_opt(doc, "seed", cfg.seed);
    read_opt(doc, "trait_names", cfg.trait_names);
    read_opt(doc, "axis_strength", cfg.axis_strength);
    read_opt(doc, "readout_scale", cfg.readout_scale);
    read_opt(doc, "raw_scale", cfg.raw_scale);
    read_opt(doc, "n_per_level", cfg.n_per_level);
    read_opt(doc, "n_probes", cfg.n_probes);
    read_opt(doc, "probe_intensity", cfg.probe_intensity);
    read_opt(doc, "layer_window", cfg.layer_window);
    if (doc.contains("layer_weighting")) {
      const auto w = doc.at("layer_weighting").get<std::string>();
      if (w == "sensitivity") cfg.weighting = LayerWeighting::Sensitivity;
      else if (w == "gain") cfg.weighting = LayerWeighting::Gain;
      else if (w == "uniform") cfg.weighting = LayerWeighting::Uniform;
      else throw Error(ErrorKind::ParseError, "layer_weighting must be sensitivity, gain or uniform");
    }
    if (doc.contains("trait_correlation") && doc.contains("uniform_correlation")) {
      throw Error(ErrorKind::ParseError, "give trait_correlation or uniform_correlation, not both");
    }
    if (doc.contains("trait_correlation")) {
      const auto rows = doc.at("trait_correlation").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd r(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) {
          throw Error(ErrorKind::BadCorrelation, "trait_correlation must be square");
        }
        for (std::size_t j = 0; j < rows.size(); ++j) {
          r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
      }
      cfg.trait_correlation = std::move(r);
    }
    if (doc.contains("uniform_correlation")) {
      cfg.trait_correlation = uniform_correlation(cfg.trait_count, doc.at("uniform_correlation").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("world config: ") + e.what());
  }
  return resolve_config(std::move(cfg));
}

WorldConfig load_world_config(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return world_config_from_json(doc);
}

nlohmann::json world_config_to_json(const WorldConfig& cfg) {
  std::vector<std::vector<double>> r;
  for (Eigen::Index i = 0; i < cfg.trait_correlation.rows(); ++i) {
    r.emplace_back();
    for (Eigen::Index j = 0; j < cfg.trait_correlation.cols(); ++j) r.back().push_back(cfg.trait_correlation(i, j));
  }
  const char* weighting = cfg.weighting == LayerWeighting::Sensitivity ? "sensitivity"
                          : cfg.weighting == LayerWeighting::Gain      ? "gain"
                                                                       : "uniform";
  return {{"trait_count", cfg.trait_count},
          {"dim", cfg.dim},
          {"layer_count", cfg.layer_count},
          {"trait_correlation", r},
          {"estimation_noise_sigma", cfg.estimation_noise_sigma},
          {"per_layer_gain", cfg.per_layer_gain},
          {"vocab_size", cfg.vocab_size},
          {"seed", cfg.seed},
          {"trait_names", cfg.trait_names},
          {"axis_strength", cfg.axis_strength},
          {"readout_scale", cfg.readout_scale},
          {"raw_scale", cfg.raw_scale},
          {"n_per_level", cfg.n_per_level},
          {"n_probes", cfg.n_probes},
          {"probe_intensity", cfg.probe_intensity},
          {"layer_window", cfg.layer_window},
          {"layer_weighting", weighting}};
}

// ---------------------------------------------------------------------------
// world construction

double SyntheticWorld::response_slope(std::size_t layer) const {
  return gain(layer) * config_.readout_scale * 2.0 / config_.raw_scale;
}

SyntheticWorld make_world(const WorldConfig& config) {
  WorldConfig cfg = resolve_config(config);
  const std::size_t c = cfg.trait_count;
  const std::size_t d = cfg.dim;

  // A = chol(R) * Q^T with Q a random D x C matrix of orthonormal columns.
  auto frame_rng = stream(cfg.seed, "axes-frame");
  Eigen::MatrixXd gaussian(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));
  fill_gaussian(frame_rng, std::span<double>(gaussian.data(), d * c), 1.0);
  const Eigen::MatrixXd q =
      gaussian.householderQr().householderQ() * Eigen::MatrixXd::Identity(gaussian.rows(), gaussian.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(cfg.trait_correlation);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::BadCorrelation, "Cholesky factorization of trait_correlation failed");
  }
  const Eigen::MatrixXd axes = Eigen::MatrixXd(llt.matrixL()) * q.transpose();
  std::vector<double> axis_values(c * d);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      axis_values[i * d + j] = axes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  DirectionSet axis_set(cfg.trait_names, d, std::move(axis_values), {{"source", "synthetic-world"}});

  SyntheticWorld world(cfg, std::move(axis_set));

  world.token_readout_ = RowMatrix(cfg.vocab_size, d);
  auto w_rng = stream(cfg.seed, "token-readout");
  fill_gaussian(w_rng, world.token_readout_.data, 1.0 / std::sqrt(static_cast<double>(d)));

  world.prompt_readout_.resize(d);
  auto u_rng = stream(cfg.seed, "prompt-readout");
  fill_gaussian(u_rng, world.prompt_readout_, 1.0);
  kernels::scale(1.0 / std::sqrt(kernels::squared_norm(world.prompt_readout_)), world.prompt_readout_);

  world.layer_base_ = RowMatrix(cfg.layer_count, d);
  for (std::size_t l = 0; l < cfg.layer_count; ++l) {
    auto b_rng = stream(cfg.seed, "layer-base", {l});
    fill_gaussian(b_rng, world.layer_base_.row(l), 1.0);
  }
  return world;
}

// ---------------------------------------------------------------------------
// labelled activations and direction estimation

RowMatrix sample_labeled_activations(const SyntheticWorld& world, std::size_t trait, Level level,
                                     std::size_t n, std::size_t layer) {
  check_layer(world, layer);
  if (trait >= world.traits()) throw Error(ErrorKind::InvalidParameter, "trait index out of range");
  if (n < 1) throw Error(ErrorKind::InvalidParameter, "need at least one sample");
  RowMatrix out(n, world.dim());
  std::size_t k = 0;
  for_each_sample(world, trait, level, n, layer, [&](std::span<const double> s) {
    std::copy(s.begin(), s.end(), out.row(k++).begin());
  });
  return out;
}

DirectionEstimate estimate_directions_diff_means(const SyntheticWorld& world,
                                                 std::size_t n_per_level,
                                                 std::span<const std::size_t> layers_in) {
  if (n_per_level < 2) throw Error(ErrorKind::InvalidParameter, "n_per_level must be >= 2");
  std::vector<std::size_t> layers(layers_in.begin(), layers_in.end());
  if (layers.empty()) {
    for (std::size_t l = 0; l < world.layers(); ++l) layers.push_back(l);
  }
  for (std::size_t l : layers) check_layer(world, l);

  const std::size_t c = world.traits();
  const std::size_t d = world.dim();
  const auto& cfg = world.config();
  RowMatrix weights(c, layers.size());
  std::vector<double> aggregate(c * d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_per_level);

  for (std::size_t t = 0; t < c; ++t) {
    RowMatrix per_layer(layers.size(), d);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      std::span<double> diff = per_layer.row(k);
      for_each_sample(world, t, Level::High, n_per_level, layers[k],
                      [&](std::span<const double> s) { kernels::axpy(inv_n, s, diff); });
      for_each_sample(world, t, Level::Low, n_per_level, layers[k],
                      [&](std::span<const double> s) { kernels::axpy(-inv_n, s, diff); });
      const double norm = std::sqrt(kernels::squared_norm(diff));
      if (norm < 1e-12) {
        throw Error(ErrorKind::ZeroVector,
                    fmt::format("difference of means for '{}' at layer {} vanished",
                                cfg.trait_names[t], layers[k]));
      }
      kernels::scale(1.0 / norm, diff);
      switch (cfg.weighting) {
        case LayerWeighting::Uniform: weights(t, k) = 1.0; break;
        case LayerWeighting::Gain: weights(t, k) = world.gain(layers[k]); break;
        case LayerWeighting::Sensitivity:
          weights(t, k) = layer_sensitivity(world, diff, layers[k], cfg.probe_intensity, cfg.n_probes);
          break;
      }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < layers.size(); ++k) total += weights(t, k);
    if (!(total > 0.0)) {
      throw Error(ErrorKind::ZeroVector,
                  "all layer weights for '" + cfg.trait_names[t] + "' are zero");
    }
    std::span<double> agg(aggregate.data() + t * d, d);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      weights(t, k) /= total;
      kernels::axpy(weights(t, k), per_layer.row(k), agg);
    }
    const double norm = std::sqrt(kernels::squared_norm(agg));
    if (norm < 1e-12) {
      throw Error(ErrorKind::ZeroVector, "aggregated direction for '" + cfg.trait_names[t] + "' vanished");
    }
    kernels::scale(1.0 / norm, agg);
  }

  nlohmann::json meta = {{"source", "diff-of-means"},
                         {"seed", cfg.seed},
                         {"n_per_level", n_per_level},
                         {"layers", layers},
                         {"layer_weights", weights.data}};
  return {DirectionSet(cfg.trait_names, d, std::move(aggregate), std::move(meta)), std::move(layers),
          std::move(weights)};
}

// ---------------------------------------------------------------------------
// layer selection

PromptState neutral_probe(const SyntheticWorld& world, std::size_t index) {
  auto rng = stream(world.config().seed, "neutral-probe", {index});
  std::vector<double> state(world.dim());
  fill_gaussian(rng, state, 1.0);
  PromptState p{RowMatrix(world.layers(), world.dim())};
  for (std::size_t l = 0; l < world.layers(); ++l) std::copy(state.begin(), state.end(), p.layers.row(l).begin());
  return p;
}

double prompt_sensitivity(const SyntheticWorld& world, std::span<const double> direction,
                          const PromptState& prompt, std::size_t layer, double intensity) {
  check_layer(world, layer);
  check_direction(world, direction);
  if (prompt.layers.rows != world.layers() || prompt.layers.cols != world.dim()) {
    throw Error(ErrorKind::ShapeMismatch, "prompt state must be layers x dim");
  }
  const double transmitted = world.gain(layer) * engagement(world, prompt.layers.row(layer)) * intensity;
  if (transmitted == 0.0) return 0.0;

  std::span<const double> final_state = prompt.layers.row(world.layers() - 1);
  std::vector<double> steered(final_state.begin(), final_state.end());
  kernels::axpy(transmitted, direction, steered);
  const auto p = softmax(readout_logits(world, final_state));
  const auto q = softmax(readout_logits(world, steered));
  double tv = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) tv += std::abs(p[v] - q[v]);
  return 0.5 * tv;
}

double layer_sensitivity(const SyntheticWorld& world, std::span<const double> direction,
                         std::size_t layer, double intensity, std::size_t n_probes) {
  if (n_probes == 0) throw Error(ErrorKind::InvalidParameter, "n_probes must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < n_probes; ++i) {
    sum += prompt_sensitivity(world, direction, neutral_probe(world, i), layer, intensity);
  }
  return sum / static_cast<double>(n_probes);
}

std::size_t select_prior_layer(const SyntheticWorld& world, std::span<const double> direction) {
  const auto& cfg = world.config();
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t l = 0; l < world.layers(); ++l) {
    const double s = layer_sensitivity(world, direction, l, cfg.probe_intensity, cfg.n_probes);
    if (s > best_value) {
      best_value = s;
      best = l;
    }
  }
  return best;
}

std::size_t dynamic_layer_check(const SyntheticWorld& world, std::span<const double> direction,
                                const PromptState& prompt, std::size_t prior, std::size_t radius) {
  check_layer(world, prior);
  if (radius == 0) return prior;
  const double intensity = world.config().probe_intensity;
  const std::size_t lo = prior >= radius ? prior - radius : 0;
  const std::size_t hi = std::min(world.layers() - 1, prior + radius);
  std::size_t best = prior;
  double best_value = prompt_sensitivity(world, direction, prompt, prior, intensity);
  for (std::size_t l = lo; l <= hi; ++l) {
    if (l == prior) continue;
    const double s = prompt_sensitivity(world, direction, prompt, l, intensity);
    if (s > best_value) {
      best_value = s;
      best = l;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// steering and bleed

BehaviourScores steer_and_score(const SyntheticWorld& world, const ConditionedSet& directions,
                                std::size_t target, Polarity polarity, double intensity,
                                std::size_t layer) {
  check_layer(world, layer);
  const DirectionSet& set = directions.directions;
  if (set.traits() != world.traits() || set.dim() != world.dim()) {
    throw Error(ErrorKind::ShapeMismatch, "conditioned set does not match the world's shape");
  }
  if (target >= set.traits()) throw Error(ErrorKind::InvalidParameter, "target trait out of range");
  if (!(intensity >= 0.0)) throw Error(ErrorKind::InvalidParameter, "intensity must be >= 0");

  const auto& cfg = world.config();
  const double sign = polarity == Polarity::Positive ? 1.0 : polarity == Polarity::Negative ? -1.0 : 0.0;
  // Neutral evaluation state is zero, so the final state is the transmitted injection.
  std::vector<double> h(world.dim(), 0.0);
  if (sign != 0.0) kernels::axpy(sign * intensity * world.gain(layer), set.row(target), h);

  BehaviourScores out;
  out.raw.resize(world.traits());
  out.score.resize(world.traits());
  for (std::size_t j = 0; j < world.traits(); ++j) {
    out.raw[j] = cfg.readout_scale * kernels::dot(world.true_axes().row(j), h);
    out.score[j] = std::clamp(3.0 + 2.0 * std::tanh(out.raw[j] / cfg.raw_scale), 1.0, 5.0);
  }
  return out;
}

std::vector<std::size_t> selected_layers(const SyntheticWorld& world, const ConditionedSet& directions) {
  std::vector<std::size_t> layers;
  for (std::size_t t = 0; t < directions.directions.traits(); ++t) {
    layers.push_back(select_prior_layer(world, directions.directions.row(t)));
  }
  return layers;
}

ContrastMatrix simulate_bleed(const SyntheticWorld& world, const ConditionedSet& conditioned,
                              double intensity) {
  const std::size_t c = world.traits();
  const auto layers = selected_layers(world, conditioned);
  std::vector<double> values(c * c);
  for (std::size_t t = 0; t < c; ++t) {
    const auto high = steer_and_score(world, conditioned, t, Polarity::Positive, intensity, layers[t]);
    const auto low = steer_and_score(world, conditioned, t, Polarity::Negative, intensity, layers[t]);
    for (std::size_t j = 0; j < c; ++j) values[t * c + j] = high.score[j] - low.score[j];
  }
  return ContrastMatrix::from_values(world.config().trait_names, std::move(values));
}

}  // namespace traitgeo::sim
