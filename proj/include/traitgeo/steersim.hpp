#pragma once

// A synthetic entangled-trait world standing in for a transformer:
//
//  * true trait axes A (C x D, unit rows) with gram(A) = R, the planted
//    correlation;
//  * L residual layers that carry the state unchanged; a vector injected at
//    layer l reaches the final state scaled by gain_l (times a prompt
//    engagement factor, see below);
//  * a behaviour readout raw_j = readout_scale * <a_j, h>, mapped onto the
//    1-5 judge scale as 3 + 2 tanh(raw / raw_scale), clipped;
//  * a V-way next-token readout softmax(W h) used for layer sensitivity.
//
// Prompt engagement: a prompt is a per-layer stack of states. An injection at
// layer l is transmitted with factor gain_l * |cos(u, s_l)| where u is the
// world's prompt readout axis and s_l the prompt's state at l. Neutral probes
// repeat one random state across layers, so their layer ranking follows the
// gains. Evaluation (steer_and_score) uses a neutral zero state and full
// engagement, so its response is exactly linear before the tanh.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "traitgeo/conditioning.hpp"
#include "traitgeo/contrast.hpp"
#include "traitgeo/directions.hpp"
#include "traitgeo/matrix.hpp"

namespace traitgeo::sim {

enum class Level { High, Low };
enum class LayerWeighting { Sensitivity, Gain, Uniform };

struct WorldConfig {
  std::size_t trait_count = 5;
  std::size_t dim = 64;
  std::size_t layer_count = 3;
  Eigen::MatrixXd trait_correlation;  // empty means identity
  double estimation_noise_sigma = 0.0;
  std::vector<double> per_layer_gain;  // empty means all ones
  std::size_t vocab_size = 32;
  std::uint64_t seed = 0;

  std::vector<std::string> trait_names;  // empty: OCEAN for C=5, else T0, T1, ...
  double axis_strength = 1.0;
  double readout_scale = 1.0;
  double raw_scale = 1.0;
  std::size_t n_per_level = 1000;
  std::size_t n_probes = 16;
  double probe_intensity = 1e-2;
  std::size_t layer_window = 1;
  LayerWeighting weighting = LayerWeighting::Sensitivity;
};

/// Fill defaults for empty fields and check invariants. Throws InvalidParameter
/// or BadCorrelation.
WorldConfig resolve_config(WorldConfig config);

/// JSON mirror of WorldConfig. "trait_correlation" may be a C x C array, or
/// "uniform_correlation": rho may be given instead. Throws ParseError.
WorldConfig world_config_from_json(const nlohmann::json& doc);
WorldConfig load_world_config(const std::filesystem::path& path);
nlohmann::json world_config_to_json(const WorldConfig& config);

/// Correlation matrix with unit diagonal and `rho` everywhere else.
Eigen::MatrixXd uniform_correlation(std::size_t c, double rho);

class SyntheticWorld {
 public:
  const WorldConfig& config() const noexcept { return config_; }
  std::size_t traits() const noexcept { return config_.trait_count; }
  std::size_t dim() const noexcept { return config_.dim; }
  std::size_t layers() const noexcept { return config_.layer_count; }

  const DirectionSet& true_axes() const noexcept { return axes_; }
  const RowMatrix& token_readout() const noexcept { return token_readout_; }
  std::span<const double> prompt_readout() const noexcept { return prompt_readout_; }
  std::span<const double> layer_base(std::size_t layer) const { return layer_base_.row(layer); }
  double gain(std::size_t layer) const { return config_.per_layer_gain.at(layer); }

  /// d(score)/d(intensity) per unit <d, a_j> at zero intensity when steering at
  /// `layer`: gain * readout_scale * 2 / raw_scale.
  double response_slope(std::size_t layer) const;

 private:
  friend SyntheticWorld make_world(const WorldConfig& config);
  SyntheticWorld(WorldConfig config, DirectionSet axes)
      : config_(std::move(config)), axes_(std::move(axes)) {}

  WorldConfig config_;
  DirectionSet axes_;
  RowMatrix token_readout_;
  std::vector<double> prompt_readout_;
  RowMatrix layer_base_;
};

/// Deterministic in config (including seed). Throws BadCorrelation when R is not
/// symmetric positive definite with unit diagonal.
SyntheticWorld make_world(const WorldConfig& config);

/// n x D samples: layer_base + (+/-) axis_strength * a_trait + N(0, sigma^2).
/// Deterministic per (seed, trait, level, layer).
RowMatrix sample_labeled_activations(const SyntheticWorld& world, std::size_t trait, Level level,
                                     std::size_t n, std::size_t layer);

struct DirectionEstimate {
  DirectionSet directions;           // unit rows, one per trait
  std::vector<std::size_t> layers;   // layers aggregated
  RowMatrix layer_weights;           // C x layers.size(), rows sum to 1
};

/// Per layer: normalize(mean(high) - mean(low)); aggregate across `layers`
/// (empty = all) with the world's LayerWeighting, then re-normalize.
/// Throws InvalidParameter for n_per_level < 2, ZeroVector on a degenerate estimate.
DirectionEstimate estimate_directions_diff_means(const SyntheticWorld& world,
                                                 std::size_t n_per_level,
                                                 std::span<const std::size_t> layers = {});

struct PromptState {
  RowMatrix layers;  // L x D
};

/// Neutral probe number `index`: one N(0, 1) state repeated across all layers.
PromptState neutral_probe(const SyntheticWorld& world, std::size_t index);

/// Total-variation distance between the next-token distributions of `prompt`
/// with and without `direction` injected at `layer` with the given intensity.
double prompt_sensitivity(const SyntheticWorld& world, std::span<const double> direction,
                          const PromptState& prompt, std::size_t layer, double intensity);

/// Mean prompt_sensitivity over the first n_probes neutral probes.
double layer_sensitivity(const SyntheticWorld& world, std::span<const double> direction,
                         std::size_t layer, double intensity, std::size_t n_probes);

/// argmax_l layer_sensitivity with the config's probe settings; ties to the lowest layer.
std::size_t select_prior_layer(const SyntheticWorld& world, std::span<const double> direction);

/// argmax of prompt_sensitivity over [prior - radius, prior + radius] clipped to
/// valid layers. The prior wins ties, then the lower layer.
std::size_t dynamic_layer_check(const SyntheticWorld& world, std::span<const double> direction,
                                const PromptState& prompt, std::size_t prior, std::size_t radius);

struct BehaviourScores {
  std::vector<double> raw;    // readout_scale * <a_j, h>
  std::vector<double> score;  // on the 1-5 judge scale
};

BehaviourScores steer_and_score(const SyntheticWorld& world, const ConditionedSet& directions,
                                std::size_t target, Polarity polarity, double intensity,
                                std::size_t layer);

/// Prior layer per conditioned direction.
std::vector<std::size_t> selected_layers(const SyntheticWorld& world, const ConditionedSet& directions);

/// High - Low contrast per (target, measured) pair, each target steered at its
/// selected layer.
ContrastMatrix simulate_bleed(const SyntheticWorld& world, const ConditionedSet& conditioned,
                              double intensity);

}  // namespace traitgeo::sim
