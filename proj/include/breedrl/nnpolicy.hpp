#pragma once

// Per-plant scoring network with a shared value head.
//
//   plant (m, 2) -> conv1 -> act -> conv2 -> act -> flatten -> dense -> act   (f)
//   features     = (f(x) + f(swap_channels(x))) / 2                           (64)
//   action input = [features, act(embed_a(t/T))]                              (80)
//   score_i      = out_a(act(hidden_a(action input)))
//   value input  = [features, act(embed_v(t/T))]
//   value        = mean_i out_v(act(hidden_v(value input)))
//
// Convolutions are valid (no padding); flattening is channel-major. The
// exploration distribution is a diagonal Gaussian centred on the scores with
// a state-independent learned log standard deviation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "breedrl/genome.hpp"
#include "breedrl/rng.hpp"

namespace breedrl {

enum class Activation : std::uint32_t { kTanh = 0, kIdentity = 1 };

struct ConvSpec {
  std::size_t kernels = 0;
  std::size_t length = 0;
  std::size_t stride = 1;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct NetConfig {
  std::size_t input_length = 1000;  // m
  std::size_t in_channels = 2;
  ConvSpec conv1{64, 32, 8};
  ConvSpec conv2{16, 8, 2};
  std::size_t feature_dim = 64;
  std::size_t gen_embed_dim = 16;
  std::size_t head_hidden = 32;
  Activation activation = Activation::kTanh;

  [[nodiscard]] std::size_t conv1_length() const;
  [[nodiscard]] std::size_t conv2_length() const;
  [[nodiscard]] std::size_t flattened_size() const { return conv2.kernels * conv2_length(); }
  [[nodiscard]] std::size_t head_input() const { return feature_dim + gen_embed_dim; }

  // Throws ConfigError when the input is too short for the conv stack. With
  // the default layer sizes and m = 1000 the flattened size must be 928.
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Named views into one flat parameter vector.
struct ParamLayout {
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  explicit ParamLayout(const NetConfig& config);

  std::vector<Entry> entries;
  std::size_t total = 0;

  // Offsets of each tensor, in declaration order.
  std::size_t conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b;
  std::size_t action_embed_w, action_embed_b, value_embed_w, value_embed_b;
  std::size_t action_hidden_w, action_hidden_b, action_out_w, action_out_b;
  std::size_t value_hidden_w, value_hidden_b, value_out_w, value_out_b;
  std::size_t log_std;

 private:
  std::size_t add(std::string name, std::vector<std::size_t> shape);
};

struct PolicyParams {
  NetConfig config;
  std::vector<double> values;

  PolicyParams() = default;
  explicit PolicyParams(const NetConfig& config);  // all zeros

  [[nodiscard]] ParamLayout layout() const { return ParamLayout(config); }
  [[nodiscard]] double log_std() const { return values[layout().log_std]; }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

// Orthogonal weights (gain 1; 0.01 on the action output layer), zero biases,
// log_std = 0.
PolicyParams init_params(const NetConfig& config, RngStream rng);

struct PolicyOutput {
  std::vector<double> scores;
  double value = 0.0;
};

// Activations recorded by a forward pass, consumed by backward().
struct ForwardCache {
  const PlantTensor* input = nullptr;
  double gen_fraction = 0.0;
  std::size_t plants = 0;
  std::vector<double> conv1;     // [plant][orientation][kernel][pos]
  std::vector<double> conv2;     // [plant][orientation][flattened]
  std::vector<double> dense;     // [plant][orientation][feature]
  std::vector<double> features;  // [plant][feature]
  std::vector<double> action_hidden;  // [plant][hidden]
  std::vector<double> value_hidden;   // [plant][hidden]
  std::vector<double> action_embed;   // [embed]
  std::vector<double> value_embed;    // [embed]
};

// Channel-symmetrized features of one plant's (m, 2) locus-major slice.
std::vector<double> extract_features(std::span<const double> plant, const PolicyParams& params);

// Scores for every plant plus the population value. The cache, when given,
// keeps a pointer to `obs`, which must outlive the subsequent backward().
PolicyOutput score_and_value(const PlantTensor& obs, double gen_fraction,
                             const PolicyParams& params, ForwardCache* cache = nullptr);

// Accumulates dLoss/dparams into `grad` (same layout as params.values) given
// dLoss/dscores and dLoss/dvalue. log_std is not touched. When `input_grad`
// is non-null it receives dLoss/dobs with the shape of the cached input.
void backward(const ForwardCache& cache, std::span<const double> dscores, double dvalue,
              const PolicyParams& params, std::span<double> grad,
              std::vector<double>* input_grad = nullptr);

std::vector<double> sample_action(std::span<const double> scores, double log_std, RngStream& rng);
double log_prob(std::span<const double> scores, double log_std, std::span<const double> action);
double gaussian_entropy(std::size_t dims, double log_std);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares backward() against central differences of
//   L = sum_i c_i * score_i + c_v * value + log_prob(scores, log_std, a)
// with random c, c_v and a drawn from `rng`. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
// Throws NumericalError if any analytic gradient is non-finite.
inline constexpr double kGradCheckFloor = 1e-6;
GradCheckResult gradient_check(const PolicyParams& params, const PlantTensor& obs,
                               double gen_fraction, double eps, RngStream rng);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);
// Also rejects a checkpoint whose input length differs from `expected_loci`.
PolicyParams load_checkpoint(const std::filesystem::path& path, std::size_t expected_loci);

}  // namespace breedrl
