#include "breedrl/nnpolicy.hpp"

#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "breedrl/archive.hpp"
#include "breedrl/errors.hpp"

namespace breedrl {

namespace {

constexpr ArchiveMagic kCheckpointMagic{'B', 'R', 'L', 'P', 'O', 'L', 'C', 'Y'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline double activate(Activation a, double z) { return a == Activation::kTanh ? std::tanh(z) : z; }

// Derivative expressed through the activation output.
inline double activation_slope(Activation a, double y) {
  return a == Activation::kTanh ? 1.0 - y * y : 1.0;
}

std::size_t conv_output(std::size_t input, const ConvSpec& spec) {
  if (spec.length == 0 || spec.stride == 0 || input < spec.length) return 0;
  return (input - spec.length) / spec.stride + 1;
}

// Sizes used by the forward/backward kernels, resolved once per call.
struct Dims {
  std::size_t m, len1, stride1, k1, l1, len2, stride2, k2, l2, flat, feat, embed, head_in, hidden;

  explicit Dims(const NetConfig& c)
      : m(c.input_length),
        len1(c.conv1.length),
        stride1(c.conv1.stride),
        k1(c.conv1.kernels),
        l1(c.conv1_length()),
        len2(c.conv2.length),
        stride2(c.conv2.stride),
        k2(c.conv2.kernels),
        l2(c.conv2_length()),
        flat(c.flattened_size()),
        feat(c.feature_dim),
        embed(c.gen_embed_dim),
        head_in(c.head_input()),
        hidden(c.head_hidden) {}
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Convolution patches: row c * len + k, column t.
void conv1_patches(const Dims& d, const double* x, unsigned swap, RowMatrix& out) {
  out.resize(ix(2 * d.len1), ix(d.l1));
  for (unsigned c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < d.len1; ++k) {
      double* row = out.data() + (c * d.len1 + k) * d.l1;
      const double* xp = x + k * 2 + (c ^ swap);
      for (std::size_t t = 0; t < d.l1; ++t) row[t] = xp[t * d.stride1 * 2];
    }
  }
}

void conv2_patches(const Dims& d, const double* a1, RowMatrix& out) {
  out.resize(ix(d.k1 * d.len2), ix(d.l2));
  for (std::size_t c = 0; c < d.k1; ++c) {
    for (std::size_t k = 0; k < d.len2; ++k) {
      double* row = out.data() + (c * d.len2 + k) * d.l2;
      const double* ap = a1 + c * d.l1 + k;
      for (std::size_t t = 0; t < d.l2; ++t) row[t] = ap[t * d.stride2];
    }
  }
}

void apply_activation(Activation act, double* v, std::size_t n) {
  if (act == Activation::kTanh) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
  }
}

// f(x) for one orientation; `swap` exchanges the two input channels.
void extractor_forward(const Dims& d, const ParamLayout& L, const double* p, Activation act,
                       const double* x, unsigned swap, double* a1, double* a2, double* f) {
  thread_local RowMatrix patches;
  conv1_patches(d, x, swap, patches);
  RowMap z1(a1, ix(d.k1), ix(d.l1));
  z1.noalias() = ConstRowMap(p + L.conv1_w, ix(d.k1), ix(2 * d.len1)) * patches;
  z1.colwise() += ConstVecMap(p + L.conv1_b, ix(d.k1));
  apply_activation(act, a1, d.k1 * d.l1);

  conv2_patches(d, a1, patches);
  RowMap z2(a2, ix(d.k2), ix(d.l2));
  z2.noalias() = ConstRowMap(p + L.conv2_w, ix(d.k2), ix(d.k1 * d.len2)) * patches;
  z2.colwise() += ConstVecMap(p + L.conv2_b, ix(d.k2));
  apply_activation(act, a2, d.flat);

  VecMap z3(f, ix(d.feat));
  z3.noalias() = ConstRowMap(p + L.dense_w, ix(d.feat), ix(d.flat)) * ConstVecMap(a2, ix(d.flat));
  z3 += ConstVecMap(p + L.dense_b, ix(d.feat));
  apply_activation(act, f, d.feat);
}

void extractor_backward(const Dims& d, const ParamLayout& L, const double* p, Activation act,
                        const double* x, unsigned swap, const double* a1, const double* a2,
                        const double* f, const double* dfeat, double* g, double* dx,
                        std::vector<double>& scratch) {
  thread_local RowMatrix patches;
  thread_local RowMatrix dpatches;
  scratch.assign(d.feat + d.flat + d.k1 * d.l1, 0.0);
  double* dz3 = scratch.data();
  double* dz2 = dz3 + d.feat;
  double* dz1 = dz2 + d.flat;

  // Dense layer; each orientation receives half of the feature gradient.
  for (std::size_t j = 0; j < d.feat; ++j) dz3[j] = 0.5 * dfeat[j] * activation_slope(act, f[j]);
  const ConstVecMap dz3v(dz3, ix(d.feat));
  const ConstRowMap w3(p + L.dense_w, ix(d.feat), ix(d.flat));
  RowMap(g + L.dense_w, ix(d.feat), ix(d.flat)).noalias() +=
      dz3v * ConstVecMap(a2, ix(d.flat)).transpose();
  VecMap(g + L.dense_b, ix(d.feat)) += dz3v;
  VecMap(dz2, ix(d.flat)).noalias() = w3.transpose() * dz3v;
  for (std::size_t q = 0; q < d.flat; ++q) dz2[q] *= activation_slope(act, a2[q]);

  // conv2
  const ConstRowMap dz2m(dz2, ix(d.k2), ix(d.l2));
  const ConstRowMap w2(p + L.conv2_w, ix(d.k2), ix(d.k1 * d.len2));
  conv2_patches(d, a1, patches);
  RowMap(g + L.conv2_w, ix(d.k2), ix(d.k1 * d.len2)).noalias() += dz2m * patches.transpose();
  VecMap(g + L.conv2_b, ix(d.k2)) += dz2m.rowwise().sum();
  dpatches.noalias() = w2.transpose() * dz2m;
  for (std::size_t c = 0; c < d.k1; ++c) {
    for (std::size_t k = 0; k < d.len2; ++k) {
      const double* row = dpatches.data() + (c * d.len2 + k) * d.l2;
      double* dap = dz1 + c * d.l1 + k;
      for (std::size_t t = 0; t < d.l2; ++t) dap[t * d.stride2] += row[t];
    }
  }
  for (std::size_t i = 0; i < d.k1 * d.l1; ++i) dz1[i] *= activation_slope(act, a1[i]);

  // conv1
  const ConstRowMap dz1m(dz1, ix(d.k1), ix(d.l1));
  conv1_patches(d, x, swap, patches);
  RowMap(g + L.conv1_w, ix(d.k1), ix(2 * d.len1)).noalias() += dz1m * patches.transpose();
  VecMap(g + L.conv1_b, ix(d.k1)) += dz1m.rowwise().sum();
  if (dx != nullptr) {
    dpatches.noalias() =
        ConstRowMap(p + L.conv1_w, ix(d.k1), ix(2 * d.len1)).transpose() * dz1m;
    for (unsigned c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < d.len1; ++k) {
        const double* row = dpatches.data() + (c * d.len1 + k) * d.l1;
        double* dxp = dx + k * 2 + (c ^ swap);
        for (std::size_t t = 0; t < d.l1; ++t) dxp[t * d.stride1 * 2] += row[t];
      }
    }
  }
}

// act(W * [features, embed] + b) followed by the scalar output layer.
double head_forward(const Dims& d, const double* p, std::size_t hidden_w, std::size_t hidden_b,
                    std::size_t out_w, std::size_t out_b, Activation act, const double* features,
                    const double* embed, double* hidden) {
  for (std::size_t h = 0; h < d.hidden; ++h) {
    const double* w = p + hidden_w + h * d.head_in;
    double z = p[hidden_b + h];
    for (std::size_t j = 0; j < d.feat; ++j) z += w[j] * features[j];
    for (std::size_t e = 0; e < d.embed; ++e) z += w[d.feat + e] * embed[e];
    hidden[h] = activate(act, z);
  }
  double out = p[out_b];
  for (std::size_t h = 0; h < d.hidden; ++h) out += p[out_w + h] * hidden[h];
  return out;
}

void head_backward(const Dims& d, const double* p, std::size_t hidden_w, std::size_t hidden_b,
                   std::size_t out_w, std::size_t out_b, Activation act, const double* features,
                   const double* embed, const double* hidden, double dout, double* g,
                   double* dfeatures, double* dembed) {
  g[out_b] += dout;
  for (std::size_t h = 0; h < d.hidden; ++h) {
    g[out_w + h] += dout * hidden[h];
    const double dz = dout * p[out_w + h] * activation_slope(act, hidden[h]);
    g[hidden_b + h] += dz;
    const double* w = p + hidden_w + h * d.head_in;
    double* gw = g + hidden_w + h * d.head_in;
    for (std::size_t j = 0; j < d.feat; ++j) {
      gw[j] += dz * features[j];
      dfeatures[j] += dz * w[j];
    }
    for (std::size_t e = 0; e < d.embed; ++e) {
      gw[d.feat + e] += dz * embed[e];
      dembed[e] += dz * w[d.feat + e];
    }
  }
}

void embed_forward(const Dims& d, const double* p, std::size_t w, std::size_t b, Activation act,
                   double gen_fraction, double* out) {
  for (std::size_t e = 0; e < d.embed; ++e) out[e] = activate(act, p[b + e] + p[w + e] * gen_fraction);
}

void check_input(const PlantTensor& obs, const NetConfig& config) {
  if (obs.plants() == 0) throw ConfigError("policy input has no plants");
  if (obs.loci() != config.input_length) {
    throw ConfigError("policy input has " + std::to_string(obs.loci()) +
                      " loci but the network expects " + std::to_string(config.input_length));
  }
}

// Canonical-order mean so the value is invariant to plant permutations.
double permutation_invariant_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

void orthogonal_fill(double* out, std::size_t rows, std::size_t cols, double gain,
                     RngStream& rng) {
  const bool transpose = rows < cols;
  const auto r = static_cast<Eigen::Index>(transpose ? cols : rows);
  const auto c = static_cast<Eigen::Index>(transpose ? rows : cols);
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd upper = qr.matrixQR().topRows(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    if (upper(j, j) < 0) q.col(j) *= -1.0;
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = transpose ? q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                                 : q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out[i * cols + j] = gain * v;
    }
  }
}

}  // namespace

std::size_t NetConfig::conv1_length() const { return conv_output(input_length, conv1); }

std::size_t NetConfig::conv2_length() const { return conv_output(conv1_length(), conv2); }

void NetConfig::validate() const {
  if (in_channels != 2) throw ConfigError("the network expects exactly two input channels");
  if (conv1.kernels == 0 || conv2.kernels == 0 || feature_dim == 0 || gen_embed_dim == 0 ||
      head_hidden == 0) {
    throw ConfigError("network layer sizes must be positive");
  }
  if (conv1_length() == 0 || conv2_length() == 0) {
    throw ConfigError("input length " + std::to_string(input_length) +
                      " is too short for the convolution stack");
  }
  const NetConfig reference{};
  if (input_length == 1000 && conv1 == reference.conv1 && conv2 == reference.conv2) {
    if (conv1_length() != 122 || conv2_length() != 58 || flattened_size() != 928) {
      throw ConfigError("default convolution stack must flatten to 928 features for m = 1000");
    }
  }
}

ParamLayout::ParamLayout(const NetConfig& c) {
  c.validate();
  const std::size_t flat = c.flattened_size();
  conv1_w = add("conv1.weight", {c.conv1.kernels, c.in_channels, c.conv1.length});
  conv1_b = add("conv1.bias", {c.conv1.kernels});
  conv2_w = add("conv2.weight", {c.conv2.kernels, c.conv1.kernels, c.conv2.length});
  conv2_b = add("conv2.bias", {c.conv2.kernels});
  dense_w = add("features.weight", {c.feature_dim, flat});
  dense_b = add("features.bias", {c.feature_dim});
  action_embed_w = add("action_embed.weight", {c.gen_embed_dim, 1});
  action_embed_b = add("action_embed.bias", {c.gen_embed_dim});
  value_embed_w = add("value_embed.weight", {c.gen_embed_dim, 1});
  value_embed_b = add("value_embed.bias", {c.gen_embed_dim});
  action_hidden_w = add("action_hidden.weight", {c.head_hidden, c.head_input()});
  action_hidden_b = add("action_hidden.bias", {c.head_hidden});
  action_out_w = add("action_out.weight", {1, c.head_hidden});
  action_out_b = add("action_out.bias", {1});
  value_hidden_w = add("value_hidden.weight", {c.head_hidden, c.head_input()});
  value_hidden_b = add("value_hidden.bias", {c.head_hidden});
  value_out_w = add("value_out.weight", {1, c.head_hidden});
  value_out_b = add("value_out.bias", {1});
  log_std = add("log_std", {1});
}

std::size_t ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t size = 1;
  for (auto s : shape) size *= s;
  entries.push_back({std::move(name), std::move(shape), total, size});
  const std::size_t offset = total;
  total += size;
  return offset;
}

PolicyParams::PolicyParams(const NetConfig& c) : config(c), values(ParamLayout(c).total, 0.0) {}

PolicyParams init_params(const NetConfig& config, RngStream rng) {
  PolicyParams params(config);
  const ParamLayout L(config);
  double* p = params.values.data();
  for (const auto& e : L.entries) {
    if (e.name.ends_with(".bias") || e.name == "log_std") continue;
    const std::size_t rows = e.shape[0];
    const std::size_t cols = e.size / rows;
    const double gain = e.name == "action_out.weight" ? 0.01 : 1.0;
    orthogonal_fill(p + e.offset, rows, cols, gain, rng);
  }
  return params;
}

std::vector<double> extract_features(std::span<const double> plant, const PolicyParams& params) {
  const auto& c = params.config;
  if (plant.size() != c.input_length * 2) {
    throw ConfigError("plant slice has " + std::to_string(plant.size()) + " values, expected " +
                      std::to_string(c.input_length * 2));
  }
  const ParamLayout L(c);
  const Dims d(c);
  std::vector<double> a1(d.k1 * d.l1), a2(d.flat), f0(d.feat), f1(d.feat);
  extractor_forward(d, L, params.values.data(), c.activation, plant.data(), 0, a1.data(),
                    a2.data(), f0.data());
  extractor_forward(d, L, params.values.data(), c.activation, plant.data(), 1, a1.data(),
                    a2.data(), f1.data());
  std::vector<double> features(d.feat);
  for (std::size_t j = 0; j < d.feat; ++j) features[j] = 0.5 * (f0[j] + f1[j]);
  return features;
}

PolicyOutput score_and_value(const PlantTensor& obs, double gen_fraction,
                             const PolicyParams& params, ForwardCache* cache) {
  const auto& c = params.config;
  check_input(obs, c);
  if (!(gen_fraction >= 0.0 && gen_fraction <= 1.0)) {
    throw ConfigError("generation fraction must lie in [0, 1]");
  }
  const ParamLayout L(c);
  const Dims d(c);
  const double* p = params.values.data();
  const std::size_t n = obs.plants();
  const std::size_t a1_size = d.k1 * d.l1;

  ForwardCache local;
  ForwardCache& k = cache != nullptr ? *cache : local;
  k.input = &obs;
  k.gen_fraction = gen_fraction;
  k.plants = n;
  // Without a caller cache only one plant's intermediates are kept at a time.
  const std::size_t slots = cache != nullptr ? n : 1;
  k.conv1.resize(slots * 2 * a1_size);
  k.conv2.resize(slots * 2 * d.flat);
  k.dense.resize(slots * 2 * d.feat);
  k.features.resize(slots * d.feat);
  k.action_hidden.resize(slots * d.hidden);
  k.value_hidden.resize(slots * d.hidden);
  k.action_embed.resize(d.embed);
  k.value_embed.resize(d.embed);

  embed_forward(d, p, L.action_embed_w, L.action_embed_b, c.activation, gen_fraction,
                k.action_embed.data());
  embed_forward(d, p, L.value_embed_w, L.value_embed_b, c.activation, gen_fraction,
                k.value_embed.data());

  PolicyOutput out;
  out.scores.resize(n);
  std::vector<double> plant_values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = cache != nullptr ? i : 0;
    const double* x = obs.plant(i).data();
    double* feats = k.features.data() + s * d.feat;
    for (unsigned swap = 0; swap < 2; ++swap) {
      extractor_forward(d, L, p, c.activation, x, swap, k.conv1.data() + (s * 2 + swap) * a1_size,
                        k.conv2.data() + (s * 2 + swap) * d.flat,
                        k.dense.data() + (s * 2 + swap) * d.feat);
    }
    const double* f0 = k.dense.data() + (s * 2) * d.feat;
    const double* f1 = f0 + d.feat;
    for (std::size_t j = 0; j < d.feat; ++j) feats[j] = 0.5 * (f0[j] + f1[j]);

    out.scores[i] = head_forward(d, p, L.action_hidden_w, L.action_hidden_b, L.action_out_w,
                                 L.action_out_b, c.activation, feats, k.action_embed.data(),
                                 k.action_hidden.data() + s * d.hidden);
    plant_values[i] = head_forward(d, p, L.value_hidden_w, L.value_hidden_b, L.value_out_w,
                                   L.value_out_b, c.activation, feats, k.value_embed.data(),
                                   k.value_hidden.data() + s * d.hidden);
  }
  out.value = permutation_invariant_mean(std::move(plant_values));
  return out;
}

void backward(const ForwardCache& cache, std::span<const double> dscores, double dvalue,
              const PolicyParams& params, std::span<double> grad,
              std::vector<double>* input_grad) {
  const auto& c = params.config;
  if (cache.input == nullptr || cache.features.size() != cache.plants * c.feature_dim) {
    throw std::logic_error("backward() needs a forward pass recorded with a cache");
  }
  if (dscores.size() != cache.plants) throw ConfigError("score gradient length mismatch");
  if (grad.size() != params.values.size()) throw ConfigError("gradient buffer size mismatch");
  const ParamLayout L(c);
  const Dims d(c);
  const double* p = params.values.data();
  double* g = grad.data();
  const std::size_t n = cache.plants;
  const std::size_t a1_size = d.k1 * d.l1;
  const double dplant_value = dvalue / static_cast<double>(n);

  if (input_grad != nullptr) input_grad->assign(n * d.m * 2, 0.0);

  std::vector<double> daction_embed(d.embed, 0.0);
  std::vector<double> dvalue_embed(d.embed, 0.0);
  std::vector<double> dfeat(d.feat);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    const double* feats = cache.features.data() + i * d.feat;
    std::fill(dfeat.begin(), dfeat.end(), 0.0);
    head_backward(d, p, L.action_hidden_w, L.action_hidden_b, L.action_out_w, L.action_out_b,
                  c.activation, feats, cache.action_embed.data(),
                  cache.action_hidden.data() + i * d.hidden, dscores[i], g, dfeat.data(),
                  daction_embed.data());
    head_backward(d, p, L.value_hidden_w, L.value_hidden_b, L.value_out_w, L.value_out_b,
                  c.activation, feats, cache.value_embed.data(),
                  cache.value_hidden.data() + i * d.hidden, dplant_value, g, dfeat.data(),
                  dvalue_embed.data());
    const double* x = cache.input->plant(i).data();
    double* dx = input_grad != nullptr ? input_grad->data() + i * d.m * 2 : nullptr;
    for (unsigned swap = 0; swap < 2; ++swap) {
      extractor_backward(d, L, p, c.activation, x, swap,
                         cache.conv1.data() + (i * 2 + swap) * a1_size,
                         cache.conv2.data() + (i * 2 + swap) * d.flat,
                         cache.dense.data() + (i * 2 + swap) * d.feat, dfeat.data(), g, dx,
                         scratch);
    }
  }

  for (std::size_t e = 0; e < d.embed; ++e) {
    const double dza = daction_embed[e] * activation_slope(c.activation, cache.action_embed[e]);
    g[L.action_embed_b + e] += dza;
    g[L.action_embed_w + e] += dza * cache.gen_fraction;
    const double dzv = dvalue_embed[e] * activation_slope(c.activation, cache.value_embed[e]);
    g[L.value_embed_b + e] += dzv;
    g[L.value_embed_w + e] += dzv * cache.gen_fraction;
  }
}

std::vector<double> sample_action(std::span<const double> scores, double log_std, RngStream& rng) {
  const double std = std::exp(log_std);
  std::vector<double> action(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) action[i] = scores[i] + std * rng.normal();
  return action;
}

double log_prob(std::span<const double> scores, double log_std, std::span<const double> action) {
  const double inv_var = std::exp(-2.0 * log_std);
  const double log_norm = log_std + 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double diff = action[i] - scores[i];
    total += -0.5 * diff * diff * inv_var - log_norm;
  }
  return total;
}

double gaussian_entropy(std::size_t dims, double log_std) {
  return static_cast<double>(dims) * (0.5 + 0.5 * std::log(2.0 * std::numbers::pi) + log_std);
}

GradCheckResult gradient_check(const PolicyParams& params, const PlantTensor& obs,
                               double gen_fraction, double eps, RngStream rng) {
  const ParamLayout L(params.config);
  const std::size_t n = obs.plants();
  std::vector<double> score_coef(n);
  for (double& x : score_coef) x = rng.normal();
  const double value_coef = rng.normal();
  std::vector<double> action(n);
  for (double& x : action) x = rng.normal();

  auto loss = [&](const PolicyParams& q) {
    const auto out = score_and_value(obs, gen_fraction, q);
    double total = value_coef * out.value;
    for (std::size_t i = 0; i < n; ++i) total += score_coef[i] * out.scores[i];
    return total + log_prob(out.scores, q.values[L.log_std], action);
  };

  ForwardCache cache;
  const auto out = score_and_value(obs, gen_fraction, params, &cache);
  const double log_std = params.values[L.log_std];
  const double inv_var = std::exp(-2.0 * log_std);
  std::vector<double> dscores(n);
  double dlog_std = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = action[i] - out.scores[i];
    dscores[i] = score_coef[i] + diff * inv_var;
    dlog_std += diff * diff * inv_var - 1.0;
  }
  std::vector<double> analytic(params.values.size(), 0.0);
  backward(cache, dscores, value_coef, params, analytic);
  analytic[L.log_std] = dlog_std;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw NumericalError("non-finite analytic gradient at parameter index " + std::to_string(i));
    }
  }

  GradCheckResult result;
  PolicyParams probe = params;
  for (const auto& e : L.entries) {
    for (std::size_t k = 0; k < e.size; ++k) {
      const std::size_t idx = e.offset + k;
      const double saved = probe.values[idx];
      probe.values[idx] = saved + eps;
      const double up = loss(probe);
      probe.values[idx] = saved - eps;
      const double down = loss(probe);
      probe.values[idx] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double scale =
          std::max({std::abs(analytic[idx]), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(analytic[idx] - numeric) / scale;
      ++result.checked;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = rel;
        result.worst_parameter = e.name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  const auto& c = params.config;
  const ParamLayout L(c);
  std::vector<ArchiveTensor> tensors;
  tensors.push_back({"config",
                     {12},
                     std::vector<std::uint64_t>{c.input_length, c.in_channels, c.conv1.kernels,
                                                c.conv1.length, c.conv1.stride, c.conv2.kernels,
                                                c.conv2.length, c.conv2.stride, c.feature_dim,
                                                c.gen_embed_dim, c.head_hidden,
                                                static_cast<std::uint64_t>(c.activation)}});
  for (const auto& e : L.entries) {
    std::vector<std::uint64_t> shape(e.shape.begin(), e.shape.end());
    tensors.push_back({e.name, std::move(shape),
                       std::vector<double>(params.values.begin() + static_cast<long>(e.offset),
                                           params.values.begin() +
                                               static_cast<long>(e.offset + e.size))});
  }
  write_archive(path, kCheckpointMagic, kCheckpointVersion, tensors);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  const auto tensors = read_archive(path, kCheckpointMagic, kCheckpointVersion);
  const auto& cfg = tensor_u64(tensors, "config");
  if (cfg.size() != 12) throw ParseError(path.string(), 0, "malformed network config block");
  NetConfig c;
  c.input_length = cfg[0];
  c.in_channels = cfg[1];
  c.conv1 = {cfg[2], cfg[3], cfg[4]};
  c.conv2 = {cfg[5], cfg[6], cfg[7]};
  c.feature_dim = cfg[8];
  c.gen_embed_dim = cfg[9];
  c.head_hidden = cfg[10];
  if (cfg[11] > 1) throw ParseError(path.string(), 0, "unknown activation");
  c.activation = static_cast<Activation>(cfg[11]);
  PolicyParams params(c);
  const ParamLayout L(c);
  for (const auto& e : L.entries) {
    const auto& t = find_tensor(tensors, e.name);
    const auto& values = tensor_f64(tensors, e.name);
    if (!std::equal(t.shape.begin(), t.shape.end(), e.shape.begin(), e.shape.end())) {
      throw ParseError(path.string(), 0, "tensor '" + e.name + "' has an unexpected shape");
    }
    std::copy(values.begin(), values.end(), params.values.begin() + static_cast<long>(e.offset));
  }
  for (double v : params.values) {
    if (!std::isfinite(v)) throw ParseError(path.string(), 0, "checkpoint holds non-finite values");
  }
  return params;
}

PolicyParams load_checkpoint(const std::filesystem::path& path, std::size_t expected_loci) {
  auto params = load_checkpoint(path);
  if (params.config.input_length != expected_loci) {
    throw ConfigError("checkpoint " + path.string() + " was trained on m = " +
                      std::to_string(params.config.input_length) + " loci, dataset has m = " +
                      std::to_string(expected_loci));
  }
  return params;
}

}  // namespace breedrl
