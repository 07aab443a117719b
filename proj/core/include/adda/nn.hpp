#pragma once

// Deterministic 1-D network primitives: layer forward/backward passes,
// losses with their logit gradients, and the Adam update.
//
// Activations are stored position-major, channel-minor: element (p, c) of a
// map with C channels lives at data[p * C + c].

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adda::nn {

struct Shape {
  std::size_t length = 0;
  std::size_t channels = 0;

  std::size_t size() const { return length * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

struct FeatureMap {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t length, std::size_t channels);
  FeatureMap(std::size_t length, std::size_t channels, std::vector<double> data);

  // A single-position map holding a flat vector.
  static FeatureMap vector(std::vector<double> values);
  // A single-channel map over positions.
  static FeatureMap signal(std::vector<double> values);

  Shape shape() const { return {length, channels}; }
  double& at(std::size_t pos, std::size_t ch) { return data[pos * channels + ch]; }
  double at(std::size_t pos, std::size_t ch) const { return data[pos * channels + ch]; }
};

enum class LayerKind : std::uint8_t { Conv1D, MaxPool1D, ReLU, Dense };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  static LayerSpec conv(std::size_t kernel, std::size_t stride, std::size_t in_channels,
                        std::size_t out_channels);
  static LayerSpec max_pool(std::size_t kernel, std::size_t stride, std::size_t channels);
  static LayerSpec relu();
  static LayerSpec dense(std::size_t in_dim, std::size_t out_dim);

  // Output shape for a given input shape; throws InvalidInput when the input
  // does not fit (channel mismatch, kernel longer than the input, ...).
  Shape output_shape(const Shape& input) const;

  std::size_t weight_count() const;
  std::size_t bias_count() const;
  bool has_params() const { return kind == LayerKind::Conv1D || kind == LayerKind::Dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Conv weights are laid out [kernel][in_channels][out_channels]; dense
// weights [in_dim][out_dim]. Pool and ReLU layers carry empty arrays.
struct LayerParams {
  std::vector<double> weights;
  std::vector<double> biases;

  static LayerParams zeros(const LayerSpec& spec);
  // He initialization: N(0, 2 / fan_in) weights, zero biases.
  static LayerParams he_normal(const LayerSpec& spec, std::mt19937_64& rng);

  std::size_t size() const { return weights.size() + biases.size(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Gradient of a scalar with respect to one LayerParams.
struct GradientBundle {
  std::vector<double> weights;
  std::vector<double> biases;

  static GradientBundle zeros_like(const LayerParams& params);
  void accumulate(const GradientBundle& other);
  void scale(double factor);
  bool congruent_with(const LayerParams& params) const {
    return weights.size() == params.weights.size() && biases.size() == params.biases.size();
  }
};

// Everything layer_backward needs from the forward call that produced it.
struct ForwardCache {
  LayerSpec spec;
  FeatureMap input;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // MaxPool1D only; flat input index per output entry
};

struct ForwardResult {
  FeatureMap output;
  ForwardCache cache;
};

struct BackwardResult {
  FeatureMap input_grad;
  GradientBundle param_grad;
};

void check_params(const LayerSpec& spec, const LayerParams& params);

ForwardResult layer_forward(const LayerSpec& spec, const LayerParams& params,
                            const FeatureMap& input);

// Forward pass without retaining a cache.
FeatureMap layer_apply(const LayerSpec& spec, const LayerParams& params, const FeatureMap& input);

// Parts of the backward pass to compute. Skipped parts come back empty.
struct BackwardOptions {
  bool input_grad = true;
  bool param_grad = true;
};

BackwardResult layer_backward(const LayerSpec& spec, const LayerParams& params,
                              const ForwardCache& cache, const FeatureMap& upstream,
                              BackwardOptions options = {});

// ---- batched dense layers --------------------------------------------

// Row-major stack of equally sized vectors, one per row.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Batch() = default;
  Batch(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), data(rows * cols, 0.0) {}
  static Batch from_rows(const std::vector<std::vector<double>>& rows);

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Dense layer applied to every row.
Batch dense_forward_batch(const LayerSpec& spec, const LayerParams& params, const Batch& input);

struct DenseBatchBackward {
  Batch input_grad;
  GradientBundle param_grad;  // summed over rows
};

DenseBatchBackward dense_backward_batch(const LayerSpec& spec, const LayerParams& params,
                                        const Batch& input, const Batch& upstream,
                                        BackwardOptions options = {});

// ---- losses -------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits);

struct XentResult {
  double loss = 0.0;
  std::vector<double> logit_grad;
};

// Negative log posterior of `label` (1-based) under softmax(logits), with
// gradient softmax(logits) - onehot(label).
XentResult softmax_xent_loss(std::span<const double> logits, int label);

double sigmoid(double x);

struct LogisticResult {
  double loss = 0.0;
  double logit_grad = 0.0;
};

// Binary cross-entropy of sigmoid(logit) against target in {0, 1}.
LogisticResult logistic_loss(double logit, int target);

// ---- Adam ---------------------------------------------------------------

enum class Direction : std::uint8_t { Minimize, Maximize };

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m_weights, m_biases;
  std::vector<double> v_weights, v_biases;
  std::uint64_t t = 0;
  AdamHyper hyper;

  static AdamState for_params(const LayerParams& params, AdamHyper hyper);
};

void adam_step(LayerParams& params, const GradientBundle& grads, AdamState& state,
               Direction direction = Direction::Minimize);

}  // namespace adda::nn
