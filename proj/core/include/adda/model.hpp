#pragma once

// The four A2CNN components: source/target feature extractors (with partial
// weight tying between them), the softmax label classifier, and the domain
// discriminator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "adda/nn.hpp"
#include "adda/signal.hpp"

namespace adda::model {

inline constexpr std::size_t kGroupCount = 7;
inline constexpr std::size_t kNumClasses = 10;
inline constexpr std::size_t kInputLength = signal::kSpectrumLength;
inline constexpr std::size_t kDiscriminatorHidden = 500;

// One parameterized layer plus the parameter-free layers that follow it.
struct GroupSpec {
  nn::LayerSpec main;
  bool relu = false;
  std::optional<nn::LayerSpec> pool;

  std::vector<nn::LayerSpec> layers() const;
};

// Five conv+pool blocks and two dense layers, input 2048x1, output 10.
const std::array<GroupSpec, kGroupCount>& extractor_specs();

// Output shape of every conv, pool and dense layer in order (12 entries).
std::vector<nn::Shape> extractor_shape_chain(nn::Shape input = {kInputLength, 1});

// Input shape seen by group g.
nn::Shape group_input_shape(std::size_t group);

class FeatureExtractor {
 public:
  struct GroupTrace {
    std::vector<nn::ForwardCache> caches;
  };

  struct Trace {
    std::size_t first_group = 0;
    std::array<GroupTrace, kGroupCount> groups;
    std::vector<double> logits;
  };

  struct Gradients {
    std::array<std::optional<nn::GradientBundle>, kGroupCount> groups;
    nn::FeatureMap input_grad;  // empty unless requested
  };

  // All-zero parameters; use build() for an initialized network.
  FeatureExtractor();
  static FeatureExtractor build(std::uint64_t seed);

  // Copies are deep: a copied extractor never shares storage with its origin.
  FeatureExtractor(const FeatureExtractor& other);
  FeatureExtractor& operator=(const FeatureExtractor& other);
  FeatureExtractor(FeatureExtractor&&) noexcept = default;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept = default;

  const nn::LayerParams& group(std::size_t g) const { return *groups_.at(g); }
  nn::LayerParams& mutable_group(std::size_t g) { return *groups_.at(g); }
  bool shares_group(std::size_t g, const FeatureExtractor& other) const {
    return groups_.at(g) == other.groups_.at(g);
  }
  std::size_t parameter_count() const;

  // Forward through groups [first, last) starting from `input`, which must
  // have group_input_shape(first).
  nn::FeatureMap apply_groups(nn::FeatureMap input, std::size_t first, std::size_t last) const;

  std::vector<double> logits(std::span<const double> amplitudes) const;

  // Forward from group `first_group` with caches for backpropagation.
  Trace forward(nn::FeatureMap input, std::size_t first_group = 0) const;

  // Backpropagates a logit gradient down to (and including) `stop_group`.
  // Groups below stop_group get no gradient.
  Gradients backward(const Trace& trace, std::span<const double> logit_grad,
                     std::size_t stop_group = 0, bool want_input_grad = false) const;

  friend bool operator==(const FeatureExtractor& a, const FeatureExtractor& b);

 private:
  friend class TiedPair;
  std::array<std::shared_ptr<nn::LayerParams>, kGroupCount> groups_;
};

std::vector<double> extract_features(const FeatureExtractor& extractor,
                                     const signal::SpectrumSample& sample);

struct Prediction {
  int label = 1;
  std::vector<double> posterior;
};

// argmax of the softmax posterior; ties go to the lowest class index.
Prediction predict_label(const FeatureExtractor& extractor, const signal::SpectrumSample& sample);
Prediction predict_from_logits(std::span<const double> logits);

// Source and target extractors whose first (7 - l) groups share storage.
class TiedPair {
 public:
  static TiedPair init_target_from_source(const FeatureExtractor& source, int untie_count);

  TiedPair(const TiedPair& other);
  TiedPair& operator=(const TiedPair& other);
  TiedPair(TiedPair&&) noexcept = default;
  TiedPair& operator=(TiedPair&&) noexcept = default;

  const FeatureExtractor& source() const { return source_; }
  const FeatureExtractor& target() const { return target_; }
  FeatureExtractor& source() { return source_; }
  FeatureExtractor& target() { return target_; }
  int untie_count() const { return untie_count_; }
  std::size_t first_untied_group() const { return kGroupCount - static_cast<std::size_t>(untie_count_); }

 private:
  TiedPair(FeatureExtractor source, FeatureExtractor target, int untie_count);
  void relink();

  FeatureExtractor source_;
  FeatureExtractor target_;
  int untie_count_ = 1;
};

inline TiedPair init_target_from_source(const FeatureExtractor& source, int untie_count) {
  return TiedPair::init_target_from_source(source, untie_count);
}

// input -> 500 -> 500 -> 1 with ReLU on the hidden layers; emits a raw logit.
class Discriminator {
 public:
  static constexpr std::size_t kLayers = 3;

  struct Trace {
    std::array<nn::ForwardCache, kLayers> dense;
    std::array<nn::ForwardCache, kLayers - 1> relu;
    double logit = 0.0;
  };

  struct Gradients {
    std::array<nn::GradientBundle, kLayers> layers;
    std::vector<double> input_grad;
  };

  explicit Discriminator(std::size_t input_dim = kNumClasses);
  static Discriminator build(std::uint64_t seed, std::size_t input_dim = kNumClasses);

  std::size_t input_dim() const { return specs_[0].in_dim; }
  const nn::LayerSpec& spec(std::size_t i) const { return specs_.at(i); }
  const nn::LayerParams& layer(std::size_t i) const { return params_.at(i); }
  nn::LayerParams& mutable_layer(std::size_t i) { return params_.at(i); }

  double logit(std::span<const double> feature) const;
  double probability(std::span<const double> feature) const { return nn::sigmoid(logit(feature)); }

  Trace forward(std::span<const double> feature) const;
  Gradients backward(const Trace& trace, double logit_grad, bool want_param_grads = true) const;

  // Row-wise versions over a minibatch of features.
  struct BatchTrace {
    std::array<nn::Batch, kLayers> inputs;  // input of each dense layer
    std::array<nn::Batch, kLayers - 1> pre_activation;
    std::vector<double> logits;
  };

  struct BatchGradients {
    std::array<nn::GradientBundle, kLayers> layers;  // summed over rows
    nn::Batch input_grad;
  };

  BatchTrace forward_batch(nn::Batch features) const;
  BatchGradients backward_batch(const BatchTrace& trace, std::span<const double> logit_grads,
                                bool want_param_grads = true) const;

  friend bool operator==(const Discriminator&, const Discriminator&) = default;

 private:
  std::array<nn::LayerSpec, kLayers> specs_;
  std::array<nn::LayerParams, kLayers> params_;
};

inline Discriminator::Trace discriminator_forward(const Discriminator& disc,
                                                  std::span<const double> feature) {
  return disc.forward(feature);
}

}  // namespace adda::model
