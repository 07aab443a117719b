#include "adda/model.hpp"

#include <algorithm>
#include <random>

#include "adda/error.hpp"

namespace adda::model {

std::vector<nn::LayerSpec> GroupSpec::layers() const {
  std::vector<nn::LayerSpec> out{main};
  if (relu) out.push_back(nn::LayerSpec::relu());
  if (pool) out.push_back(*pool);
  return out;
}

const std::array<GroupSpec, kGroupCount>& extractor_specs() {
  using nn::LayerSpec;
  static const std::array<GroupSpec, kGroupCount> specs = {
      GroupSpec{LayerSpec::conv(32, 2, 1, 8), true, LayerSpec::max_pool(2, 2, 8)},
      GroupSpec{LayerSpec::conv(16, 2, 8, 16), true, LayerSpec::max_pool(2, 2, 16)},
      GroupSpec{LayerSpec::conv(8, 2, 16, 32), true, LayerSpec::max_pool(2, 2, 32)},
      GroupSpec{LayerSpec::conv(8, 2, 32, 32), true, LayerSpec::max_pool(2, 2, 32)},
      GroupSpec{LayerSpec::conv(3, 2, 32, 64), true, LayerSpec::max_pool(2, 2, 64)},
      GroupSpec{LayerSpec::dense(64, 500), true, std::nullopt},
      GroupSpec{LayerSpec::dense(500, kNumClasses), false, std::nullopt},
  };
  return specs;
}

std::vector<nn::Shape> extractor_shape_chain(nn::Shape input) {
  std::vector<nn::Shape> chain;
  nn::Shape shape = input;
  for (const GroupSpec& g : extractor_specs()) {
    shape = g.main.output_shape(shape);
    chain.push_back(shape);
    if (g.pool) {
      shape = g.pool->output_shape(shape);
      chain.push_back(shape);
    }
  }
  return chain;
}

nn::Shape group_input_shape(std::size_t group) {
  if (group >= kGroupCount) throw InvalidInput("group index out of range");
  nn::Shape shape{kInputLength, 1};
  for (std::size_t g = 0; g < group; ++g) {
    for (const auto& layer : extractor_specs()[g].layers()) shape = layer.output_shape(shape);
  }
  return shape;
}

// ---- FeatureExtractor ---------------------------------------------------

FeatureExtractor::FeatureExtractor() {
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    groups_[g] = std::make_shared<nn::LayerParams>(nn::LayerParams::zeros(extractor_specs()[g].main));
  }
}

FeatureExtractor FeatureExtractor::build(std::uint64_t seed) {
  FeatureExtractor fe;
  std::mt19937_64 rng(seed);
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    *fe.groups_[g] = nn::LayerParams::he_normal(extractor_specs()[g].main, rng);
  }
  return fe;
}

FeatureExtractor::FeatureExtractor(const FeatureExtractor& other) {
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    groups_[g] = std::make_shared<nn::LayerParams>(*other.groups_[g]);
  }
}

FeatureExtractor& FeatureExtractor::operator=(const FeatureExtractor& other) {
  if (this != &other) {
    FeatureExtractor copy(other);
    groups_ = std::move(copy.groups_);
  }
  return *this;
}

std::size_t FeatureExtractor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g->size();
  return n;
}

bool operator==(const FeatureExtractor& a, const FeatureExtractor& b) {
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    if (!(*a.groups_[g] == *b.groups_[g])) return false;
  }
  return true;
}

nn::FeatureMap FeatureExtractor::apply_groups(nn::FeatureMap input, std::size_t first,
                                              std::size_t last) const {
  if (first > last || last > kGroupCount) throw InvalidInput("apply_groups: bad group range");
  static const nn::LayerParams kNoParams;
  for (std::size_t g = first; g < last; ++g) {
    const GroupSpec& spec = extractor_specs()[g];
    input = nn::layer_apply(spec.main, *groups_[g], input);
    if (spec.relu) input = nn::layer_apply(nn::LayerSpec::relu(), kNoParams, input);
    if (spec.pool) input = nn::layer_apply(*spec.pool, kNoParams, input);
  }
  return input;
}

std::vector<double> FeatureExtractor::logits(std::span<const double> amplitudes) const {
  if (amplitudes.size() != kInputLength) {
    throw InvalidInput("extractor input must have " + std::to_string(kInputLength) +
                       " amplitudes, got " + std::to_string(amplitudes.size()));
  }
  nn::FeatureMap x = nn::FeatureMap::signal({amplitudes.begin(), amplitudes.end()});
  return apply_groups(std::move(x), 0, kGroupCount).data;
}

FeatureExtractor::Trace FeatureExtractor::forward(nn::FeatureMap input,
                                                  std::size_t first_group) const {
  if (first_group >= kGroupCount) throw InvalidInput("forward: group index out of range");
  if (!(input.shape() == group_input_shape(first_group))) {
    throw InvalidInput("forward: input shape " + nn::to_string(input.shape()) +
                       " does not match group " + std::to_string(first_group) + " input " +
                       nn::to_string(group_input_shape(first_group)));
  }
  static const nn::LayerParams kNoParams;
  Trace trace;
  trace.first_group = first_group;
  for (std::size_t g = first_group; g < kGroupCount; ++g) {
    for (const nn::LayerSpec& layer : extractor_specs()[g].layers()) {
      const nn::LayerParams& p = layer.has_params() ? *groups_[g] : kNoParams;
      auto r = nn::layer_forward(layer, p, input);
      trace.groups[g].caches.push_back(std::move(r.cache));
      input = std::move(r.output);
    }
  }
  trace.logits = std::move(input.data);
  return trace;
}

FeatureExtractor::Gradients FeatureExtractor::backward(const Trace& trace,
                                                       std::span<const double> logit_grad,
                                                       std::size_t stop_group,
                                                       bool want_input_grad) const {
  if (stop_group < trace.first_group || stop_group >= kGroupCount) {
    throw InvalidInput("backward: stop group outside the traced range");
  }
  if (logit_grad.size() != kNumClasses) throw InvalidInput("backward: logit gradient must have 10 entries");
  static const nn::LayerParams kNoParams;
  Gradients out;
  nn::FeatureMap upstream = nn::FeatureMap::vector({logit_grad.begin(), logit_grad.end()});
  for (std::size_t g = kGroupCount; g-- > stop_group;) {
    const auto layers = extractor_specs()[g].layers();
    const auto& caches = trace.groups[g].caches;
    if (caches.size() != layers.size()) throw InvalidInput("backward: trace does not cover group");
    for (std::size_t i = layers.size(); i-- > 0;) {
      const nn::LayerSpec& layer = layers[i];
      const bool last = g == stop_group && i == 0;
      nn::BackwardOptions opts;
      opts.input_grad = !last || want_input_grad;
      opts.param_grad = layer.has_params();
      const nn::LayerParams& p = layer.has_params() ? *groups_[g] : kNoParams;
      auto r = nn::layer_backward(layer, p, caches[i], upstream, opts);
      if (layer.has_params()) out.groups[g] = std::move(r.param_grad);
      upstream = std::move(r.input_grad);
    }
  }
  if (want_input_grad) out.input_grad = std::move(upstream);
  return out;
}

std::vector<double> extract_features(const FeatureExtractor& extractor,
                                     const signal::SpectrumSample& sample) {
  return extractor.logits(sample.amplitudes);
}

Prediction predict_from_logits(std::span<const double> logits) {
  Prediction p;
  p.posterior = nn::softmax(logits);
  // max_element returns the first maximum, i.e. the lowest class index
  const auto best = std::max_element(p.posterior.begin(), p.posterior.end());
  p.label = static_cast<int>(best - p.posterior.begin()) + 1;
  return p;
}

Prediction predict_label(const FeatureExtractor& extractor, const signal::SpectrumSample& sample) {
  return predict_from_logits(extract_features(extractor, sample));
}

// ---- TiedPair -----------------------------------------------------------

TiedPair::TiedPair(FeatureExtractor source, FeatureExtractor target, int untie_count)
    : source_(std::move(source)), target_(std::move(target)), untie_count_(untie_count) {
  relink();
}

void TiedPair::relink() {
  for (std::size_t g = 0; g < first_untied_group(); ++g) target_.groups_[g] = source_.groups_[g];
}

TiedPair TiedPair::init_target_from_source(const FeatureExtractor& source, int untie_count) {
  if (untie_count < 1 || untie_count > static_cast<int>(kGroupCount)) {
    throw InvalidInput("untie count l must be in [1, 7], got " + std::to_string(untie_count));
  }
  return TiedPair(source, source, untie_count);
}

TiedPair::TiedPair(const TiedPair& other)
    : source_(other.source_), target_(other.target_), untie_count_(other.untie_count_) {
  relink();
}

TiedPair& TiedPair::operator=(const TiedPair& other) {
  if (this != &other) {
    source_ = other.source_;
    target_ = other.target_;
    untie_count_ = other.untie_count_;
    relink();
  }
  return *this;
}

// ---- Discriminator ------------------------------------------------------

Discriminator::Discriminator(std::size_t input_dim)
    : specs_{nn::LayerSpec::dense(input_dim, kDiscriminatorHidden),
             nn::LayerSpec::dense(kDiscriminatorHidden, kDiscriminatorHidden),
             nn::LayerSpec::dense(kDiscriminatorHidden, 1)} {
  for (std::size_t i = 0; i < kLayers; ++i) params_[i] = nn::LayerParams::zeros(specs_[i]);
}

Discriminator Discriminator::build(std::uint64_t seed, std::size_t input_dim) {
  Discriminator d(input_dim);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < kLayers; ++i) d.params_[i] = nn::LayerParams::he_normal(d.specs_[i], rng);
  return d;
}

double Discriminator::logit(std::span<const double> feature) const {
  if (feature.size() != input_dim()) {
    throw InvalidInput("discriminator expects " + std::to_string(input_dim()) + " features, got " +
                       std::to_string(feature.size()));
  }
  static const nn::LayerParams kNoParams;
  nn::FeatureMap x = nn::FeatureMap::vector({feature.begin(), feature.end()});
  for (std::size_t i = 0; i < kLayers; ++i) {
    x = nn::layer_apply(specs_[i], params_[i], x);
    if (i + 1 < kLayers) x = nn::layer_apply(nn::LayerSpec::relu(), kNoParams, x);
  }
  return x.data[0];
}

Discriminator::Trace Discriminator::forward(std::span<const double> feature) const {
  if (feature.size() != input_dim()) {
    throw InvalidInput("discriminator expects " + std::to_string(input_dim()) + " features, got " +
                       std::to_string(feature.size()));
  }
  static const nn::LayerParams kNoParams;
  Trace t;
  nn::FeatureMap x = nn::FeatureMap::vector({feature.begin(), feature.end()});
  for (std::size_t i = 0; i < kLayers; ++i) {
    auto r = nn::layer_forward(specs_[i], params_[i], x);
    t.dense[i] = std::move(r.cache);
    x = std::move(r.output);
    if (i + 1 < kLayers) {
      auto a = nn::layer_forward(nn::LayerSpec::relu(), kNoParams, x);
      t.relu[i] = std::move(a.cache);
      x = std::move(a.output);
    }
  }
  t.logit = x.data[0];
  return t;
}

Discriminator::Gradients Discriminator::backward(const Trace& trace, double logit_grad,
                                                 bool want_param_grads) const {
  static const nn::LayerParams kNoParams;
  Gradients out;
  nn::FeatureMap upstream = nn::FeatureMap::vector({logit_grad});
  for (std::size_t i = kLayers; i-- > 0;) {
    nn::BackwardOptions opts;
    opts.param_grad = want_param_grads;
    auto r = nn::layer_backward(specs_[i], params_[i], trace.dense[i], upstream, opts);
    out.layers[i] = std::move(r.param_grad);
    upstream = std::move(r.input_grad);
    if (i > 0) {
      upstream = nn::layer_backward(nn::LayerSpec::relu(), kNoParams, trace.relu[i - 1], upstream).input_grad;
    }
  }
  out.input_grad = std::move(upstream.data);
  return out;
}

Discriminator::BatchTrace Discriminator::forward_batch(nn::Batch features) const {
  BatchTrace t;
  nn::Batch x = std::move(features);
  for (std::size_t i = 0; i < kLayers; ++i) {
    nn::Batch y = nn::dense_forward_batch(specs_[i], params_[i], x);
    t.inputs[i] = std::move(x);
    if (i + 1 < kLayers) {
      x = y;
      for (double& v : x.data) v = std::max(v, 0.0);
      t.pre_activation[i] = std::move(y);
    } else {
      t.logits = std::move(y.data);
    }
  }
  return t;
}

Discriminator::BatchGradients Discriminator::backward_batch(const BatchTrace& trace,
                                                            std::span<const double> logit_grads,
                                                            bool want_param_grads) const {
  if (logit_grads.size() != trace.logits.size()) {
    throw InvalidInput("discriminator backward: one logit gradient per row expected");
  }
  BatchGradients out;
  nn::Batch upstream(logit_grads.size(), 1);
  std::copy(logit_grads.begin(), logit_grads.end(), upstream.data.begin());
  for (std::size_t i = kLayers; i-- > 0;) {
    auto r = nn::dense_backward_batch(specs_[i], params_[i], trace.inputs[i], upstream,
                                      {.input_grad = true, .param_grad = want_param_grads});
    out.layers[i] = std::move(r.param_grad);
    upstream = std::move(r.input_grad);
    if (i > 0) {
      const auto& pre = trace.pre_activation[i - 1].data;
      for (std::size_t j = 0; j < pre.size(); ++j) {
        if (!(pre[j] > 0.0)) upstream.data[j] = 0.0;
      }
    }
  }
  out.input_grad = std::move(upstream);
  return out;
}

}  // namespace adda::model

