#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "adda/error.hpp"
#include "adda/nn.hpp"

namespace adda::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Conv windows are contiguous runs of kernel*in_channels inputs starting every
// stride*in_channels entries, so the unfolded input is a row-strided view and
// the layer is a plain matrix product with the [kernel*in][out] weights.
ConstStridedMap unfolded(const LayerSpec& s, const FeatureMap& in, std::size_t out_len) {
  const auto rows = static_cast<Eigen::Index>(out_len);
  const auto cols = static_cast<Eigen::Index>(s.kernel * s.in_channels);
  return {in.data.data(), rows, cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(s.stride * s.in_channels))};
}

ConstMatrixMap weight_matrix(const LayerSpec& s, const LayerParams& p) {
  const std::size_t rows = s.kind == LayerKind::Conv1D ? s.kernel * s.in_channels : s.in_dim;
  const std::size_t cols = s.kind == LayerKind::Conv1D ? s.out_channels : s.out_dim;
  return {p.weights.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void conv_forward(const LayerSpec& s, const LayerParams& p, const FeatureMap& in, FeatureMap& out) {
  const auto co = static_cast<Eigen::Index>(s.out_channels);
  MatrixMap o(out.data.data(), static_cast<Eigen::Index>(out.length), co);
  o.noalias() = unfolded(s, in, out.length) * weight_matrix(s, p);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(p.biases.data(), co);
}

// Plain in-order loop: Eigen's vectorized reductions pick their summation
// order from the buffer alignment, which would make results depend on
// where the allocator placed the data.
void column_sums(const std::vector<double>& m, std::size_t rows, std::vector<double>& out) {
  const std::size_t cols = out.size();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
  }
}

void conv_backward(const LayerSpec& s, const LayerParams& p, const FeatureMap& in,
                   const FeatureMap& up, FeatureMap* din, GradientBundle* g) {
  const auto co = static_cast<Eigen::Index>(s.out_channels);
  const auto kci = static_cast<Eigen::Index>(s.kernel * s.in_channels);
  ConstMatrixMap u(up.data.data(), static_cast<Eigen::Index>(up.length), co);
  if (g) {
    MatrixMap(g->weights.data(), kci, co).noalias() = unfolded(s, in, up.length).transpose() * u;
    column_sums(up.data, up.length, g->biases);
  }
  if (din) {
    // gradient w.r.t. each unfolded window, then folded back with overlaps
    const RowMatrix dwin = u * weight_matrix(s, p).transpose();
    const std::size_t step = s.stride * s.in_channels;
    for (std::size_t pos = 0; pos < up.length; ++pos) {
      double* dst = &din->data[pos * step];
      const double* src = dwin.data() + pos * static_cast<std::size_t>(kci);
      for (Eigen::Index k = 0; k < kci; ++k) dst[k] += src[k];
    }
  }
}

void pool_forward(const LayerSpec& s, const FeatureMap& in, FeatureMap& out,
                  std::vector<std::size_t>* argmax) {
  const std::size_t c = in.channels;
  if (argmax) argmax->assign(out.data.size(), 0);
  for (std::size_t pos = 0; pos < out.length; ++pos) {
    const std::size_t start = pos * s.stride;
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::size_t best = start * c + ch;
      for (std::size_t k = 1; k < s.kernel; ++k) {
        const std::size_t idx = (start + k) * c + ch;
        // first maximum wins
        if (in.data[idx] > in.data[best]) best = idx;
      }
      out.data[pos * c + ch] = in.data[best];
      if (argmax) (*argmax)[pos * c + ch] = best;
    }
  }
}

void dense_forward(const LayerSpec& s, const LayerParams& p, const FeatureMap& in, FeatureMap& out) {
  const auto n_in = static_cast<Eigen::Index>(s.in_dim), n_out = static_cast<Eigen::Index>(s.out_dim);
  Eigen::Map<Eigen::RowVectorXd> o(out.data.data(), n_out);
  o.noalias() = Eigen::Map<const Eigen::RowVectorXd>(in.data.data(), n_in) * weight_matrix(s, p);
  o += Eigen::Map<const Eigen::RowVectorXd>(p.biases.data(), n_out);
}

void dense_backward(const LayerSpec& s, const LayerParams& p, const FeatureMap& in,
                    const FeatureMap& up, FeatureMap* din, GradientBundle* g) {
  const auto n_in = static_cast<Eigen::Index>(s.in_dim), n_out = static_cast<Eigen::Index>(s.out_dim);
  Eigen::Map<const Eigen::RowVectorXd> u(up.data.data(), n_out);
  if (g) {
    MatrixMap(g->weights.data(), n_in, n_out).noalias() =
        Eigen::Map<const Eigen::VectorXd>(in.data.data(), n_in) * u;
    Eigen::Map<Eigen::RowVectorXd>(g->biases.data(), n_out) = u;
  }
  if (din) {
    Eigen::Map<Eigen::VectorXd>(din->data.data(), n_in).noalias() = weight_matrix(s, p) * u.transpose();
  }
}

FeatureMap forward_impl(const LayerSpec& spec, const LayerParams& params, const FeatureMap& input,
                        std::vector<std::size_t>* argmax) {
  check_params(spec, params);
  if (input.data.size() != input.length * input.channels) {
    throw InvalidInput("feature map data length does not match its shape");
  }
  const Shape out_shape = spec.output_shape(input.shape());
  FeatureMap out(out_shape.length, out_shape.channels);
  switch (spec.kind) {
    case LayerKind::Conv1D:
      conv_forward(spec, params, input, out);
      break;
    case LayerKind::MaxPool1D:
      pool_forward(spec, input, out, argmax);
      break;
    case LayerKind::ReLU:
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(input.data[i], 0.0);
      break;
    case LayerKind::Dense:
      dense_forward(spec, params, input, out);
      break;
  }
  return out;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << shape.length << "x" << shape.channels;
  return os.str();
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::MaxPool1D: return "maxpool1d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dense: return "dense";
  }
  return "unknown";
}

FeatureMap::FeatureMap(std::size_t length, std::size_t channels)
    : length(length), channels(channels), data(length * channels, 0.0) {}

FeatureMap::FeatureMap(std::size_t length, std::size_t channels, std::vector<double> values)
    : length(length), channels(channels), data(std::move(values)) {
  if (data.size() != length * channels) {
    throw InvalidInput("feature map data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(Shape{length, channels}));
  }
}

FeatureMap FeatureMap::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return FeatureMap(1, n, std::move(values));
}

FeatureMap FeatureMap::signal(std::vector<double> values) {
  const std::size_t n = values.size();
  return FeatureMap(n, 1, std::move(values));
}

LayerSpec LayerSpec::conv(std::size_t kernel, std::size_t stride, std::size_t in_channels,
                          std::size_t out_channels) {
  if (kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0) {
    throw InvalidInput("conv1d: kernel, stride and channel counts must be positive");
  }
  LayerSpec s;
  s.kind = LayerKind::Conv1D;
  s.kernel = kernel;
  s.stride = stride;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t kernel, std::size_t stride, std::size_t channels) {
  if (kernel == 0 || stride == 0 || channels == 0) {
    throw InvalidInput("maxpool1d: kernel, stride and channel count must be positive");
  }
  LayerSpec s;
  s.kind = LayerKind::MaxPool1D;
  s.kernel = kernel;
  s.stride = stride;
  s.in_channels = channels;
  s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::dense(std::size_t in_dim, std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) throw InvalidInput("dense: dimensions must be positive");
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

Shape LayerSpec::output_shape(const Shape& input) const {
  switch (kind) {
    case LayerKind::Conv1D:
    case LayerKind::MaxPool1D: {
      if (input.channels != in_channels) {
        throw InvalidInput(to_string(kind) + ": expected " + std::to_string(in_channels) +
                           " input channels, got " + std::to_string(input.channels));
      }
      if (kernel > input.length) {
        throw InvalidInput(to_string(kind) + ": kernel " + std::to_string(kernel) +
                           " exceeds input length " + std::to_string(input.length));
      }
      return {(input.length - kernel) / stride + 1, out_channels};
    }
    case LayerKind::ReLU:
      if (input.size() == 0) throw InvalidInput("relu: empty input");
      return input;
    case LayerKind::Dense:
      if (input.size() != in_dim) {
        throw InvalidInput("dense: expected " + std::to_string(in_dim) + " inputs, got " +
                           std::to_string(input.size()));
      }
      return {1, out_dim};
  }
  throw InvalidInput("unknown layer kind");
}

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::Conv1D: return kernel * in_channels * out_channels;
    case LayerKind::Dense: return in_dim * out_dim;
    default: return 0;
  }
}

std::size_t LayerSpec::bias_count() const {
  switch (kind) {
    case LayerKind::Conv1D: return out_channels;
    case LayerKind::Dense: return out_dim;
    default: return 0;
  }
}

LayerParams LayerParams::zeros(const LayerSpec& spec) {
  return {std::vector<double>(spec.weight_count(), 0.0), std::vector<double>(spec.bias_count(), 0.0)};
}

LayerParams LayerParams::he_normal(const LayerSpec& spec, std::mt19937_64& rng) {
  LayerParams p = zeros(spec);
  if (!spec.has_params()) return p;
  const std::size_t fan_in =
      spec.kind == LayerKind::Conv1D ? spec.kernel * spec.in_channels : spec.in_dim;
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& w : p.weights) w = normal(rng);
  return p;
}

GradientBundle GradientBundle::zeros_like(const LayerParams& params) {
  return {std::vector<double>(params.weights.size(), 0.0),
          std::vector<double>(params.biases.size(), 0.0)};
}

void GradientBundle::accumulate(const GradientBundle& other) {
  if (other.weights.size() != weights.size() || other.biases.size() != biases.size()) {
    throw InvalidInput("gradient accumulation: shape mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
  for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += other.biases[i];
}

void GradientBundle::scale(double factor) {
  for (double& w : weights) w *= factor;
  for (double& b : biases) b *= factor;
}

void check_params(const LayerSpec& spec, const LayerParams& params) {
  if (params.weights.size() != spec.weight_count() || params.biases.size() != spec.bias_count()) {
    throw InvalidInput(to_string(spec.kind) + ": parameter arrays (" +
                       std::to_string(params.weights.size()) + ", " +
                       std::to_string(params.biases.size()) + ") do not match spec (" +
                       std::to_string(spec.weight_count()) + ", " +
                       std::to_string(spec.bias_count()) + ")");
  }
}

ForwardResult layer_forward(const LayerSpec& spec, const LayerParams& params,
                            const FeatureMap& input) {
  ForwardResult r;
  r.output = forward_impl(spec, params, input, &r.cache.argmax);
  r.cache.spec = spec;
  r.cache.input = input;
  r.cache.output_shape = r.output.shape();
  return r;
}

FeatureMap layer_apply(const LayerSpec& spec, const LayerParams& params, const FeatureMap& input) {
  return forward_impl(spec, params, input, nullptr);
}

BackwardResult layer_backward(const LayerSpec& spec, const LayerParams& params,
                              const ForwardCache& cache, const FeatureMap& upstream,
                              BackwardOptions options) {
  check_params(spec, params);
  if (!(cache.spec == spec)) throw InvalidInput("layer_backward: cache belongs to a different layer");
  if (cache.input.data.size() != cache.input.length * cache.input.channels ||
      !(spec.output_shape(cache.input.shape()) == cache.output_shape)) {
    throw InvalidInput("layer_backward: inconsistent cache");
  }
  if (!(upstream.shape() == cache.output_shape) ||
      upstream.data.size() != cache.output_shape.size()) {
    throw InvalidInput("layer_backward: upstream shape " + to_string(upstream.shape()) +
                       " does not match forward output " + to_string(cache.output_shape));
  }
  const FeatureMap& in = cache.input;
  BackwardResult r;
  if (options.input_grad) r.input_grad = FeatureMap(in.length, in.channels);
  if (options.param_grad) r.param_grad = GradientBundle::zeros_like(params);
  FeatureMap* din = options.input_grad ? &r.input_grad : nullptr;
  GradientBundle* dparam = options.param_grad ? &r.param_grad : nullptr;
  switch (spec.kind) {
    case LayerKind::Conv1D:
      conv_backward(spec, params, in, upstream, din, dparam);
      break;
    case LayerKind::MaxPool1D:
      if (!din) break;
      if (cache.argmax.size() != upstream.data.size()) {
        throw InvalidInput("layer_backward: pool cache has no argmax record");
      }
      for (std::size_t i = 0; i < upstream.data.size(); ++i) {
        r.input_grad.data[cache.argmax[i]] += upstream.data[i];
      }
      break;
    case LayerKind::ReLU:
      if (!din) break;
      for (std::size_t i = 0; i < in.data.size(); ++i) {
        r.input_grad.data[i] = in.data[i] > 0.0 ? upstream.data[i] : 0.0;
      }
      break;
    case LayerKind::Dense:
      dense_backward(spec, params, in, upstream, din, dparam);
      break;
  }
  return r;
}

Batch Batch::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidInput("batch: no rows");
  Batch b(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != b.cols) throw InvalidInput("batch: rows differ in length");
    std::copy(rows[r].begin(), rows[r].end(), b.data.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
  }
  return b;
}

Batch dense_forward_batch(const LayerSpec& spec, const LayerParams& params, const Batch& input) {
  if (spec.kind != LayerKind::Dense) throw InvalidInput("dense_forward_batch: not a dense layer");
  check_params(spec, params);
  if (input.cols != spec.in_dim || input.data.size() != input.rows * input.cols) {
    throw InvalidInput("dense_forward_batch: expected rows of " + std::to_string(spec.in_dim));
  }
  Batch out(input.rows, spec.out_dim);
  const auto rows = static_cast<Eigen::Index>(input.rows);
  MatrixMap o(out.data.data(), rows, static_cast<Eigen::Index>(spec.out_dim));
  o.noalias() = ConstMatrixMap(input.data.data(), rows, static_cast<Eigen::Index>(spec.in_dim)) *
                weight_matrix(spec, params);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(params.biases.data(),
                                                      static_cast<Eigen::Index>(spec.out_dim));
  return out;
}

DenseBatchBackward dense_backward_batch(const LayerSpec& spec, const LayerParams& params,
                                        const Batch& input, const Batch& upstream,
                                        BackwardOptions options) {
  if (spec.kind != LayerKind::Dense) throw InvalidInput("dense_backward_batch: not a dense layer");
  check_params(spec, params);
  if (input.cols != spec.in_dim || upstream.cols != spec.out_dim || input.rows != upstream.rows) {
    throw InvalidInput("dense_backward_batch: input/upstream shapes do not match the layer");
  }
  const auto rows = static_cast<Eigen::Index>(input.rows);
  const auto n_in = static_cast<Eigen::Index>(spec.in_dim), n_out = static_cast<Eigen::Index>(spec.out_dim);
  ConstMatrixMap x(input.data.data(), rows, n_in);
  ConstMatrixMap u(upstream.data.data(), rows, n_out);
  DenseBatchBackward r;
  if (options.param_grad) {
    r.param_grad = GradientBundle::zeros_like(params);
    MatrixMap(r.param_grad.weights.data(), n_in, n_out).noalias() = x.transpose() * u;
    column_sums(upstream.data, upstream.rows, r.param_grad.biases);
  }
  if (options.input_grad) {
    r.input_grad = Batch(input.rows, spec.in_dim);
    MatrixMap(r.input_grad.data.data(), rows, n_in).noalias() = u * weight_matrix(spec, params).transpose();
  }
  return r;
}

}  // namespace adda::nn
