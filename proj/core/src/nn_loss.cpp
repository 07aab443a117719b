#include <algorithm>
#include <cmath>

#include "adda/error.hpp"
#include "adda/nn.hpp"

namespace adda::nn {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("softmax: empty logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

XentResult softmax_xent_loss(std::span<const double> logits, int label) {
  if (label < 1 || static_cast<std::size_t>(label) > logits.size()) {
    throw InvalidInput("softmax_xent_loss: label " + std::to_string(label) + " outside 1.." +
                       std::to_string(logits.size()));
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double u : logits) total += std::exp(u - top);
  const double log_norm = top + std::log(total);
  const std::size_t idx = static_cast<std::size_t>(label - 1);

  XentResult r;
  r.loss = log_norm - logits[idx];
  r.logit_grad = softmax(logits);
  r.logit_grad[idx] -= 1.0;
  return r;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LogisticResult logistic_loss(double logit, int target) {
  if (target != 0 && target != 1) throw InvalidInput("logistic_loss: target must be 0 or 1");
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
  const double z = target == 1 ? -logit : logit;
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return {softplus, sigmoid(logit) - static_cast<double>(target)};
}

AdamState AdamState::for_params(const LayerParams& params, AdamHyper hyper) {
  if (!(hyper.lr > 0 && hyper.beta1 > 0 && hyper.beta1 < 1 && hyper.beta2 > 0 &&
        hyper.beta2 < 1 && hyper.epsilon > 0)) {
    throw InvalidInput("adam: hyperparameters out of range");
  }
  AdamState s;
  s.m_weights.assign(params.weights.size(), 0.0);
  s.v_weights.assign(params.weights.size(), 0.0);
  s.m_biases.assign(params.biases.size(), 0.0);
  s.v_biases.assign(params.biases.size(), 0.0);
  s.hyper = hyper;
  return s;
}

namespace {

void adam_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                 std::vector<double>& v, const AdamHyper& h, double step_size, double bias2,
                 double sign) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    const double v_hat = v[i] / bias2;
    param[i] += sign * step_size * m[i] / (std::sqrt(v_hat) + h.epsilon);
  }
}

}  // namespace

void adam_step(LayerParams& params, const GradientBundle& grads, AdamState& state,
               Direction direction) {
  if (!grads.congruent_with(params) || state.m_weights.size() != params.weights.size() ||
      state.v_weights.size() != params.weights.size() ||
      state.m_biases.size() != params.biases.size() ||
      state.v_biases.size() != params.biases.size()) {
    throw InvalidInput("adam_step: parameter, gradient and state shapes differ");
  }
  state.t += 1;
  // An all-zero gradient is a fixed point: no parameter or moment moves.
  const auto is_zero = [](const std::vector<double>& g) {
    return std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
  };
  if (is_zero(grads.weights) && is_zero(grads.biases)) return;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  // lr * m_hat = (lr / bias1) * m
  const double step_size = h.lr / bias1;
  const double sign = direction == Direction::Minimize ? -1.0 : 1.0;
  adam_update(params.weights, grads.weights, state.m_weights, state.v_weights, h, step_size, bias2,
              sign);
  adam_update(params.biases, grads.biases, state.m_biases, state.v_biases, h, step_size, bias2,
              sign);
}

}  // namespace adda::nn
