#include "adda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adda/error.hpp"
#include "adda/nn.hpp"
#include "adda/parallel.hpp"
#include "adda/seed.hpp"

namespace adda::eval {

using nlohmann::json;

MetricsReport metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
  const std::size_t k = confusion.size();
  if (k == 0) throw InvalidInput("metrics: empty confusion matrix");
  MetricsReport r;
  std::int64_t trace = 0, total = 0;
  std::vector<std::int64_t> row(k, 0), col(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (confusion[i].size() != k) throw InvalidInput("metrics: confusion matrix is not square");
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = confusion[i][j];
      if (c < 0) throw InvalidInput("metrics: negative count");
      row[i] += c;
      col[j] += c;
      total += c;
    }
    trace += confusion[i][i];
  }
  if (total == 0) throw InvalidInput("metrics: no samples");
  r.n = static_cast<std::size_t>(total);
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  r.precision.resize(k);
  r.recall.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = confusion[c][c];
    r.precision[c] = col[c] > 0 ? static_cast<double>(tp) / static_cast<double>(col[c]) : 0.0;
    r.recall[c] = row[c] > 0 ? static_cast<double>(tp) / static_cast<double>(row[c]) : 0.0;
  }
  r.confusion = std::move(confusion);
  return r;
}

MetricsReport metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                       int num_classes) {
  if (truth.size() != predicted.size()) throw InvalidInput("metrics: label vectors differ in length");
  if (truth.empty()) throw InvalidInput("metrics: no samples");
  if (num_classes < 1) throw InvalidInput("metrics: need at least one class");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::vector<std::int64_t>> confusion(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || truth[i] > num_classes || predicted[i] < 1 || predicted[i] > num_classes) {
      throw InvalidInput("metrics: label outside 1.." + std::to_string(num_classes));
    }
    ++confusion[static_cast<std::size_t>(truth[i] - 1)][static_cast<std::size_t>(predicted[i] - 1)];
  }
  return metrics_from_confusion(std::move(confusion));
}

std::string MetricsReport::to_json() const {
  json doc;
  doc["accuracy"] = accuracy;
  doc["confusion"] = confusion;
  doc["precision"] = precision;
  doc["recall"] = recall;
  doc["n"] = n;
  return doc.dump(2) + "\n";
}

MetricsReport evaluate_classifier(const model::FeatureExtractor& extractor,
                                  const data::DomainDataset& dataset, std::size_t threads) {
  if (dataset.empty()) throw InvalidInput("evaluate_classifier: dataset is empty");
  std::vector<int> truth(dataset.size()), predicted(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    truth[i] = dataset.samples[i].class_label;
    predicted[i] = model::predict_label(extractor, dataset.samples[i]).label;
  });
  const int k = std::max(dataset.num_classes, static_cast<int>(model::kNumClasses));
  return metrics_from_predictions(truth, predicted, k);
}

std::string DivergenceReport::to_json() const {
  json doc;
  doc["epsilon"] = epsilon;
  doc["d_hat"] = d_hat;
  doc["n_train"] = n_train;
  doc["n_test"] = n_test;
  return doc.dump(2) + "\n";
}

namespace {

struct Labelled {
  const std::vector<double>* x;
  int domain;
};

}  // namespace

DivergenceReport proxy_a_distance(const std::vector<std::vector<double>>& features_source,
                                  const std::vector<std::vector<double>>& features_target,
                                  double split_fraction, std::uint64_t seed,
                                  const DomainClassifierConfig& classifier) {
  if (features_source.empty() || features_target.empty()) {
    throw InvalidInput("proxy_a_distance: both feature lists must be non-empty");
  }
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InvalidInput("proxy_a_distance: split_fraction must lie in (0, 1)");
  }
  const std::size_t dim = features_source.front().size();
  if (dim == 0) throw InvalidInput("proxy_a_distance: features must be non-empty vectors");
  std::vector<Labelled> all;
  for (const auto& f : features_source) all.push_back({&f, 0});
  for (const auto& f : features_target) all.push_back({&f, 1});
  for (const auto& s : all) {
    if (s.x->size() != dim) throw InvalidInput("proxy_a_distance: features differ in length");
  }

  // Canonical order first so the split depends only on the multiset of inputs.
  std::sort(all.begin(), all.end(), [](const Labelled& a, const Labelled& b) {
    if (a.domain != b.domain) return a.domain < b.domain;
    return *a.x < *b.x;
  });
  std::mt19937_64 rng(substream_seed(seed, "split"));
  std::shuffle(all.begin(), all.end(), rng);

  const std::size_t n = all.size();
  if (n < 2) throw InvalidInput("proxy_a_distance: need at least two samples");
  auto n_train = static_cast<std::size_t>(std::llround(split_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  // standardize with training statistics
  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += (*all[i].x)[d];
  }
  for (double& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double dev = (*all[i].x)[d] - mean[d];
      scale[d] += dev * dev;
    }
  }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n_train));
    s = s > 1e-12 ? 1.0 / s : 1.0;
  }
  auto standardized = [&](std::size_t i) {
    std::vector<double> v(dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = ((*all[i].x)[d] - mean[d]) * scale[d];
    return nn::FeatureMap::vector(std::move(v));
  };
  std::vector<nn::FeatureMap> inputs(n);
  for (std::size_t i = 0; i < n; ++i) inputs[i] = standardized(i);

  // h_d: dim -> hidden -> 1, full-batch Adam on the mean logistic loss
  const std::array<nn::LayerSpec, 2> specs = {nn::LayerSpec::dense(dim, classifier.hidden),
                                              nn::LayerSpec::dense(classifier.hidden, 1)};
  std::mt19937_64 init(substream_seed(seed, "domain-classifier"));
  std::array<nn::LayerParams, 2> params = {nn::LayerParams::he_normal(specs[0], init),
                                           nn::LayerParams::he_normal(specs[1], init)};
  std::array<nn::AdamState, 2> adam = {nn::AdamState::for_params(params[0], {.lr = classifier.lr}),
                                       nn::AdamState::for_params(params[1], {.lr = classifier.lr})};
  const nn::LayerParams none;
  const nn::LayerSpec relu = nn::LayerSpec::relu();
  const double inv = 1.0 / static_cast<double>(n_train);

  for (std::size_t it = 0; it < classifier.iterations; ++it) {
    std::array<nn::GradientBundle, 2> grads = {nn::GradientBundle::zeros_like(params[0]),
                                               nn::GradientBundle::zeros_like(params[1])};
    for (std::size_t i = 0; i < n_train; ++i) {
      auto h = nn::layer_forward(specs[0], params[0], inputs[i]);
      auto a = nn::layer_forward(relu, none, h.output);
      auto o = nn::layer_forward(specs[1], params[1], a.output);
      const auto loss = nn::logistic_loss(o.output.data[0], all[i].domain);
      auto b1 = nn::layer_backward(specs[1], params[1], o.cache, nn::FeatureMap::vector({loss.logit_grad}));
      auto b0 = nn::layer_backward(relu, none, a.cache, b1.input_grad);
      auto bh = nn::layer_backward(specs[0], params[0], h.cache, b0.input_grad, {.input_grad = false});
      grads[0].accumulate(bh.param_grad);
      grads[1].accumulate(b1.param_grad);
    }
    for (std::size_t j = 0; j < 2; ++j) {
      grads[j].scale(inv);
      nn::adam_step(params[j], grads[j], adam[j]);
    }
  }

  std::size_t errors = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    auto h = nn::layer_apply(relu, none, nn::layer_apply(specs[0], params[0], inputs[i]));
    const double logit = nn::layer_apply(specs[1], params[1], h).data[0];
    const int predicted = nn::sigmoid(logit) > 0.5 ? 1 : 0;
    errors += predicted != all[i].domain;
  }
  DivergenceReport r;
  r.n_train = n_train;
  r.n_test = n - n_train;
  r.epsilon = static_cast<double>(errors) / static_cast<double>(r.n_test);
  r.d_hat = std::clamp(1.0 - 2.0 * r.epsilon, 0.0, 1.0);
  return r;
}

std::vector<std::vector<double>> compute_features(const model::FeatureExtractor& extractor,
                                                  const data::DomainDataset& dataset,
                                                  std::size_t threads) {
  std::vector<std::vector<double>> out(dataset.size());
  parallel_for(dataset.size(), threads,
               [&](std::size_t i) { out[i] = model::extract_features(extractor, dataset.samples[i]); });
  return out;
}

namespace {

void append_rows(std::ostringstream& os, const data::DomainDataset& ds,
                 const std::vector<std::vector<double>>& features) {
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.samples[i].domain_label << "," << ds.samples[i].class_label;
    for (double v : features[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << "," << buf;
    }
    os << "\n";
  }
}

}  // namespace

std::string features_csv(const model::FeatureExtractor& extractor_source,
                         const model::FeatureExtractor& extractor_target,
                         const data::DomainDataset& source, const data::DomainDataset& target,
                         std::size_t threads) {
  if (source.empty() || target.empty()) throw InvalidInput("export_features: datasets must be non-empty");
  std::ostringstream os;
  os << kFeatureCsvHeader << "\n";
  append_rows(os, source, compute_features(extractor_source, source, threads));
  append_rows(os, target, compute_features(extractor_target, target, threads));
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void export_features(const model::FeatureExtractor& extractor_source,
                     const model::FeatureExtractor& extractor_target,
                     const data::DomainDataset& source, const data::DomainDataset& target,
                     const std::filesystem::path& path, std::size_t threads) {
  write_text(path, features_csv(extractor_source, extractor_target, source, target, threads));
}

}  // namespace adda::eval
