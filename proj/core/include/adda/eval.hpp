#pragma once

// Classification metrics, the proxy domain-divergence estimate, and feature
// export for external embedding tools.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adda/data.hpp"
#include "adda/model.hpp"

namespace adda::eval {

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // rows true class, columns predicted
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t n = 0;

  std::size_t num_classes() const { return confusion.size(); }
  std::string to_json() const;
};

// A class that is never predicted gets precision 0 (the 0/0 case); a class
// with no true instances gets recall 0.
MetricsReport metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion);
MetricsReport metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                       int num_classes);

MetricsReport evaluate_classifier(const model::FeatureExtractor& extractor,
                                  const data::DomainDataset& dataset, std::size_t threads = 1);

struct DivergenceReport {
  double epsilon = 0.0;
  double d_hat = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;

  std::string to_json() const;
};

// Settings of the domain classifier trained inside proxy_a_distance.
struct DomainClassifierConfig {
  std::size_t hidden = 32;
  std::size_t iterations = 500;
  double lr = 1e-2;
};

// Pseudo-labels source 0 / target 1, splits into train/test, fits a small
// dense classifier on train and reports its test error and 1 - 2 * error.
// The result does not depend on the order of the input lists.
DivergenceReport proxy_a_distance(const std::vector<std::vector<double>>& features_source,
                                  const std::vector<std::vector<double>>& features_target,
                                  double split_fraction, std::uint64_t seed,
                                  const DomainClassifierConfig& classifier = {});

std::vector<std::vector<double>> compute_features(const model::FeatureExtractor& extractor,
                                                  const data::DomainDataset& dataset,
                                                  std::size_t threads = 1);

inline constexpr const char* kFeatureCsvHeader = "domain,label,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10";

// Source samples through extractor_source, then target samples through
// extractor_target, one CSV row each.
std::string features_csv(const model::FeatureExtractor& extractor_source,
                         const model::FeatureExtractor& extractor_target,
                         const data::DomainDataset& source, const data::DomainDataset& target,
                         std::size_t threads = 1);

void export_features(const model::FeatureExtractor& extractor_source,
                     const model::FeatureExtractor& extractor_target,
                     const data::DomainDataset& source, const data::DomainDataset& target,
                     const std::filesystem::path& path, std::size_t threads = 1);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace adda::eval
