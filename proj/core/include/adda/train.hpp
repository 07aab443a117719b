#pragma once

// Two-phase training: supervised pretraining of the source extractor, then
// adversarial finetuning of the untied suffix of the target extractor
// against a domain discriminator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adda/data.hpp"
#include "adda/model.hpp"

namespace adda::train {

struct PretrainConfig {
  std::size_t batch = 64;
  std::size_t iterations = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FinetuneConfig {
  std::size_t batch = 64;
  std::size_t iterations = 3000;
  int k = 1;  // discriminator steps per target-extractor step
  int l = 7;  // untied groups at the end of the target extractor
  double lr_d = 1e-4;
  double lr_mt = 1e-4;
  std::uint64_t seed = 1;
  std::size_t snapshot_every = 0;

  void validate() const;
};

// JSON config files with the same field names as the structs. Missing fields
// keep their defaults; unknown fields and wrong types throw InvalidInput.
PretrainConfig parse_pretrain_config(const std::string& json_text);
FinetuneConfig parse_finetune_config(const std::string& json_text);
std::string to_json(const PretrainConfig& cfg);
std::string to_json(const FinetuneConfig& cfg);

struct LogRecord {
  std::size_t iter = 0;
  std::optional<double> loss_cls;
  std::optional<double> loss_d;
  std::optional<double> loss_mt;
  double src_batch_acc = 0.0;
};

struct TrainLog {
  std::vector<LogRecord> records;

  static constexpr const char* kCsvHeader = "iter,loss_cls,loss_d,loss_mt,src_batch_acc";
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct RunOptions {
  std::size_t threads = 1;
  // Called after every `snapshot_every` finetune iterations.
  std::function<void(std::size_t iter, const model::TiedPair& pair)> on_snapshot;
};

// Seed of the extractor initialization used by pretrain for a run seed.
std::uint64_t pretrain_init_seed(std::uint64_t run_seed);
std::uint64_t discriminator_init_seed(std::uint64_t run_seed);

struct PretrainResult {
  model::FeatureExtractor extractor;
  TrainLog log;
};

PretrainResult pretrain(const data::DomainDataset& source, const PretrainConfig& cfg,
                        const RunOptions& options = {});

struct FinetuneResult {
  model::TiedPair pair;
  model::Discriminator discriminator;
  TrainLog log;
};

FinetuneResult adversarial_finetune(const model::FeatureExtractor& source_model,
                                    const data::DomainDataset& source,
                                    const data::DomainDataset& target, const FinetuneConfig& cfg,
                                    const RunOptions& options = {});

}  // namespace adda::train
