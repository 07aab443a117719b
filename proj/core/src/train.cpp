#include "adda/train.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adda/error.hpp"
#include "adda/parallel.hpp"
#include "adda/seed.hpp"

namespace adda::train {

using model::FeatureExtractor;
using model::kGroupCount;

void PretrainConfig::validate() const {
  if (batch == 0) throw InvalidInput("pretrain: batch must be positive");
  if (!(lr > 0)) throw InvalidInput("pretrain: lr must be positive");
}

void FinetuneConfig::validate() const {
  if (batch == 0) throw InvalidInput("finetune: batch must be positive");
  if (k < 1) throw InvalidInput("finetune: k must be >= 1");
  if (l < 1 || l > static_cast<int>(kGroupCount)) throw InvalidInput("finetune: l must be in [1, 7]");
  if (!(lr_d > 0) || !(lr_mt > 0)) throw InvalidInput("finetune: learning rates must be positive");
}

namespace {

using json = nlohmann::json;

json parse_object(const std::string& text, const char* what) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string(what) + " config: invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw InvalidInput(std::string(what) + " config: expected a JSON object");
  return doc;
}

// Reads every field through `set`, which returns false for unknown keys.
template <typename Set>
void read_fields(const json& doc, const char* what, Set set) {
  for (const auto& [key, value] : doc.items()) {
    bool known = false;
    try {
      known = set(key, value);
    } catch (const json::exception& e) {
      throw InvalidInput(std::string(what) + " config: field '" + key + "': " + e.what());
    }
    if (!known) throw InvalidInput(std::string(what) + " config: unknown field '" + key + "'");
  }
}

}  // namespace

PretrainConfig parse_pretrain_config(const std::string& json_text) {
  const json doc = parse_object(json_text, "pretrain");
  PretrainConfig c;
  read_fields(doc, "pretrain", [&](const std::string& key, const json& v) {
    if (key == "batch") c.batch = v.get<std::size_t>();
    else if (key == "iterations") c.iterations = v.get<std::size_t>();
    else if (key == "lr") c.lr = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  c.validate();
  return c;
}

FinetuneConfig parse_finetune_config(const std::string& json_text) {
  const json doc = parse_object(json_text, "finetune");
  FinetuneConfig c;
  read_fields(doc, "finetune", [&](const std::string& key, const json& v) {
    if (key == "batch") c.batch = v.get<std::size_t>();
    else if (key == "iterations") c.iterations = v.get<std::size_t>();
    else if (key == "k") c.k = v.get<int>();
    else if (key == "l") c.l = v.get<int>();
    else if (key == "lr_d") c.lr_d = v.get<double>();
    else if (key == "lr_mt") c.lr_mt = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "snapshot_every") c.snapshot_every = v.get<std::size_t>();
    else return false;
    return true;
  });
  c.validate();
  return c;
}

std::string to_json(const PretrainConfig& c) {
  json doc;
  doc["batch"] = c.batch;
  doc["iterations"] = c.iterations;
  doc["lr"] = c.lr;
  doc["seed"] = c.seed;
  return doc.dump(2) + "\n";
}

std::string to_json(const FinetuneConfig& c) {
  json doc;
  doc["batch"] = c.batch;
  doc["iterations"] = c.iterations;
  doc["k"] = c.k;
  doc["l"] = c.l;
  doc["lr_d"] = c.lr_d;
  doc["lr_mt"] = c.lr_mt;
  doc["seed"] = c.seed;
  doc["snapshot_every"] = c.snapshot_every;
  return doc.dump(2) + "\n";
}

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_optional(const std::optional<double>& x) { return x ? format_double(*x) : ""; }

nn::FeatureMap input_map(const signal::SpectrumSample& s) {
  if (s.amplitudes.size() != model::kInputLength) {
    throw InvalidInput("sample has " + std::to_string(s.amplitudes.size()) + " amplitudes");
  }
  return nn::FeatureMap::signal(s.amplitudes);
}

// Sums per-sample gradient slots in index order.
template <std::size_t N>
std::array<std::optional<nn::GradientBundle>, N> reduce_in_order(
    std::vector<std::array<std::optional<nn::GradientBundle>, N>>& slots, double scale) {
  std::array<std::optional<nn::GradientBundle>, N> total;
  for (auto& slot : slots) {
    for (std::size_t g = 0; g < N; ++g) {
      if (!slot[g]) continue;
      if (!total[g]) total[g] = std::move(*slot[g]);
      else total[g]->accumulate(*slot[g]);
    }
  }
  for (auto& t : total) {
    if (t) t->scale(scale);
  }
  return total;
}

// The target extractor's untied suffix starts at `first`; everything before it
// is frozen during finetuning, so the suffix input can be cached per sample.
class SuffixInputs {
 public:
  static constexpr std::size_t kMaxCacheBytes = std::size_t{1} << 30;

  SuffixInputs(const FeatureExtractor& frozen_prefix, const data::DomainDataset& ds,
               std::size_t first, std::size_t threads)
      : prefix_(frozen_prefix), ds_(ds), first_(first) {
    const std::size_t bytes = model::group_input_shape(first).size() * ds.size() * sizeof(double);
    if (first == 0 || bytes > kMaxCacheBytes) return;
    cache_.resize(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) { cache_[i] = compute(i); });
  }

  nn::FeatureMap get(std::size_t i) const { return cache_.empty() ? compute(i) : cache_[i]; }

 private:
  nn::FeatureMap compute(std::size_t i) const {
    return prefix_.apply_groups(input_map(ds_.samples[i]), 0, first_);
  }

  FeatureExtractor prefix_;
  const data::DomainDataset& ds_;
  std::size_t first_;
  std::vector<nn::FeatureMap> cache_;
};

}  // namespace

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : records) {
    os << r.iter << "," << format_optional(r.loss_cls) << "," << format_optional(r.loss_d) << ","
       << format_optional(r.loss_mt) << "," << format_double(r.src_batch_acc) << "\n";
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
  if (!out) throw IoError("short write to " + path.string());
}

std::uint64_t pretrain_init_seed(std::uint64_t run_seed) { return substream_seed(run_seed, "init"); }
std::uint64_t discriminator_init_seed(std::uint64_t run_seed) {
  return substream_seed(run_seed, "disc-init");
}

PretrainResult pretrain(const data::DomainDataset& source, const PretrainConfig& cfg,
                        const RunOptions& options) {
  cfg.validate();
  if (source.empty()) throw InvalidInput("pretrain: source dataset is empty");
  data::validate(source);
  if (source.num_classes != static_cast<int>(model::kNumClasses)) {
    throw InvalidInput("pretrain: the extractor emits 10 classes, dataset declares " +
                       std::to_string(source.num_classes));
  }

  PretrainResult result{FeatureExtractor::build(pretrain_init_seed(cfg.seed)), {}};
  FeatureExtractor& net = result.extractor;
  std::vector<nn::AdamState> adam;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    adam.push_back(nn::AdamState::for_params(net.group(g), {.lr = cfg.lr}));
  }
  data::MinibatchSampler sampler(substream_seed(cfg.seed, "sampling"));

  using Slot = std::array<std::optional<nn::GradientBundle>, kGroupCount>;
  std::vector<Slot> slots(cfg.batch);
  std::vector<double> losses(cfg.batch);
  std::vector<int> correct(cfg.batch);

  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    const auto idx = sampler.sample_indices(source.size(), cfg.batch);
    parallel_for(cfg.batch, options.threads, [&](std::size_t i) {
      const auto& s = source.samples[idx[i]];
      const auto trace = net.forward(input_map(s));
      const auto xent = nn::softmax_xent_loss(trace.logits, s.class_label);
      losses[i] = xent.loss;
      correct[i] = model::predict_from_logits(trace.logits).label == s.class_label;
      slots[i] = net.backward(trace, xent.logit_grad, 0).groups;
    });
    const double inv_m = 1.0 / static_cast<double>(cfg.batch);
    auto grads = reduce_in_order(slots, inv_m);
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      nn::adam_step(net.mutable_group(g), *grads[g], adam[g], nn::Direction::Minimize);
    }

    LogRecord rec;
    rec.iter = iter;
    double loss = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      loss += losses[i];
      acc += correct[i];
    }
    rec.loss_cls = loss * inv_m;
    rec.src_batch_acc = acc * inv_m;
    result.log.records.push_back(rec);
  }
  return result;
}

FinetuneResult adversarial_finetune(const FeatureExtractor& source_model,
                                    const data::DomainDataset& source,
                                    const data::DomainDataset& target, const FinetuneConfig& cfg,
                                    const RunOptions& options) {
  cfg.validate();
  if (source.empty() || target.empty()) throw InvalidInput("finetune: datasets must be non-empty");
  data::validate(source);
  data::validate(target);

  FinetuneResult result{model::TiedPair::init_target_from_source(source_model, cfg.l),
                        model::Discriminator::build(discriminator_init_seed(cfg.seed)),
                        {}};
  model::TiedPair& pair = result.pair;
  model::Discriminator& disc = result.discriminator;
  const std::size_t first = pair.first_untied_group();

  std::array<nn::AdamState, model::Discriminator::kLayers> disc_adam;
  for (std::size_t i = 0; i < disc_adam.size(); ++i) {
    disc_adam[i] = nn::AdamState::for_params(disc.layer(i), {.lr = cfg.lr_d});
  }
  std::vector<nn::AdamState> target_adam(kGroupCount);
  for (std::size_t g = first; g < kGroupCount; ++g) {
    target_adam[g] = nn::AdamState::for_params(pair.target().group(g), {.lr = cfg.lr_mt});
  }

  // The source extractor is frozen for the whole phase, so its features and
  // predictions are fixed per sample.
  std::vector<std::vector<double>> source_features(source.size());
  std::vector<int> source_correct(source.size());
  parallel_for(source.size(), options.threads, [&](std::size_t i) {
    source_features[i] = model::extract_features(pair.source(), source.samples[i]);
    source_correct[i] =
        model::predict_from_logits(source_features[i]).label == source.samples[i].class_label;
  });
  const SuffixInputs target_inputs(pair.source(), target, first, options.threads);

  data::MinibatchSampler source_sampler(substream_seed(cfg.seed, "sampling-source"));
  data::MinibatchSampler target_sampler(substream_seed(cfg.seed, "sampling-target"));

  const std::size_t m = cfg.batch;
  const double inv_m = 1.0 / static_cast<double>(m);
  using TargetSlot = std::array<std::optional<nn::GradientBundle>, kGroupCount>;
  std::vector<TargetSlot> target_slots(m);
  std::vector<FeatureExtractor::Trace> traces(m);

  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    LogRecord rec;
    rec.iter = iter;

    // (a) discriminator: source features labelled 1, target features 0.
    double loss_d = 0.0;
    double src_acc = 0.0;
    for (int step = 0; step < cfg.k; ++step) {
      const auto src_idx = source_sampler.sample_indices(source.size(), m);
      const auto tgt_idx = target_sampler.sample_indices(target.size(), m);
      nn::Batch features(2 * m, model::kNumClasses);
      parallel_for(2 * m, options.threads, [&](std::size_t i) {
        const std::vector<double> f =
            i < m ? source_features[src_idx[i]]
                  : pair.target().apply_groups(target_inputs.get(tgt_idx[i - m]), first, kGroupCount).data;
        std::copy(f.begin(), f.end(), features.row(i).begin());
      });
      const auto trace = disc.forward_batch(std::move(features));
      std::vector<double> dlogits(2 * m);
      double step_loss = 0.0;
      for (std::size_t i = 0; i < 2 * m; ++i) {
        const auto loss = nn::logistic_loss(trace.logits[i], i < m ? 1 : 0);
        step_loss += loss.loss;
        dlogits[i] = loss.logit_grad * inv_m;
      }
      auto grads = disc.backward_batch(trace, dlogits);
      for (std::size_t j = 0; j < disc_adam.size(); ++j) {
        nn::adam_step(disc.mutable_layer(j), grads.layers[j], disc_adam[j], nn::Direction::Minimize);
      }
      loss_d += step_loss * inv_m;
      if (step == cfg.k - 1) {
        for (auto i : src_idx) src_acc += source_correct[i];
      }
    }
    rec.loss_d = loss_d / cfg.k;
    rec.src_batch_acc = src_acc * inv_m;

    // (b) untied target groups: inverted labels, discriminator frozen.
    const auto tgt_idx = target_sampler.sample_indices(target.size(), m);
    nn::Batch features(m, model::kNumClasses);
    parallel_for(m, options.threads, [&](std::size_t i) {
      traces[i] = pair.target().forward(target_inputs.get(tgt_idx[i]), first);
      std::copy(traces[i].logits.begin(), traces[i].logits.end(), features.row(i).begin());
    });
    const auto dtrace = disc.forward_batch(std::move(features));
    std::vector<double> dlogits(m);
    double loss_mt = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto loss = nn::logistic_loss(dtrace.logits[i], 1);
      loss_mt += loss.loss;
      dlogits[i] = loss.logit_grad;
    }
    const auto dgrad = disc.backward_batch(dtrace, dlogits, false);
    parallel_for(m, options.threads, [&](std::size_t i) {
      target_slots[i] = pair.target().backward(traces[i], dgrad.input_grad.row(i), first).groups;
    });
    auto grads = reduce_in_order(target_slots, inv_m);
    for (std::size_t g = first; g < kGroupCount; ++g) {
      nn::adam_step(pair.target().mutable_group(g), *grads[g], target_adam[g], nn::Direction::Minimize);
    }
    rec.loss_mt = loss_mt * inv_m;
    result.log.records.push_back(rec);

    if (cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0 && options.on_snapshot) {
      options.on_snapshot(iter, pair);
    }
  }
  return result;
}

}  // namespace adda::train
