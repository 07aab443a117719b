#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "adda/data.hpp"
#include "adda/error.hpp"
#include "adda/eval.hpp"
#include "adda/model.hpp"
#include "adda/model_io.hpp"
#include "adda/seed.hpp"
#include "adda/train.hpp"

#ifndef ADDA_VERSION
#define ADDA_VERSION "unknown"
#endif

namespace adda::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr std::uint64_t kDefaultSeed = 1;
constexpr double kDefaultSplit = 0.5;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return text.str();
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Refuses to write over an input file and creates missing directories.
void prepare_outputs(const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  for (const auto& out : outputs) {
    std::error_code ec;
    if (fs::exists(out, ec)) {
      for (const auto& in : inputs) {
        if (!in.empty() && fs::exists(in, ec) && fs::equivalent(in, out, ec)) {
          throw InvalidInput("output " + out.string() + " would overwrite input " + in.string());
        }
      }
    }
    const fs::path dir = out.parent_path();
    if (!dir.empty() && !fs::exists(dir, ec)) {
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
  }
}

std::string path_string(const fs::path& p) { return p.string(); }

struct Common {
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Run seed; overrides the config file");
  sub->add_option("--threads", common.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
}

// ADDA_THREADS supplies the --threads default.
std::size_t threads_from_env() {
  const char* raw = std::getenv("ADDA_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  const std::string_view text(raw);
  std::size_t n = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc{} || end != text.data() + text.size() || n == 0) {
    throw InvalidInput("ADDA_THREADS must be a positive integer, got '" + std::string(text) + "'");
  }
  return n;
}

ojson run_header(const std::string& command, const Common& common, std::uint64_t seed) {
  ojson doc;
  doc["command"] = command;
  doc["version"] = ADDA_VERSION;
  doc["seed"] = seed;
  doc["threads"] = common.threads;
  return doc;
}

// run.json lands in the directory of the first output.
void write_run_json(const fs::path& first_output, const ojson& doc) {
  fs::path dir = first_output.parent_path();
  eval::write_text(dir / "run.json", doc.dump(2) + "\n");
}

double batch_accuracy_tail(const train::TrainLog& log) {
  return log.records.empty() ? 0.0 : log.records.back().src_batch_acc;
}

// ---- synth --------------------------------------------------------------

struct SynthArgs {
  fs::path config;
  fs::path out;
  std::string domain = "synthetic";
  int domain_label = 0;
};

void run_synth(const SynthArgs& a, const Common& common, std::ostream& out) {
  data::SynthConfig cfg = data::parse_synth_config(read_file(a.config));
  if (common.seed) cfg.seed = *common.seed;
  cfg.validate();

  const fs::path manifest_path = a.out / "manifest.json";
  data::Manifest manifest;
  manifest.domain = a.domain;
  manifest.domain_label = a.domain_label;
  manifest.seed = cfg.seed;
  manifest.normalization = cfg.normalization;

  std::vector<fs::path> outputs{manifest_path, a.out / "run.json"};
  for (int c = 1; c <= cfg.num_classes; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "class_%02d.f32", c);
    manifest.entries.push_back({c, name, cfg.samples_per_class});
    outputs.push_back(a.out / name);
  }
  prepare_outputs({a.config}, outputs);

  const std::size_t length = (cfg.samples_per_class + 1) * signal::kWindowLength;
  for (const auto& e : manifest.entries) {
    std::mt19937_64 rng(substream_seed(cfg.seed, "recording." + std::to_string(e.class_label)));
    data::write_signal_file(a.out / e.file, data::synth_recording(cfg, e.class_label, length, rng));
  }
  eval::write_text(manifest_path, data::manifest_to_json(manifest));

  ojson doc = run_header("synth", common, cfg.seed);
  doc["inputs"] = {{"config", path_string(a.config)}};
  doc["outputs"] = {{"dir", path_string(a.out)}, {"manifest", path_string(manifest_path)}};
  doc["domain"] = a.domain;
  doc["domain_label"] = a.domain_label;
  doc["config"] = ojson::parse(data::synth_config_to_json(cfg));
  write_run_json(manifest_path, doc);

  out << "synth: " << manifest.entries.size() << " classes x " << cfg.samples_per_class
      << " windows -> " << manifest_path.string() << "\n";
}

// ---- pretrain -----------------------------------------------------------

struct PretrainArgs {
  fs::path data;
  fs::path config;
  fs::path out_model;
  fs::path out_log;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
};

void run_pretrain(const PretrainArgs& a, const Common& common, std::ostream& out) {
  train::PretrainConfig cfg;
  if (!a.config.empty()) cfg = train::parse_pretrain_config(read_file(a.config));
  if (a.iters) cfg.iterations = *a.iters;
  if (a.batch) cfg.batch = *a.batch;
  if (a.lr) cfg.lr = *a.lr;
  if (common.seed) cfg.seed = *common.seed;
  cfg.validate();

  prepare_outputs({a.data, a.config}, {a.out_model, a.out_log});
  const data::DomainDataset source = data::load_domain(a.data);

  train::RunOptions options;
  options.threads = common.threads;
  const train::PretrainResult r = train::pretrain(source, cfg, options);

  model::ModelFile file;
  file.extractor = r.extractor;
  file.metadata = {{"role", "source"}, {"seed", std::to_string(cfg.seed)}};
  model::save_model(a.out_model, file);
  r.log.write_csv(a.out_log);

  ojson doc = run_header("pretrain", common, cfg.seed);
  doc["inputs"] = {{"data", path_string(a.data)}, {"config", path_string(a.config)}};
  doc["outputs"] = {{"model", path_string(a.out_model)}, {"log", path_string(a.out_log)}};
  doc["config"] = ojson::parse(train::to_json(cfg));
  write_run_json(a.out_model, doc);

  out << "pretrain: " << cfg.iterations << " iterations, last batch accuracy "
      << format_number(batch_accuracy_tail(r.log)) << " -> " << a.out_model.string() << "\n";
}

// ---- adapt / sweep-l ----------------------------------------------------

struct AdaptArgs {
  fs::path source;
  fs::path target;
  fs::path model;
  fs::path config;
  fs::path out_model;
  fs::path out_log;
  fs::path out_csv;
  std::optional<int> untie;
  std::optional<int> k;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> batch;
  std::optional<double> lr_d;
  std::optional<double> lr_mt;
  double split = kDefaultSplit;
};

train::FinetuneConfig resolve_finetune(const AdaptArgs& a, const Common& common) {
  train::FinetuneConfig cfg;
  if (!a.config.empty()) cfg = train::parse_finetune_config(read_file(a.config));
  if (a.untie) cfg.l = *a.untie;
  if (a.k) cfg.k = *a.k;
  if (a.iters) cfg.iterations = *a.iters;
  if (a.batch) cfg.batch = *a.batch;
  if (a.lr_d) cfg.lr_d = *a.lr_d;
  if (a.lr_mt) cfg.lr_mt = *a.lr_mt;
  if (common.seed) cfg.seed = *common.seed;
  cfg.validate();
  return cfg;
}

model::FeatureExtractor require_source_model(const fs::path& path) {
  model::ModelFile m = model::load_model(path);
  if (m.untie_count) {
    throw InvalidInput(path.string() + " is an adapted target model; adapt needs a pretrained source model");
  }
  return std::move(m.extractor);
}

void run_adapt(const AdaptArgs& a, const Common& common, std::ostream& out) {
  const train::FinetuneConfig cfg = resolve_finetune(a, common);
  prepare_outputs({a.source, a.target, a.model, a.config}, {a.out_model, a.out_log});
  const model::FeatureExtractor source_model = require_source_model(a.model);
  const data::DomainDataset source = data::load_domain(a.source);
  const data::DomainDataset target = data::load_domain(a.target);

  train::RunOptions options;
  options.threads = common.threads;
  const train::FinetuneResult r = train::adversarial_finetune(source_model, source, target, cfg, options);

  model::ModelFile file;
  file.extractor = r.pair.target();
  file.untie_count = cfg.l;
  file.metadata = {{"role", "target"}, {"seed", std::to_string(cfg.seed)}};
  file.discriminator = r.discriminator;
  model::save_model(a.out_model, file);
  r.log.write_csv(a.out_log);

  ojson doc = run_header("adapt", common, cfg.seed);
  doc["inputs"] = {{"source", path_string(a.source)},
                   {"target", path_string(a.target)},
                   {"model", path_string(a.model)},
                   {"config", path_string(a.config)}};
  doc["outputs"] = {{"model", path_string(a.out_model)}, {"log", path_string(a.out_log)}};
  doc["config"] = ojson::parse(train::to_json(cfg));
  write_run_json(a.out_model, doc);

  out << "adapt: l=" << cfg.l << " k=" << cfg.k << ", " << cfg.iterations << " iterations -> "
      << a.out_model.string() << "\n";
}

void run_sweep(const AdaptArgs& a, const Common& common, std::ostream& out) {
  train::FinetuneConfig cfg = resolve_finetune(a, common);
  prepare_outputs({a.source, a.target, a.model, a.config}, {a.out_csv});
  const model::FeatureExtractor source_model = require_source_model(a.model);
  const data::DomainDataset source = data::load_domain(a.source);
  const data::DomainDataset target = data::load_domain(a.target);
  const auto source_features = eval::compute_features(source_model, source, common.threads);
  const std::uint64_t split_seed = substream_seed(cfg.seed, "splits");

  train::RunOptions options;
  options.threads = common.threads;
  // source_accuracy: the frozen source extractor after finetuning;
  // adapted_source_accuracy: the adapted target extractor on source data.
  std::string csv = "l,target_accuracy,source_accuracy,adapted_source_accuracy,d_hat\n";
  for (int l = 1; l <= static_cast<int>(model::kGroupCount); ++l) {
    cfg.l = l;
    const auto r = train::adversarial_finetune(source_model, source, target, cfg, options);
    // evaluate what `adapt` would have saved
    const model::FeatureExtractor adapted = model::quantized(r.pair.target());
    const auto on_target = eval::evaluate_classifier(adapted, target, common.threads);
    const auto source_path = eval::evaluate_classifier(model::quantized(r.pair.source()), source, common.threads);
    const auto on_source = eval::evaluate_classifier(adapted, source, common.threads);
    const auto divergence = eval::proxy_a_distance(
        source_features, eval::compute_features(adapted, target, common.threads), a.split, split_seed);
    csv += std::to_string(l) + "," + format_number(on_target.accuracy) + "," +
           format_number(source_path.accuracy) + "," + format_number(on_source.accuracy) + "," +
           format_number(divergence.d_hat) + "\n";
    out << "sweep-l: l=" << l << " target accuracy " << format_number(on_target.accuracy) << "\n";
  }
  eval::write_text(a.out_csv, csv);

  ojson doc = run_header("sweep-l", common, cfg.seed);
  doc["inputs"] = {{"source", path_string(a.source)},
                   {"target", path_string(a.target)},
                   {"model", path_string(a.model)},
                   {"config", path_string(a.config)}};
  doc["outputs"] = {{"csv", path_string(a.out_csv)}};
  ojson resolved = ojson::parse(train::to_json(cfg));
  resolved["l"] = "1..7";
  doc["config"] = resolved;
  doc["split"] = a.split;
  write_run_json(a.out_csv, doc);
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
  fs::path model;
  fs::path data;
  fs::path out;
};

void run_eval(const EvalArgs& a, const Common& common, std::ostream& out) {
  prepare_outputs({a.model, a.data}, {a.out});
  const model::ModelFile m = model::load_model(a.model);
  const data::DomainDataset ds = data::load_domain(a.data);
  const eval::MetricsReport report = eval::evaluate_classifier(m.extractor, ds, common.threads);
  eval::write_text(a.out, report.to_json());

  ojson doc = run_header("eval", common, common.seed.value_or(kDefaultSeed));
  doc["inputs"] = {{"model", path_string(a.model)}, {"data", path_string(a.data)}};
  doc["outputs"] = {{"report", path_string(a.out)}};
  write_run_json(a.out, doc);

  out << "eval: accuracy " << format_number(report.accuracy) << " over " << report.n << " samples\n";
}

// ---- divergence / export-features ---------------------------------------

struct PairArgs {
  fs::path source_model;
  fs::path target_model;
  fs::path source;
  fs::path target;
  fs::path out;
  double split = kDefaultSplit;
};

ojson pair_inputs(const PairArgs& a) {
  return {{"source_model", path_string(a.source_model)},
          {"target_model", path_string(a.target_model)},
          {"source", path_string(a.source)},
          {"target", path_string(a.target)}};
}

void run_divergence(const PairArgs& a, const Common& common, std::ostream& out) {
  prepare_outputs({a.source_model, a.target_model, a.source, a.target}, {a.out});
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);
  const model::ModelFile ms = model::load_model(a.source_model);
  const model::ModelFile mt = model::load_model(a.target_model);
  const data::DomainDataset source = data::load_domain(a.source);
  const data::DomainDataset target = data::load_domain(a.target);
  const auto report = eval::proxy_a_distance(eval::compute_features(ms.extractor, source, common.threads),
                                             eval::compute_features(mt.extractor, target, common.threads),
                                             a.split, substream_seed(seed, "splits"));
  eval::write_text(a.out, report.to_json());

  ojson doc = run_header("divergence", common, seed);
  doc["inputs"] = pair_inputs(a);
  doc["outputs"] = {{"report", path_string(a.out)}};
  doc["split"] = a.split;
  write_run_json(a.out, doc);

  out << "divergence: d_hat " << format_number(report.d_hat) << " (epsilon "
      << format_number(report.epsilon) << ")\n";
}

void run_export(const PairArgs& a, const Common& common, std::ostream& out) {
  prepare_outputs({a.source_model, a.target_model, a.source, a.target}, {a.out});
  const model::ModelFile ms = model::load_model(a.source_model);
  const model::ModelFile mt = model::load_model(a.target_model);
  const data::DomainDataset source = data::load_domain(a.source);
  const data::DomainDataset target = data::load_domain(a.target);
  eval::export_features(ms.extractor, mt.extractor, source, target, a.out, common.threads);

  ojson doc = run_header("export-features", common, common.seed.value_or(kDefaultSeed));
  doc["inputs"] = pair_inputs(a);
  doc["outputs"] = {{"features", path_string(a.out)}};
  write_run_json(a.out, doc);

  out << "export-features: " << source.size() + target.size() << " rows -> " << a.out.string() << "\n";
}

std::string one_line(std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!message.empty() && message.back() == ' ') message.pop_back();
  return message;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"A2CNN adversarial domain adaptation for vibration spectra", "adda"};
  app.set_version_flag("--version", ADDA_VERSION);
  app.require_subcommand(1);

  Common common;
  try {
    common.threads = threads_from_env();
  } catch (const InvalidInput& ex) {
    err << "adda: " << ex.what() << "\n";
    return kExitError;
  }

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic domain (recordings plus manifest)");
  s->add_option("--config", synth.config, "Synthetic domain config (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--domain", synth.domain, "Domain name recorded in the manifest");
  s->add_option("--domain-label", synth.domain_label, "0 = source, 1 = target")->check(CLI::IsMember({0, 1}));
  add_common(s, common);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Supervised pretraining of the source extractor");
  p->add_option("--data", pre.data, "Source manifest")->required()->check(CLI::ExistingFile);
  p->add_option("--config", pre.config, "Pretrain config (JSON)")->check(CLI::ExistingFile);
  p->add_option("--out-model", pre.out_model, "Output model file")->required();
  p->add_option("--out-log", pre.out_log, "Output training log (CSV)")->required();
  p->add_option("--iters", pre.iters, "Iterations; overrides the config");
  p->add_option("--batch", pre.batch, "Minibatch size; overrides the config");
  p->add_option("--lr", pre.lr, "Learning rate; overrides the config");
  add_common(p, common);

  AdaptArgs adapt;
  auto add_adapt_inputs = [&](CLI::App* sub) {
    sub->add_option("--source", adapt.source, "Source manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--target", adapt.target, "Target manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", adapt.model, "Pretrained source model")->required()->check(CLI::ExistingFile);
    sub->add_option("--config", adapt.config, "Finetune config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--k", adapt.k, "Discriminator steps per extractor step; overrides the config");
    sub->add_option("--iters", adapt.iters, "Iterations; overrides the config");
    sub->add_option("--batch", adapt.batch, "Minibatch size; overrides the config");
    sub->add_option("--lr-d", adapt.lr_d, "Discriminator learning rate; overrides the config");
    sub->add_option("--lr-mt", adapt.lr_mt, "Target extractor learning rate; overrides the config");
    add_common(sub, common);
  };
  auto* a = app.add_subcommand("adapt", "Adversarial finetuning of the target extractor");
  add_adapt_inputs(a);
  a->add_option("--untie", adapt.untie, "Number of untied groups at the end of the target extractor");
  a->add_option("--out-model", adapt.out_model, "Output target model")->required();
  a->add_option("--out-log", adapt.out_log, "Output training log (CSV)")->required();

  auto* sw = app.add_subcommand("sweep-l", "Adapt and evaluate for every untie count 1..7");
  add_adapt_inputs(sw);
  sw->add_option("--out-csv", adapt.out_csv, "Output table (CSV)")->required();
  sw->add_option("--split", adapt.split, "Train fraction of the divergence classifier")->check(CLI::Range(0.0, 1.0));

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Classification metrics of a model on a dataset");
  e->add_option("--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Manifest")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Output report (JSON)")->required();
  add_common(e, common);

  PairArgs pair;
  auto add_pair_inputs = [&](CLI::App* sub) {
    sub->add_option("--source-model", pair.source_model, "Model applied to the source domain")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--target-model", pair.target_model, "Model applied to the target domain")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--source", pair.source, "Source manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--target", pair.target, "Target manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", pair.out, "Output file")->required();
    add_common(sub, common);
  };
  auto* d = app.add_subcommand("divergence", "Proxy domain divergence between feature sets");
  add_pair_inputs(d);
  d->add_option("--split", pair.split, "Train fraction of the domain classifier")->check(CLI::Range(0.0, 1.0));
  auto* x = app.add_subcommand("export-features", "Write per-sample features as CSV");
  add_pair_inputs(x);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) return app.exit(ex, out, err);
    err << "adda: " << one_line(ex.what()) << "\n";
    return kExitError;
  }

  try {
    if (s->parsed()) run_synth(synth, common, out);
    else if (p->parsed()) run_pretrain(pre, common, out);
    else if (a->parsed()) run_adapt(adapt, common, out);
    else if (sw->parsed()) run_sweep(adapt, common, out);
    else if (e->parsed()) run_eval(ev, common, out);
    else if (d->parsed()) run_divergence(pair, common, out);
    else if (x->parsed()) run_export(pair, common, out);
  } catch (const std::exception& ex) {
    err << "adda: " << one_line(ex.what()) << "\n";
    return kExitError;
  }
  return kExitOk;
}

}  // namespace adda::cli
