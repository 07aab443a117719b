#include "adda/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adda/error.hpp"

namespace adda::data {

using nlohmann::json;

void validate(const DomainDataset& dataset) {
  if (dataset.num_classes < 1) throw InvalidInput("dataset must declare at least one class");
  for (const auto& s : dataset.samples) {
    signal::validate(s);
    if (s.class_label > dataset.num_classes) {
      throw InvalidInput("class label " + std::to_string(s.class_label) + " exceeds K = " +
                         std::to_string(dataset.num_classes));
    }
    if (s.domain_label != dataset.samples.front().domain_label) {
      throw InvalidInput("dataset mixes domain labels");
    }
  }
}

DataError::DataError(Kind kind, std::string entry, const std::string& message)
    : std::runtime_error(entry.empty() ? message : entry + ": " + message),
      kind_(kind),
      entry_(std::move(entry)) {}

namespace {

[[noreturn]] void malformed(const std::string& where, const std::string& what) {
  throw DataError(DataError::Kind::MalformedManifest, where, what);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!obj.is_object()) malformed(where, "expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      malformed(where, "unknown field '" + key + "'");
    }
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) malformed(where, std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    malformed(where, std::string("field '") + key + "' has the wrong type");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Manifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    malformed("manifest", std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(doc,
                 {"version", "domain", "domain_label", "sample_rate", "seed", "normalization",
                  "classes"},
                 "manifest");
  Manifest m;
  m.version = field<int>(doc, "version", "manifest");
  if (m.version != Manifest::kVersion) {
    malformed("manifest.version", "unsupported version " + std::to_string(m.version));
  }
  m.domain = field<std::string>(doc, "domain", "manifest");
  if (doc.contains("domain_label")) m.domain_label = field<int>(doc, "domain_label", "manifest");
  if (m.domain_label != 0 && m.domain_label != 1) malformed("manifest.domain_label", "must be 0 or 1");
  m.sample_rate = field<double>(doc, "sample_rate", "manifest");
  if (!(m.sample_rate > 0)) malformed("manifest.sample_rate", "must be positive");
  if (doc.contains("seed")) m.seed = field<std::uint64_t>(doc, "seed", "manifest");
  if (doc.contains("normalization")) {
    try {
      m.normalization = signal::parse_normalization(field<std::string>(doc, "normalization", "manifest"));
    } catch (const InvalidInput& e) {
      malformed("manifest.normalization", e.what());
    }
  }
  const json& classes = doc.contains("classes") ? doc.at("classes") : json();
  if (!classes.is_array()) malformed("manifest.classes", "expected an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string where = "manifest.classes[" + std::to_string(i) + "]";
    reject_unknown(classes[i], {"class_label", "file", "windows"}, where);
    ManifestEntry e;
    e.class_label = field<int>(classes[i], "class_label", where);
    e.file = field<std::string>(classes[i], "file", where);
    e.windows = field<std::size_t>(classes[i], "windows", where);
    if (e.class_label < 1) malformed(where, "class_label must be >= 1");
    if (e.windows == 0) malformed(where, "windows must be positive");
    m.entries.push_back(std::move(e));
  }
  if (!m.entries.empty()) {
    std::set<int> labels;
    for (const auto& e : m.entries) labels.insert(e.class_label);
    if (*labels.rbegin() != static_cast<int>(labels.size())) {
      malformed("manifest.classes", "class labels must be contiguous from 1");
    }
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw DataError(DataError::Kind::MissingFile, path.string(), "manifest not readable");
  }
  return parse_manifest(text);
}

std::string manifest_to_json(const Manifest& m) {
  json doc;
  doc["version"] = m.version;
  doc["domain"] = m.domain;
  doc["domain_label"] = m.domain_label;
  doc["sample_rate"] = m.sample_rate;
  doc["seed"] = m.seed;
  doc["normalization"] = signal::to_string(m.normalization);
  doc["classes"] = json::array();
  for (const auto& e : m.entries) {
    doc["classes"].push_back({{"class_label", e.class_label}, {"file", e.file}, {"windows", e.windows}});
  }
  return doc.dump(2) + "\n";
}

std::vector<double> read_signal_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::MissingFile, path.string(), "signal file not readable");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) {
    throw DataError(DataError::Kind::BadSignalLength, path.string(),
                    "size is not a multiple of 4 bytes");
  }
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]);
    }
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

void write_signal_file(const std::filesystem::path& path, const std::vector<double>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<char> bytes(samples.size() * 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(samples[i]));
    for (std::size_t b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

DomainDataset load_domain(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  if (m.entries.empty()) {
    throw DataError(DataError::Kind::EmptyDataset, manifest_path.string(), "manifest lists no classes");
  }
  DomainDataset ds;
  ds.name = m.domain;
  for (const auto& e : m.entries) ds.num_classes = std::max(ds.num_classes, e.class_label);

  const auto base = manifest_path.parent_path();
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const ManifestEntry& e = m.entries[i];
    const std::string where = "manifest.classes[" + std::to_string(i) + "] (" + e.file + ")";
    std::filesystem::path file = e.file;
    if (file.is_relative()) file = base / file;
    if (!std::filesystem::exists(file)) {
      throw DataError(DataError::Kind::MissingFile, where, "file does not exist: " + file.string());
    }
    signal::RawSignal raw{read_signal_file(file), m.sample_rate};
    if (raw.samples.size() < signal::kWindowLength) {
      throw DataError(DataError::Kind::BadSignalLength, where,
                      "signal has " + std::to_string(raw.samples.size()) + " samples, need " +
                          std::to_string(signal::kWindowLength));
    }
    // one window stream per entry, derived from the manifest seed
    const std::uint64_t entry_seed = m.seed * 0x9E3779B97F4A7C15ULL + i + 1;
    for (const auto& w : signal::window_signal(raw, e.windows, entry_seed)) {
      ds.samples.push_back(signal::make_spectrum(w, e.class_label, m.domain_label, m.normalization));
    }
  }
  return ds;
}

// ---- synthetic ----------------------------------------------------------

void SynthConfig::validate() const {
  if (num_classes < 1) throw InvalidInput("synth: num_classes must be positive");
  if (classes.size() != static_cast<std::size_t>(num_classes)) {
    throw InvalidInput("synth: expected " + std::to_string(num_classes) + " class peak lists, got " +
                       std::to_string(classes.size()));
  }
  if (!(amplitude_scale > 0)) throw InvalidInput("synth: amplitude_scale must be positive");
  if (!(noise_sigma >= 0)) throw InvalidInput("synth: noise_sigma must be non-negative");
  if (samples_per_class == 0) throw InvalidInput("synth: samples_per_class must be positive");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& peaks = classes[c];
    if (peaks.bins.empty() || peaks.bins.size() != peaks.amplitudes.size()) {
      throw InvalidInput("synth: class " + std::to_string(c + 1) +
                         " needs matching, non-empty bins and amplitudes");
    }
    for (std::size_t j = 0; j < peaks.bins.size(); ++j) {
      const int shifted = peaks.bins[j] + domain_shift;
      if (shifted < 0 || shifted >= static_cast<int>(signal::kSpectrumLength)) {
        throw InvalidInput("synth: class " + std::to_string(c + 1) + " bin " +
                           std::to_string(peaks.bins[j]) + " shifted by " +
                           std::to_string(domain_shift) + " leaves [0, 2047]");
      }
      if (!(peaks.amplitudes[j] > 0)) throw InvalidInput("synth: peak amplitudes must be positive");
    }
  }
}

SynthConfig parse_synth_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("synth config: invalid JSON: ") + e.what());
  }
  try {
    SynthConfig c;
    for (const auto& [key, value] : doc.items()) {
      if (key == "num_classes") c.num_classes = value.get<int>();
      else if (key == "classes") {
        for (const auto& entry : value) {
          for (const auto& [k, v] : entry.items()) {
            (void)v;
            if (k != "bins" && k != "amplitudes") throw InvalidInput("synth config: unknown class field '" + k + "'");
          }
          c.classes.push_back({entry.at("bins").get<std::vector<int>>(),
                               entry.at("amplitudes").get<std::vector<double>>()});
        }
      } else if (key == "domain_shift") c.domain_shift = value.get<int>();
      else if (key == "amplitude_scale") c.amplitude_scale = value.get<double>();
      else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
      else if (key == "samples_per_class") c.samples_per_class = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "normalization") c.normalization = signal::parse_normalization(value.get<std::string>());
      else throw InvalidInput("synth config: unknown field '" + key + "'");
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("synth config: ") + e.what());
  }
}

std::string synth_config_to_json(const SynthConfig& c) {
  json doc;
  doc["num_classes"] = c.num_classes;
  doc["classes"] = json::array();
  for (const auto& p : c.classes) doc["classes"].push_back({{"bins", p.bins}, {"amplitudes", p.amplitudes}});
  doc["domain_shift"] = c.domain_shift;
  doc["amplitude_scale"] = c.amplitude_scale;
  doc["noise_sigma"] = c.noise_sigma;
  doc["samples_per_class"] = c.samples_per_class;
  doc["seed"] = c.seed;
  doc["normalization"] = signal::to_string(c.normalization);
  return doc.dump(2) + "\n";
}

std::vector<double> synth_recording(const SynthConfig& config, int class_label, std::size_t length,
                                    std::mt19937_64& rng) {
  if (class_label < 1 || class_label > config.num_classes) {
    throw InvalidInput("synth: class label out of range");
  }
  const ClassPeaks& peaks = config.classes[static_cast<std::size_t>(class_label - 1)];
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, config.noise_sigma > 0 ? config.noise_sigma : 1.0);

  std::vector<double> phases(peaks.bins.size());
  for (double& p : phases) p = phase(rng);
  std::vector<double> x(length, 0.0);
  const double n = static_cast<double>(signal::kWindowLength);
  for (std::size_t j = 0; j < peaks.bins.size(); ++j) {
    const double freq = 2.0 * std::numbers::pi * static_cast<double>(peaks.bins[j] + config.domain_shift) / n;
    const double amp = config.amplitude_scale * peaks.amplitudes[j];
    for (std::size_t t = 0; t < length; ++t) x[t] += amp * std::sin(freq * static_cast<double>(t) + phases[j]);
  }
  if (config.noise_sigma > 0) {
    for (double& v : x) v += noise(rng);
  }
  return x;
}

std::vector<double> synth_window(const SynthConfig& config, int class_label, std::mt19937_64& rng) {
  return synth_recording(config, class_label, signal::kWindowLength, rng);
}

DomainDataset synth_domain(const SynthConfig& config, int domain_label) {
  config.validate();
  if (domain_label != 0 && domain_label != 1) throw InvalidInput("synth: domain label must be 0 or 1");
  DomainDataset ds;
  ds.name = "synthetic(shift=" + std::to_string(config.domain_shift) + ")";
  ds.num_classes = config.num_classes;
  std::mt19937_64 rng(config.seed);
  for (int c = 1; c <= config.num_classes; ++c) {
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      const auto window = synth_window(config, c, rng);
      ds.samples.push_back(signal::make_spectrum(window, c, domain_label, config.normalization));
    }
  }
  return ds;
}

// ---- sampling -----------------------------------------------------------

std::vector<std::size_t> MinibatchSampler::sample_indices(std::size_t dataset_size, std::size_t m) {
  if (dataset_size == 0) throw InvalidInput("sample_minibatch: dataset is empty");
  if (m == 0) throw InvalidInput("sample_minibatch: batch size must be positive");
  std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
  std::vector<std::size_t> idx(m);
  for (auto& i : idx) i = pick(rng_);
  return idx;
}

std::vector<signal::SpectrumSample> sample_minibatch(const DomainDataset& dataset, std::size_t m,
                                                     MinibatchSampler& sampler) {
  const auto idx = sampler.sample_indices(dataset.size(), m);
  std::vector<signal::SpectrumSample> batch;
  batch.reserve(m);
  for (auto i : idx) batch.push_back(dataset.samples[i]);
  return batch;
}

}  // namespace adda::data
