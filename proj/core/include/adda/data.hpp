#pragma once

// Spectrum datasets: loading recordings through a JSON manifest, a synthetic
// two-domain generator, and seeded minibatch sampling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "adda/signal.hpp"

namespace adda::data {

struct DomainDataset {
  std::string name;
  int num_classes = 0;
  std::vector<signal::SpectrumSample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  int domain_label() const { return samples.empty() ? 0 : samples.front().domain_label; }
};

// Throws InvalidInput when a sample breaks the dataset invariants (label
// range, uniform domain label, spectrum length and range).
void validate(const DomainDataset& dataset);

// ---- manifests ----------------------------------------------------------

class DataError : public std::runtime_error {
 public:
  enum class Kind { MalformedManifest, MissingFile, BadSignalLength, EmptyDataset };

  DataError(Kind kind, std::string entry, const std::string& message);

  Kind kind() const { return kind_; }
  // The manifest entry (or field) the error refers to.
  const std::string& entry() const { return entry_; }

 private:
  Kind kind_;
  std::string entry_;
};

struct ManifestEntry {
  int class_label = 1;
  std::string file;  // relative paths resolve against the manifest directory
  std::size_t windows = 0;
};

struct Manifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::string domain;
  int domain_label = 0;
  double sample_rate = 12000.0;
  std::uint64_t seed = 0;
  signal::Normalization normalization = signal::Normalization::Max;
  std::vector<ManifestEntry> entries;
};

// Strict parse: unknown fields, wrong types and non-contiguous labels are
// DataError(MalformedManifest).
Manifest parse_manifest(const std::string& json_text);
Manifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const Manifest& manifest);

// Raw little-endian float32 samples, no header.
std::vector<double> read_signal_file(const std::filesystem::path& path);
void write_signal_file(const std::filesystem::path& path, const std::vector<double>& samples);

DomainDataset load_domain(const std::filesystem::path& manifest_path);

// ---- synthetic domains --------------------------------------------------

struct ClassPeaks {
  std::vector<int> bins;             // characteristic bins, 0..2047
  std::vector<double> amplitudes;    // relative amplitude per bin
};

struct SynthConfig {
  int num_classes = 10;
  std::vector<ClassPeaks> classes;
  int domain_shift = 0;
  double amplitude_scale = 1.0;
  double noise_sigma = 0.0;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;
  signal::Normalization normalization = signal::Normalization::Max;

  // Throws InvalidInput for inconsistent or out-of-range settings.
  void validate() const;
};

SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& config);

// One noisy 4096-sample time signal for `class_label` under `config`.
std::vector<double> synth_window(const SynthConfig& config, int class_label, std::mt19937_64& rng);

// A continuous recording of `length` samples for one class. Every 4096-long
// window of it has the class's line spectrum.
std::vector<double> synth_recording(const SynthConfig& config, int class_label, std::size_t length,
                                    std::mt19937_64& rng);

DomainDataset synth_domain(const SynthConfig& config, int domain_label);

// ---- sampling -----------------------------------------------------------

// Uniform with-replacement minibatches from a private seeded stream.
class MinibatchSampler {
 public:
  explicit MinibatchSampler(std::uint64_t seed) : rng_(seed) {}

  std::vector<std::size_t> sample_indices(std::size_t dataset_size, std::size_t m);

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

std::vector<signal::SpectrumSample> sample_minibatch(const DomainDataset& dataset, std::size_t m,
                                                     MinibatchSampler& sampler);

}  // namespace adda::data
