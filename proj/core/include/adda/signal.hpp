#pragma once

// Time-domain vibration signals to fixed-length amplitude spectra.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace adda::signal {

inline constexpr std::size_t kWindowLength = 4096;
inline constexpr std::size_t kSpectrumLength = kWindowLength / 2;

enum class Normalization : std::uint8_t { Max, None };

Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization n);

struct RawSignal {
  std::vector<double> samples;
  double sample_rate = 12000.0;
};

struct SpectrumSample {
  std::vector<double> amplitudes;  // kSpectrumLength entries
  int class_label = 1;             // 1..K
  int domain_label = 0;            // 0 source, 1 target
};

// Throws InvalidInput unless the sample has kSpectrumLength finite,
// non-negative amplitudes and a valid domain label.
void validate(const SpectrumSample& sample);

// Unnormalized forward DFT via iterative radix-2 Cooley-Tukey.
std::vector<std::complex<double>> fft_radix2(std::span<const std::complex<double>> input);

// Inverse DFT (including the 1/N factor) computed with the conjugate trick.
std::vector<std::complex<double>> ifft_radix2(std::span<const std::complex<double>> input);

// `count` contiguous windows of kWindowLength samples at uniformly drawn
// offsets in [0, len - kWindowLength]; windows may overlap.
std::vector<std::vector<double>> window_signal(const RawSignal& signal, std::size_t count,
                                               std::uint64_t seed);

// |DFT(window)[k]| / N for k < N/2.
std::vector<double> half_spectrum(std::span<const double> window);

SpectrumSample make_spectrum(std::span<const double> window, int class_label, int domain_label,
                             Normalization normalization = Normalization::Max);

}  // namespace adda::signal
