#include "adda/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "adda/error.hpp"

namespace adda::signal {

Normalization parse_normalization(const std::string& name) {
  if (name == "max") return Normalization::Max;
  if (name == "none") return Normalization::None;
  throw InvalidInput("unknown normalization '" + name + "' (expected max or none)");
}

std::string to_string(Normalization n) { return n == Normalization::Max ? "max" : "none"; }

void validate(const SpectrumSample& sample) {
  if (sample.amplitudes.size() != kSpectrumLength) {
    throw InvalidInput("spectrum sample must have " + std::to_string(kSpectrumLength) +
                       " amplitudes, got " + std::to_string(sample.amplitudes.size()));
  }
  for (double a : sample.amplitudes) {
    if (!std::isfinite(a) || a < 0.0) throw InvalidInput("spectrum amplitudes must be finite and >= 0");
  }
  if (sample.class_label < 1) throw InvalidInput("class label must be >= 1");
  if (sample.domain_label != 0 && sample.domain_label != 1) {
    throw InvalidInput("domain label must be 0 or 1");
  }
}

std::vector<std::complex<double>> fft_radix2(std::span<const std::complex<double>> input) {
  const std::size_t n = input.size();
  if (n < 2 || !std::has_single_bit(n)) {
    throw InvalidInput("fft_radix2: length " + std::to_string(n) + " is not a power of two >= 2");
  }
  std::vector<std::complex<double>> a(input.begin(), input.end());

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const double theta = -2.0 * std::numbers::pi / static_cast<double>(len);
    // Twiddles are evaluated directly rather than by recurrence so error does
    // not accumulate across a stage.
    std::vector<std::complex<double>> twiddle(half);
    for (std::size_t k = 0; k < half; ++k) {
      twiddle[k] = std::polar(1.0, theta * static_cast<double>(k));
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> even = a[start + k];
        const std::complex<double> odd = a[start + k + half] * twiddle[k];
        a[start + k] = even + odd;
        a[start + k + half] = even - odd;
      }
    }
  }
  return a;
}

std::vector<std::complex<double>> ifft_radix2(std::span<const std::complex<double>> input) {
  std::vector<std::complex<double>> conj(input.begin(), input.end());
  for (auto& c : conj) c = std::conj(c);
  auto out = fft_radix2(conj);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& c : out) c = std::conj(c) * scale;
  return out;
}

std::vector<std::vector<double>> window_signal(const RawSignal& signal, std::size_t count,
                                               std::uint64_t seed) {
  const std::size_t len = signal.samples.size();
  if (len < kWindowLength) {
    throw InvalidInput("window_signal: signal has " + std::to_string(len) +
                       " samples, need at least " + std::to_string(kWindowLength));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> offset(0, len - kWindowLength);
  std::vector<std::vector<double>> windows;
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = signal.samples.begin() + static_cast<std::ptrdiff_t>(offset(rng));
    windows.emplace_back(begin, begin + kWindowLength);
  }
  return windows;
}

std::vector<double> half_spectrum(std::span<const double> window) {
  const std::size_t n = window.size();
  std::vector<std::complex<double>> buf(window.begin(), window.end());
  const auto dft = fft_radix2(buf);
  std::vector<double> amp(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) amp[k] = std::abs(dft[k]) / static_cast<double>(n);
  return amp;
}

SpectrumSample make_spectrum(std::span<const double> window, int class_label, int domain_label,
                             Normalization normalization) {
  if (window.size() != kWindowLength) {
    throw InvalidInput("make_spectrum: window must have " + std::to_string(kWindowLength) +
                       " samples, got " + std::to_string(window.size()));
  }
  if (!std::all_of(window.begin(), window.end(), [](double x) { return std::isfinite(x); })) {
    throw InvalidInput("make_spectrum: window contains non-finite samples");
  }
  SpectrumSample s;
  s.amplitudes = half_spectrum(window);
  s.class_label = class_label;
  s.domain_label = domain_label;
  if (normalization == Normalization::Max) {
    const double peak = *std::max_element(s.amplitudes.begin(), s.amplitudes.end());
    if (peak > 0.0) {
      for (double& a : s.amplitudes) a /= peak;
    }
  }
  validate(s);
  return s;
}

}  // namespace adda::signal
