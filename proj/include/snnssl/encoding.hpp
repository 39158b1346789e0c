#pragma once

// Image -> on-center receptive field response -> rates -> Bernoulli spike trains.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "random.hpp"

namespace snnssl {

inline constexpr double kMaxRate = 150.0;  // spikes per second
inline constexpr double kStepSeconds = 0.001;

/// Row-major grid of reals.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r * cols + c)]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

using Image = Grid;     // intensities in [0, 1]
using RateMap = Grid;   // spikes per second, in [0, kMaxRate]

inline Image image_from_bytes(std::span<const std::uint8_t> bytes, int rows, int cols) {
  if (bytes.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw std::invalid_argument("image_from_bytes: size mismatch");
  }
  Image img(rows, cols);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.values[i] = bytes[i] / 255.0;
  return img;
}

struct ReceptiveFieldKernel {
  int size = 0;  // odd
  std::vector<double> weights;

  double operator()(int r, int c) const { return weights[static_cast<std::size_t>(r * size + c)]; }
};

/// 5x5 on-center field; the weight depends only on the Manhattan distance to
/// the center: 0 -> 1, 1 -> 0.625, 2 -> 0.125, 3 -> -0.125, 4 -> -0.5.
inline ReceptiveFieldKernel build_kernel() {
  constexpr std::array<double, 5> by_distance{1.0, 0.625, 0.125, -0.125, -0.5};
  ReceptiveFieldKernel k{5, std::vector<double>(25)};
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      k.weights[static_cast<std::size_t>(r * 5 + c)] =
          by_distance[static_cast<std::size_t>(std::abs(r - 2) + std::abs(c - 2))];
    }
  }
  return k;
}

/// Same-size correlation with a zero border of size/2 pixels.
inline Grid convolve(const Image& image, const ReceptiveFieldKernel& kernel) {
  if (kernel.size % 2 != 1) throw std::invalid_argument("convolve: kernel size must be odd");
  const int pad = kernel.size / 2;
  Grid out(image.rows, image.cols);
  for (int i = 0; i < image.rows; ++i) {
    for (int j = 0; j < image.cols; ++j) {
      double acc = 0.0;
      for (int k1 = 0; k1 < kernel.size; ++k1) {
        const int r = i + k1 - pad;
        if (r < 0 || r >= image.rows) continue;
        for (int k2 = 0; k2 < kernel.size; ++k2) {
          const int c = j + k2 - pad;
          if (c < 0 || c >= image.cols) continue;
          acc += image(r, c) * kernel(k1, k2);
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

/// Negative responses clamp to zero; the rest are divided by the image's
/// largest response and scaled to `max_rate`.
inline RateMap to_rates(const Grid& response, double max_rate = kMaxRate) {
  RateMap rates(response.rows, response.cols);
  double peak = 0.0;
  for (double v : response.values) peak = std::max(peak, v);
  if (peak <= 0.0) return rates;
  for (std::size_t i = 0; i < response.size(); ++i) {
    rates.values[i] = std::max(response.values[i], 0.0) / peak * max_rate;
  }
  return rates;
}

inline RateMap encode_rates(const Image& image, double max_rate = kMaxRate) {
  static const ReceptiveFieldKernel kernel = build_kernel();
  return to_rates(convolve(image, kernel), max_rate);
}

/// Bernoulli approximation of a Poisson process on the 1 ms grid: at each
/// step every pixel spikes independently with probability rate * 1 ms.
/// Pixels are flattened row-major into input neuron indices.
///
/// The per-step coin flips are drawn as geometric waiting times between
/// successes, which has exactly the same distribution and needs one draw per
/// spike instead of one per step.
inline SpikeRecord poisson_encode(const RateMap& rates, Millis duration, std::uint64_t seed) {
  if (duration <= 0) throw std::invalid_argument("poisson_encode: duration must be positive");
  Rng rng = make_rng(seed);
  std::vector<SpikeEvent> events;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double p = rates.values[i] * kStepSeconds;
    if (!(p > 0.0)) continue;
    if (p >= 1.0) {
      for (Millis t = 1; t <= duration; ++t) events.push_back({t, static_cast<int>(i)});
      continue;
    }
    const double log_q = std::log1p(-p);
    for (double t = 0.0;;) {
      const double u = 1.0 - uniform01(rng);  // (0, 1]
      t += std::floor(std::log(u) / log_q) + 1.0;
      if (t > duration) break;
      events.push_back({static_cast<Millis>(t), static_cast<int>(i)});
    }
  }
  return SpikeRecord(static_cast<int>(rates.size()), std::move(events));
}

}  // namespace snnssl
