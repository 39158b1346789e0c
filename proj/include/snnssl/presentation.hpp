#pragma once

#include <cstdint>
#include <vector>

#include "core.hpp"
#include "encoding.hpp"

namespace snnssl {

/// Pre-encoded samples. Index sets used by training and evaluation point into
/// this bank; `labels[i]` is -1 for samples whose label is hidden.
struct SampleBank {
  std::vector<RateMap> rates;
  std::vector<int> labels;

  [[nodiscard]] int size() const { return static_cast<int>(rates.size()); }
};

/// Spike records of one presentation: `populations[0]` is the input layer,
/// `populations[l + 1]` the output of network layer l.
struct Presentation {
  std::vector<SpikeRecord> populations;

  [[nodiscard]] const SpikeRecord& input() const { return populations.front(); }
  [[nodiscard]] const SpikeRecord& output() const { return populations.back(); }
};

inline Presentation present(const Network& net, NetworkState& state, const RateMap& rates, Millis duration,
                            std::uint64_t seed) {
  Presentation p;
  p.populations.push_back(poisson_encode(rates, duration, seed));
  auto layers = run_network(net, state, p.populations.front(), duration);
  for (auto& r : layers) p.populations.push_back(std::move(r));
  return p;
}

}  // namespace snnssl
