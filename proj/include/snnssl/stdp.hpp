#pragma once

// Asymmetric pair-based STDP with a 1 ms dead zone and a 20 ms window.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "backprop.hpp"
#include "core.hpp"
#include "presentation.hpp"
#include "random.hpp"

namespace snnssl {

enum class StdpLayers { both, hidden, output };

struct StdpConfig {
  double a_plus = 0.6;
  double a_minus = -0.3;
  double tau_plus = 8.0;   // ms
  double tau_minus = 5.0;  // ms
  double lr = 0.0001;
  Millis window = 20;
  Millis dead_zone = 1;
  StdpLayers layers = StdpLayers::both;

  void validate() const {
    if (!(a_plus > 0.0)) throw ConfigError("a_plus must be > 0");
    if (!(a_minus < 0.0)) throw ConfigError("a_minus must be < 0");
    if (!(tau_plus > 0.0) || !(tau_minus > 0.0)) throw ConfigError("STDP time constants must be > 0");
    if (!(lr >= 0.0)) throw ConfigError("stdp_lr must be >= 0");
    if (dead_zone < 0 || window < dead_zone) throw ConfigError("STDP window must satisfy window >= dead_zone >= 0");
  }
};

/// Kernel for delta_s = t_pre - t_post on the integer grid. Pre-before-post
/// (delta_s <= -1) potentiates, post-before-pre depresses, and nothing happens
/// for |delta_s| below the dead zone or beyond the window.
inline double stdp_delta(Millis delta_s, const StdpConfig& cfg) {
  const Millis gap = std::abs(delta_s);
  if (gap < cfg.dead_zone || gap > cfg.window || gap == 0) return 0.0;
  if (delta_s < 0) return cfg.a_plus * std::exp(static_cast<double>(delta_s) / cfg.tau_plus);
  return cfg.a_minus * std::exp(-static_cast<double>(delta_s) / cfg.tau_minus);
}

/// All-to-all pairing within the window. For each post neuron the changes of
/// all its pairs are summed first and then added to its row of `weights`
/// (post x pre).
inline void apply_stdp(const SpikeRecord& pre, const SpikeRecord& post, Eigen::MatrixXd& weights,
                       const StdpConfig& cfg) {
  if (weights.rows() != post.population() || weights.cols() != pre.population()) {
    throw std::invalid_argument("apply_stdp: weight matrix does not match record populations");
  }
  if (pre.empty() || post.empty() || cfg.lr == 0.0) return;

  // kernel lookup indexed by delta_s + window
  std::vector<double> kernel(static_cast<std::size_t>(2 * cfg.window + 1));
  for (Millis ds = -cfg.window; ds <= cfg.window; ++ds) {
    kernel[static_cast<std::size_t>(ds + cfg.window)] = cfg.lr * stdp_delta(ds, cfg);
  }

  const auto pre_events = pre.events();
  std::vector<std::vector<Millis>> post_times(static_cast<std::size_t>(post.population()));
  for (const auto& e : post.events()) post_times[static_cast<std::size_t>(e.neuron)].push_back(e.t);

  Eigen::RowVectorXd row(weights.cols());
  for (int i = 0; i < post.population(); ++i) {
    const auto& times = post_times[static_cast<std::size_t>(i)];
    if (times.empty()) continue;
    row.setZero();
    for (Millis t_post : times) {
      auto it = std::lower_bound(pre_events.begin(), pre_events.end(), t_post - cfg.window,
                                 [](const SpikeEvent& e, Millis t) { return e.t < t; });
      for (; it != pre_events.end() && it->t <= t_post + cfg.window; ++it) {
        row[it->neuron] += kernel[static_cast<std::size_t>(it->t - t_post + cfg.window)];
      }
    }
    weights.row(i) += row;
  }
}

struct StdpEpochStats {
  double mean_hidden_spikes = 0.0;
  double mean_output_spikes = 0.0;
  int samples = 0;
};

/// One label-free pass: each sample is presented for `duration` with
/// threshold regularization active, then STDP is applied to the selected
/// weight matrices from that presentation's records.
inline StdpEpochStats stdp_epoch(Network& net, const SampleBank& bank, std::span<const int> indices,
                                 const StdpConfig& cfg, const BpHyperParams& hyper, std::uint64_t seed, int epoch,
                                 Millis duration = 50) {
  cfg.validate();
  std::vector<int> order(indices.begin(), indices.end());
  Rng rng = make_rng(derive_seed(seed, "stdp-shuffle", static_cast<std::uint64_t>(epoch)));
  shuffle(order, rng);

  const auto last = net.layers.size() - 1;
  auto selected = [&](std::size_t l) {
    switch (cfg.layers) {
      case StdpLayers::both: return true;
      case StdpLayers::hidden: return l < last;
      case StdpLayers::output: return l == last;
    }
    return true;
  };

  StdpEpochStats stats;
  NetworkState state(net);
  for (int idx : order) {
    const auto sample_seed = derive_seed(seed, "stdp-encode", static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(idx));
    const Presentation p = present(net, state, bank.rates[static_cast<std::size_t>(idx)], duration, sample_seed);
    regularize_network(net, p, hyper);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (selected(l)) apply_stdp(p.populations[l], p.populations[l + 1], net.layers[l].weights, cfg);
    }
    stats.mean_hidden_spikes += static_cast<double>(p.populations[1].size());
    stats.mean_output_spikes += static_cast<double>(p.output().size());
    ++stats.samples;
  }
  if (stats.samples > 0) {
    stats.mean_hidden_spikes /= stats.samples;
    stats.mean_output_spikes /= stats.samples;
  }
  return stats;
}

}  // namespace snnssl
