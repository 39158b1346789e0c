#pragma once

// Approximate-gradient supervised training of a spiking WTA network.
//
// Activities are measured from the spike simulation as exponential traces at
// the end of a presentation; gradients come from the rate model of each layer.
// Errors are normalized per layer so that update magnitudes do not depend on
// how many synapses or neurons happened to be active.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "presentation.hpp"
#include "random.hpp"

namespace snnssl {

enum class ThresholdRegularization { classic, modified };
enum class WeightInit { uniform, truncated_normal };

struct BpHyperParams {
  double alpha = 2.0;
  double eta_w = 0.002;
  double eta_th = 0.0002;
  double gamma = 1.0;
  double rho = 0.00004;
  int batch_size = 25;
  double target_scale = 1.0;
  ThresholdRegularization regularization = ThresholdRegularization::modified;
  WeightInit init = WeightInit::uniform;

  void validate() const {
    if (!(alpha > 1.0)) throw ConfigError("alpha must be > 1");
    if (!(eta_w >= 0.0)) throw ConfigError("eta_w must be >= 0");
    if (!(eta_th >= 0.0)) throw ConfigError("eta_th must be >= 0");
    if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(target_scale > 0.0)) throw ConfigError("target_scale must be > 0");
  }
};

struct LayerInit {
  Eigen::MatrixXd weights;
  Eigen::VectorXd thresholds;
};

/// Weights uniform in (-sqrt(3/M), sqrt(3/M)) so that E[sum_i w_i^2] = 1 per
/// neuron; thresholds alpha * sqrt(3/M). The truncated-normal variant draws
/// N(0, 3/M) restricted to the same interval.
inline LayerInit init_layer(int neurons, int synapses, double alpha, Rng& rng,
                            WeightInit dist = WeightInit::uniform) {
  if (synapses < 1 || neurons < 1) throw std::invalid_argument("init_layer: empty layer");
  const double bound = std::sqrt(3.0 / synapses);
  LayerInit out{Eigen::MatrixXd(neurons, synapses), Eigen::VectorXd::Constant(neurons, alpha * bound)};
  std::normal_distribution<double> normal(0.0, bound);
  for (Eigen::Index c = 0; c < out.weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.weights.rows(); ++r) {
      double w;
      if (dist == WeightInit::uniform) {
        w = uniform_symmetric(rng, bound);
      } else {
        do {
          w = normal(rng);
        } while (std::abs(w) >= bound);
      }
      out.weights(r, c) = w;
    }
  }
  return out;
}

/// sum_p exp((t_p - t) / tau) over spikes with t_p <= t. A spike emitted at t
/// counts with weight 1: the trace is read just after the step's spikes.
inline double accumulate_trace(std::span<const Millis> spike_times, Millis t, double tau) {
  double acc = 0.0;
  for (Millis tp : spike_times) {
    if (tp <= t) acc += std::exp(static_cast<double>(tp - t) / tau);
  }
  return acc;
}

/// Incremental traces for a population: decay to the new time, then add 1 per
/// spike.
class TraceVector {
 public:
  TraceVector(int size, double tau) : values_(Eigen::VectorXd::Zero(size)), tau_(tau) {}

  void advance_to(Millis t) {
    if (t < anchor_) throw std::invalid_argument("TraceVector: time went backwards");
    if (t != anchor_) values_ *= std::exp(static_cast<double>(anchor_ - t) / tau_);
    anchor_ = t;
  }

  void add_spike(int neuron) { values_[neuron] += 1.0; }

  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
  [[nodiscard]] Millis anchor() const { return anchor_; }

 private:
  Eigen::VectorXd values_;
  double tau_;
  Millis anchor_ = 0;
};

inline Eigen::VectorXd traces_from_record(const SpikeRecord& record, Millis t, double tau) {
  TraceVector trace(record.population(), tau);
  for (const auto& e : record.events()) {
    if (e.t > t) break;
    trace.advance_to(e.t);
    trace.add_spike(e.neuron);
  }
  trace.advance_to(t);
  return trace.values();
}

/// Per-layer quantities gathered from one presentation.
struct LayerGradState {
  Eigen::VectorXd x;          // input traces
  Eigen::VectorXd a;          // output traces
  Eigen::VectorXd delta;      // error at this layer's outputs
  std::vector<char> active;   // neuron fired at least once
  int synapses = 0;           // M
  int active_synapses = 0;    // m
  int neurons = 0;            // N
  int active_neurons = 0;     // n
};

inline std::vector<LayerGradState> gather_grad_states(const Network& net, const Presentation& p, Millis t_end) {
  const double tau = net.layers.front().tau_mp;
  std::vector<Eigen::VectorXd> traces;
  traces.reserve(p.populations.size());
  for (const auto& r : p.populations) traces.push_back(traces_from_record(r, t_end, tau));

  std::vector<LayerGradState> states(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& s = states[l];
    s.x = traces[l];
    s.a = traces[l + 1];
    const auto counts = p.populations[l + 1].spike_counts();
    s.active.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) s.active[i] = counts[i] > 0;
    s.synapses = net.layers[l].inputs();
    s.active_synapses = p.populations[l].active_count();
    s.neurons = net.layers[l].outputs();
    s.active_neurons = p.populations[l + 1].active_count();
  }
  return states;
}

/// Squared-error loss 0.5 * sum_i (a_i - target_i)^2 against a one-hot target
/// of height `target_scale`.
inline double output_loss(const Eigen::VectorXd& a, int label, double target_scale) {
  if (label < 0 || label >= a.size()) throw std::invalid_argument("output_loss: invalid label");
  Eigen::VectorXd diff = a;
  diff[label] -= target_scale;
  return 0.5 * diff.squaredNorm();
}

/// d loss / d a.
inline Eigen::VectorXd output_delta(const Eigen::VectorXd& a, int label, double target_scale) {
  if (label < 0 || label >= a.size()) {
    throw std::invalid_argument("output_delta: invalid label " + std::to_string(label));
  }
  Eigen::VectorXd delta = a;
  delta[label] -= target_scale;
  return delta;
}

/// Normalized error for a layer from the error of the layer above:
///
///   delta_i = (g_i / g_rms) * sqrt(M_down / m_down) * sum_j w_down_ji delta_down_j
///
/// with g_i = 1 / v_th_i, g_rms taken over the active neurons of this layer,
/// M_down the synapse count of a downstream neuron and m_down the number of
/// those synapses that carried spikes. Inactive neurons get zero error.
inline Eigen::VectorXd backprop_delta(const Eigen::MatrixXd& w_down, const Eigen::VectorXd& delta_down,
                                      const Eigen::VectorXd& thresholds, std::span<const char> active,
                                      int active_down_synapses) {
  const Eigen::Index n = thresholds.size();
  if (w_down.cols() != n || w_down.rows() != delta_down.size() || static_cast<Eigen::Index>(active.size()) != n) {
    throw std::invalid_argument("backprop_delta: dimension mismatch");
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  if (active_down_synapses <= 0) return delta;

  double g_sq = 0.0;
  int n_active = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    g_sq += 1.0 / (thresholds[i] * thresholds[i]);
    ++n_active;
  }
  if (n_active == 0) return delta;
  const double g_rms = std::sqrt(g_sq / n_active);
  const double norm = std::sqrt(static_cast<double>(w_down.cols()) / active_down_synapses);

  const Eigen::VectorXd back = w_down.transpose() * delta_down;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    delta[i] = (1.0 / thresholds[i]) / g_rms * norm * back[i];
  }
  return delta;
}

/// â_i = gamma a_i - sigma * sum_{j != i} kappa_ij a_j with kappa_ij = mu.
inline Eigen::VectorXd inhibition_adjusted_activity(const Eigen::VectorXd& a, const LayerParams& p, double gamma) {
  const double others = a.sum();
  return (gamma * a.array() - p.sigma * p.mu * (others - a.array())).matrix();
}

/// Summed parameter changes over a batch; `apply` adds their mean.
struct LayerUpdate {
  Eigen::MatrixXd d_weights;
  Eigen::VectorXd d_thresholds;
  int samples = 0;

  LayerUpdate() = default;
  explicit LayerUpdate(const LayerParams& p)
      : d_weights(Eigen::MatrixXd::Zero(p.outputs(), p.inputs())),
        d_thresholds(Eigen::VectorXd::Zero(p.outputs())) {}

  void apply(LayerParams& p) const {
    if (samples == 0) return;
    p.weights += d_weights / samples;
    p.thresholds += d_thresholds / samples;
    p.clamp_thresholds();
  }
};

/// Adds one sample's changes for a layer:
///
///   dw_ij  = -eta_w  * sqrt(N / m) * delta_i * x_j
///   dth_i  = -eta_th * sqrt(1 / m) * delta_i * â_i
///
/// N is this layer's size (the synapse count of a neuron one layer up) and m
/// the number of active input synapses. Samples with no active inputs still
/// count towards the batch mean.
inline void accumulate_update(LayerUpdate& update, const LayerParams& p, const LayerGradState& s,
                              const BpHyperParams& hyper) {
  ++update.samples;
  if (s.active_synapses <= 0) return;
  const double m = s.active_synapses;
  const double w_scale = -hyper.eta_w * std::sqrt(p.outputs() / m);
  update.d_weights.noalias() += (w_scale * s.delta) * s.x.transpose();
  const Eigen::VectorXd a_hat = inhibition_adjusted_activity(s.a, p, hyper.gamma);
  update.d_thresholds -= hyper.eta_th * std::sqrt(1.0 / m) * s.delta.cwiseProduct(a_hat);
}

/// Firing-balance homeostasis after one presentation. N_w neurons fired; each
/// of them gains rho * N. In classic mode every neuron then loses rho * N_w;
/// in modified mode only the silent ones do.
inline void regularize_thresholds(Eigen::VectorXd& thresholds, std::span<const char> fired, double rho,
                                  ThresholdRegularization mode) {
  if (static_cast<Eigen::Index>(fired.size()) != thresholds.size()) {
    throw std::invalid_argument("regularize_thresholds: mask size mismatch");
  }
  const double n = static_cast<double>(thresholds.size());
  double n_w = 0.0;
  for (char f : fired) n_w += f ? 1.0 : 0.0;
  if (n_w == 0.0) return;
  for (Eigen::Index i = 0; i < thresholds.size(); ++i) {
    const bool f = fired[static_cast<std::size_t>(i)] != 0;
    if (f) thresholds[i] += rho * n;
    if (!f || mode == ThresholdRegularization::classic) thresholds[i] -= rho * n_w;
  }
  thresholds = thresholds.cwiseMax(kThresholdFloor);
}

inline void regularize_network(Network& net, const Presentation& p, const BpHyperParams& hyper) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto counts = p.populations[l + 1].spike_counts();
    std::vector<char> fired(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) fired[i] = counts[i] > 0;
    regularize_thresholds(net.layers[l].thresholds, fired, hyper.rho, hyper.regularization);
  }
}

/// Errors for every layer of one labeled presentation, output layer first
/// computed from the loss, hidden layers by normalized backpropagation.
inline double compute_deltas(const Network& net, std::vector<LayerGradState>& states, int label,
                             const BpHyperParams& hyper) {
  auto& top = states.back();
  const double loss = output_loss(top.a, label, hyper.target_scale);
  top.delta = output_delta(top.a, label, hyper.target_scale);
  for (std::size_t l = states.size() - 1; l-- > 0;) {
    states[l].delta = backprop_delta(net.layers[l + 1].weights, states[l + 1].delta, net.layers[l].thresholds,
                                     states[l].active, states[l + 1].active_synapses);
  }
  return loss;
}

struct BpEpochStats {
  double mean_loss = 0.0;
  double mean_hidden_spikes = 0.0;
  double mean_output_spikes = 0.0;
  int samples = 0;
};

/// One pass over `indices` in a shuffled order: each sample is presented for
/// `duration`, thresholds are regularized after its forward pass, and the
/// gradient step is applied once per batch as the mean of the per-sample
/// changes. All randomness comes from (seed, epoch).
inline BpEpochStats bp_epoch(Network& net, const SampleBank& bank, std::span<const int> indices,
                             const BpHyperParams& hyper, std::uint64_t seed, int epoch, Millis duration = 50) {
  if (indices.empty()) throw std::invalid_argument("bp_epoch: empty labeled set");
  hyper.validate();
  std::vector<int> order(indices.begin(), indices.end());
  Rng rng = make_rng(derive_seed(seed, "bp-shuffle", static_cast<std::uint64_t>(epoch)));
  shuffle(order, rng);

  BpEpochStats stats;
  NetworkState state(net);
  std::vector<LayerUpdate> updates;
  auto flush = [&] {
    for (std::size_t l = 0; l < net.layers.size(); ++l) updates[l].apply(net.layers[l]);
    updates.clear();
  };

  for (std::size_t n = 0; n < order.size(); ++n) {
    if (updates.empty()) {
      for (const auto& l : net.layers) updates.emplace_back(l);
    }
    const int idx = order[n];
    const int label = bank.labels[static_cast<std::size_t>(idx)];
    const auto sample_seed = derive_seed(seed, "bp-encode", static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(idx));
    const Presentation p = present(net, state, bank.rates[static_cast<std::size_t>(idx)], duration, sample_seed);

    auto grads = gather_grad_states(net, p, duration);
    stats.mean_loss += compute_deltas(net, grads, label, hyper);
    for (std::size_t l = 0; l < net.layers.size(); ++l) accumulate_update(updates[l], net.layers[l], grads[l], hyper);
    regularize_network(net, p, hyper);

    stats.mean_hidden_spikes += static_cast<double>(p.populations[1].size());
    stats.mean_output_spikes += static_cast<double>(p.output().size());
    ++stats.samples;
    if (updates.front().samples == hyper.batch_size) flush();
  }
  if (!updates.empty()) flush();

  stats.mean_loss /= stats.samples;
  stats.mean_hidden_spikes /= stats.samples;
  stats.mean_output_spikes /= stats.samples;
  return stats;
}

}  // namespace snnssl
