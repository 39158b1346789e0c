#pragma once

// Discrete-time LIF layers with winner-take-all lateral inhibition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace snnssl {

using Millis = int;  // times live on the 1 ms simulation grid

inline constexpr double kThresholdFloor = 1e-6;

/// Invalid parameters, or a rate system that cannot be solved with them.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeuronState {
  double v_mp = 0.0;
  Millis t_last_update = 0;
  std::optional<Millis> t_last_fire;
  int spike_count = 0;
};

/// Parameters of one feed-forward layer. The lateral inhibition strength is
/// uniform: every pair (i, j) inhibits with kappa_ij = mu.
struct LayerParams {
  Eigen::MatrixXd weights;     // outputs x inputs
  Eigen::VectorXd thresholds;  // strictly positive
  double mu = -1.0;            // in [-1, 0]
  double sigma = 0.5;          // in [0, 1]
  double tau_mp = 20.0;        // ms
  double t_ref = 1.0;          // ms

  [[nodiscard]] int outputs() const { return static_cast<int>(weights.rows()); }
  [[nodiscard]] int inputs() const { return static_cast<int>(weights.cols()); }

  void clamp_thresholds() {
    thresholds = thresholds.cwiseMax(kThresholdFloor);
  }
};

struct SpikeEvent {
  Millis t = 0;
  int neuron = 0;
  friend auto operator<=>(const SpikeEvent&, const SpikeEvent&) = default;
};

/// Time-ordered firing events of one population over one presentation.
/// Events are sorted by (t, neuron) and unique.
class SpikeRecord {
 public:
  SpikeRecord() = default;
  explicit SpikeRecord(int population) : population_(population) {}

  /// Builds a record from events in any order; duplicates are rejected.
  SpikeRecord(int population, std::vector<SpikeEvent> events) : population_(population) {
    std::sort(events.begin(), events.end());
    if (std::adjacent_find(events.begin(), events.end()) != events.end()) {
      throw std::invalid_argument("SpikeRecord: duplicate (t, neuron) event");
    }
    for (const auto& e : events) check_index(e.neuron);
    events_ = std::move(events);
  }

  /// Appends an event; it must sort after every stored event.
  void push(Millis t, int neuron) {
    check_index(neuron);
    const SpikeEvent e{t, neuron};
    if (!events_.empty() && !(events_.back() < e)) {
      throw std::invalid_argument("SpikeRecord: events must be appended in (t, neuron) order");
    }
    events_.push_back(e);
  }

  [[nodiscard]] int population() const { return population_; }
  [[nodiscard]] std::span<const SpikeEvent> events() const { return events_; }
  [[nodiscard]] std::size_t size() const { return events_.size(); }
  [[nodiscard]] bool empty() const { return events_.empty(); }

  [[nodiscard]] std::vector<int> spike_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(population_), 0);
    for (const auto& e : events_) ++counts[static_cast<std::size_t>(e.neuron)];
    return counts;
  }

  [[nodiscard]] std::vector<Millis> times_of(int neuron) const {
    std::vector<Millis> out;
    for (const auto& e : events_) {
      if (e.neuron == neuron) out.push_back(e.t);
    }
    return out;
  }

  /// Number of distinct neurons with at least one event.
  [[nodiscard]] int active_count() const {
    const auto counts = spike_counts();
    return static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
  }

  friend bool operator==(const SpikeRecord&, const SpikeRecord&) = default;

 private:
  void check_index(int neuron) const {
    if (neuron < 0 || neuron >= population_) {
      throw std::out_of_range("SpikeRecord: neuron index " + std::to_string(neuron) +
                              " outside population of " + std::to_string(population_));
    }
  }

  int population_ = 0;
  std::vector<SpikeEvent> events_;
};

// Refractory efficacy. `elapsed` is the time since the neuron last fired.
inline double refractory_efficacy(const NeuronState& state, Millis t, double t_ref) {
  if (!state.t_last_fire) return 1.0;
  const double elapsed = static_cast<double>(t - *state.t_last_fire);
  return elapsed < t_ref ? (elapsed / t_ref) * (elapsed / t_ref) : 1.0;
}

namespace detail {

inline NeuronState integrate(NeuronState state, double w_in, Millis t, double decay, double t_ref) {
  state.v_mp = state.v_mp * decay + w_in * refractory_efficacy(state, t, t_ref);
  state.t_last_update = t;
  return state;
}

}  // namespace detail

/// Event-driven membrane update for input arriving at `t_p`: exponential leak
/// since the last update, then the weighted input scaled by the refractory
/// efficacy.
inline NeuronState lif_update(const NeuronState& state, double w_in, Millis t_p, const LayerParams& params) {
  if (t_p < state.t_last_update) {
    throw std::invalid_argument("lif_update: input time " + std::to_string(t_p) +
                                " precedes last update at " + std::to_string(state.t_last_update));
  }
  const double decay = std::exp(static_cast<double>(state.t_last_update - t_p) / params.tau_mp);
  return detail::integrate(state, w_in, t_p, decay, params.t_ref);
}

/// Reset by subtraction. At most one spike per call.
inline std::pair<bool, NeuronState> fire_and_reset(NeuronState state, double v_th, Millis t) {
  if (state.v_mp > v_th) {
    state.v_mp -= v_th;
    state.t_last_fire = t;
    ++state.spike_count;
    return {true, state};
  }
  return {false, state};
}

/// Subtractive inhibition from `winner` onto every other neuron j:
/// v_j += sigma * v_th_j * mu.
inline void apply_lateral_inhibition(std::span<NeuronState> states, int winner, const LayerParams& params) {
  const double scale = params.sigma * params.mu;
  if (scale == 0.0) return;
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (static_cast<int>(j) == winner) continue;
    states[j].v_mp += scale * params.thresholds[static_cast<Eigen::Index>(j)];
  }
}

struct LayerState {
  std::vector<NeuronState> neurons;

  LayerState() = default;
  explicit LayerState(int size) : neurons(static_cast<std::size_t>(size)) {}

  void reset() { std::fill(neurons.begin(), neurons.end(), NeuronState{}); }
};

/// Advances one layer by one timestep. All spikes arriving at `t` are summed
/// and integrated before any threshold check; neurons are then checked in
/// ascending index order and each firing inhibits every other neuron before
/// the later ones are checked. Fired indices are written to `fired`;
/// `current` and `winners_before` are scratch buffers.
///
/// The inhibition is applied in aggregate (neuron j receives mu * sigma *
/// v_th_j once per winner other than itself), which is the same sequence of
/// operations as calling apply_lateral_inhibition per winner, regrouped.
inline void simulate_timestep(const LayerParams& params, LayerState& state, std::span<const int> input_spikes,
                              Millis t, std::vector<int>& fired, Eigen::VectorXd& current,
                              std::vector<int>& winners_before) {
  const int n_in = params.inputs();
  current.setZero(params.outputs());
  for (int k : input_spikes) {
    if (k < 0 || k >= n_in) {
      throw std::out_of_range("simulate_timestep: input index " + std::to_string(k) + " out of range");
    }
    current += params.weights.col(k);
  }

  auto& neurons = state.neurons;
  const std::size_t n = neurons.size();
  // an input at t always arrives at least 1 ms after the neuron's last spike
  const bool refractory_inert = params.t_ref <= 1.0;
  Millis last_dt = -1;
  double decay = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& nrn = neurons[i];
    const Millis dt = t - nrn.t_last_update;
    if (dt < 0) throw std::invalid_argument("simulate_timestep: time went backwards");
    if (dt != last_dt) {
      decay = std::exp(-static_cast<double>(dt) / params.tau_mp);
      last_dt = dt;
    }
    const double efficacy = refractory_inert ? 1.0 : refractory_efficacy(nrn, t, params.t_ref);
    nrn.v_mp = nrn.v_mp * decay + current[static_cast<Eigen::Index>(i)] * efficacy;
    nrn.t_last_update = t;
  }

  fired.clear();
  const double scale = params.sigma * params.mu;
  winners_before.resize(n);
  int winners = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& nrn = neurons[i];
    const double v_th = params.thresholds[static_cast<Eigen::Index>(i)];
    if (winners > 0) nrn.v_mp += scale * v_th * winners;
    winners_before[i] = winners;
    if (nrn.v_mp > v_th) {
      nrn.v_mp -= v_th;
      nrn.t_last_fire = t;
      ++nrn.spike_count;
      fired.push_back(static_cast<int>(i));
      ++winners;
    }
  }
  if (winners == 0 || scale == 0.0) return;
  for (std::size_t i = 0; i < n; ++i) {
    const bool self = neurons[i].t_last_fire == t;
    const int later = winners - winners_before[i] - (self ? 1 : 0);
    if (later > 0) neurons[i].v_mp += scale * params.thresholds[static_cast<Eigen::Index>(i)] * later;
  }
}

inline std::vector<int> simulate_timestep(const LayerParams& params, LayerState& state,
                                          std::span<const int> input_spikes, Millis t) {
  std::vector<int> fired;
  Eigen::VectorXd current;
  std::vector<int> scratch;
  simulate_timestep(params, state, input_spikes, t, fired, current, scratch);
  return fired;
}

/// Feed-forward topology; layer l maps population l to population l + 1.
struct Network {
  int input_size = 0;
  std::vector<LayerParams> layers;

  [[nodiscard]] std::vector<int> sizes() const {
    std::vector<int> s{input_size};
    for (const auto& l : layers) s.push_back(l.outputs());
    return s;
  }

  void validate() const {
    int expected_in = input_size;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& p = layers[l];
      const std::string where = "layer " + std::to_string(l) + ": ";
      if (p.inputs() != expected_in) throw ConfigError(where + "input size mismatch");
      if (p.thresholds.size() != p.outputs()) throw ConfigError(where + "threshold count mismatch");
      if ((p.thresholds.array() <= 0.0).any()) throw ConfigError(where + "thresholds must be positive");
      if (p.mu < -1.0 || p.mu > 0.0) throw ConfigError(where + "mu outside [-1, 0]");
      if (p.sigma < 0.0 || p.sigma > 1.0) throw ConfigError(where + "sigma outside [0, 1]");
      if (p.tau_mp != layers.front().tau_mp) throw ConfigError(where + "all layers must share tau_mp");
      expected_in = p.outputs();
    }
  }
};

struct NetworkState {
  std::vector<LayerState> layers;

  NetworkState() = default;
  explicit NetworkState(const Network& net) {
    for (const auto& l : net.layers) layers.emplace_back(l.outputs());
  }
};

/// Potentials to zero, spike counts and firing times cleared. Parameters live
/// in Network and are not touched.
inline void reset_network(NetworkState& state) {
  for (auto& l : state.layers) l.reset();
}

/// Runs one presentation over t = 1..duration starting from a reset state and
/// returns one record per layer (hidden first, output last). Spikes emitted by
/// layer l at t reach layer l + 1 within the same timestep.
inline std::vector<SpikeRecord> run_network(const Network& net, NetworkState& state,
                                            const SpikeRecord& input, Millis duration) {
  if (duration <= 0) throw std::invalid_argument("run_network: duration must be positive");
  if (input.population() != net.input_size) {
    throw std::invalid_argument("run_network: input record population does not match the network");
  }
  if (state.layers.size() != net.layers.size()) state = NetworkState(net);
  reset_network(state);

  std::vector<SpikeRecord> records;
  records.reserve(net.layers.size());
  for (const auto& l : net.layers) records.emplace_back(l.outputs());

  Eigen::VectorXd current;
  std::vector<int> scratch;
  std::vector<int> arriving;
  std::vector<int> fired;
  const auto events = input.events();
  std::size_t cursor = 0;
  for (Millis t = 1; t <= duration; ++t) {
    while (cursor < events.size() && events[cursor].t < t) ++cursor;
    arriving.clear();
    while (cursor < events.size() && events[cursor].t == t) arriving.push_back(events[cursor++].neuron);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      simulate_timestep(net.layers[l], state.layers[l], arriving, t, fired, current, scratch);
      for (int i : fired) records[l].push(t, i);
      std::swap(arriving, fired);
    }
  }
  return records;
}

inline std::vector<SpikeRecord> run_network(const Network& net, const SpikeRecord& input, Millis duration) {
  NetworkState state(net);
  return run_network(net, state, input, duration);
}

}  // namespace snnssl
