#pragma once

// Experiment orchestration: data preparation, evaluation, the BP -> STDP
// schedule, the self-training baseline and the metrics they produce.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "backprop.hpp"
#include "config.hpp"
#include "core.hpp"
#include "encoding.hpp"
#include "mnist.hpp"
#include "presentation.hpp"
#include "random.hpp"
#include "stdp.hpp"

namespace snnssl {

struct EpochMetrics {
  int epoch = 0;
  std::string phase;  // bp | stdp | selftrain-roundK
  double mean_accuracy = 0.0;
  double accuracy_std = 0.0;
  double seconds = 0.0;  // cumulative simulated learning time
};

/// Samples for one experiment. Bank indices replace dataset indices in
/// `splits`; unlabeled samples carry label -1 in the bank and their true
/// label only in `true_labels`.
struct ExperimentData {
  SampleBank bank;
  mnist::Splits splits;
  std::vector<int> true_labels;
  std::vector<int> dataset_index;
};

inline void check_disjoint(const mnist::Splits& s) {
  std::set<int> seen;
  auto take = [&](const std::vector<int>& v) {
    for (int i : v) {
      if (!seen.insert(i).second) throw std::logic_error("splits overlap at sample " + std::to_string(i));
    }
  };
  take(s.bp);
  take(s.stdp);
  for (const auto& t : s.test_sets) take(t);
}

inline ExperimentData prepare_data(const mnist::Dataset& data, const mnist::SplitSpec& spec, std::uint64_t seed,
                                   double max_rate = kMaxRate) {
  const auto splits = mnist::build_splits(data.labels, spec, derive_seed(seed, "splits"));
  check_disjoint(splits);

  ExperimentData out;
  auto add = [&](const std::vector<int>& ids, bool labeled) {
    std::vector<int> mapped;
    for (int id : ids) {
      const auto& bytes = data.images[static_cast<std::size_t>(id)];
      out.bank.rates.push_back(encode_rates(image_from_bytes(bytes, mnist::kSide, mnist::kSide), max_rate));
      const int label = data.labels[static_cast<std::size_t>(id)];
      out.bank.labels.push_back(labeled ? label : -1);
      out.true_labels.push_back(label);
      out.dataset_index.push_back(id);
      mapped.push_back(out.bank.size() - 1);
    }
    return mapped;
  };
  out.splits.bp = add(splits.bp, true);
  out.splits.stdp = add(splits.stdp, false);
  for (const auto& t : splits.test_sets) out.splits.test_sets.push_back(add(t, true));
  return out;
}

inline Network make_network(const NetworkConfig& cfg, const BpHyperParams& bp, std::uint64_t seed) {
  Network net;
  net.input_size = cfg.input_size;
  const std::vector<int> sizes{cfg.input_size, cfg.hidden_size, cfg.output_size};
  const std::vector<double> mus{cfg.mu_hidden, cfg.mu_output};
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Rng rng = make_rng(derive_seed(seed, "init", l));
    auto init = init_layer(sizes[l + 1], sizes[l], bp.alpha, rng, bp.init);
    LayerParams p;
    p.weights = std::move(init.weights);
    p.thresholds = std::move(init.thresholds);
    p.mu = mus[l];
    p.sigma = cfg.sigma;
    p.tau_mp = cfg.tau_mp;
    p.t_ref = cfg.t_ref;
    net.layers.push_back(std::move(p));
  }
  net.validate();
  return net;
}

/// Argmax with ties going to the lowest index.
inline int argmax_label(std::span<const int> counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

inline std::vector<int> output_counts(const Network& net, const RateMap& rates, Millis duration, std::uint64_t seed) {
  NetworkState state(net);
  const auto p = present(net, state, rates, duration, seed);
  return p.output().spike_counts();
}

inline int classify(const Network& net, const RateMap& rates, Millis duration, std::uint64_t seed) {
  return argmax_label(output_counts(net, rates, duration, seed));
}

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across sets
  std::vector<double> per_set;
};

inline EvalResult summarize_sets(std::vector<double> per_set) {
  EvalResult r;
  r.per_set = std::move(per_set);
  if (r.per_set.empty()) return r;
  r.mean = std::accumulate(r.per_set.begin(), r.per_set.end(), 0.0) / static_cast<double>(r.per_set.size());
  double var = 0.0;
  for (double a : r.per_set) var += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(var / static_cast<double>(r.per_set.size()));
  return r;
}

/// Accuracy on each test set with a generic classifier.
inline EvalResult evaluate_with(const std::vector<std::vector<int>>& test_sets, std::span<const int> labels,
                                const std::function<int(int)>& predict) {
  std::vector<double> per_set;
  for (const auto& set : test_sets) {
    int correct = 0;
    for (int idx : set) correct += predict(idx) == labels[static_cast<std::size_t>(idx)] ? 1 : 0;
    per_set.push_back(set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(set.size()));
  }
  return summarize_sets(std::move(per_set));
}

/// Mean and spread of accuracy over the test sets. The network is only read.
inline EvalResult evaluate(const Network& net, const SampleBank& bank, const std::vector<std::vector<int>>& test_sets,
                           std::uint64_t seed, int epoch, Millis duration = 150) {
  return evaluate_with(test_sets, bank.labels, [&](int idx) {
    return classify(net, bank.rates[static_cast<std::size_t>(idx)], duration,
                    derive_seed(seed, "eval-encode", static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)));
  });
}

inline double improvement_rate(double acc_before, double acc_after) {
  if (!(acc_before > 0.0)) throw std::invalid_argument("improvement_rate: accuracy before STDP must be positive");
  return acc_after / acc_before;
}

enum class GuardDecision { proceed, stop };

/// Early stop for the STDP phase: once `patience` STDP epochs exist, stop if
/// their mean accuracy sits more than `margin` below the BP-phase end.
inline GuardDecision stdp_guard(std::span<const double> stdp_accuracies, double bp_end_accuracy,
                                std::optional<int> patience, double margin) {
  if (!patience || static_cast<int>(stdp_accuracies.size()) < *patience) return GuardDecision::proceed;
  const auto window = stdp_accuracies.last(static_cast<std::size_t>(*patience));
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  return mean < bp_end_accuracy - margin ? GuardDecision::stop : GuardDecision::proceed;
}

struct RunSummary {
  std::string kind;
  double best_accuracy = 0.0;
  int best_epoch = 0;
  double seconds_to_best = 0.0;        // simulated learning time
  double final_accuracy = 0.0;
  double total_seconds = 0.0;          // simulated learning time
  double wall_seconds_to_best = 0.0;
  double wall_seconds_total = 0.0;
  std::optional<double> bp_end_accuracy;
  std::optional<double> bp_best_accuracy;
  std::optional<double> improvement_rate;
  bool stopped_early = false;
  std::vector<int> labeling_epochs;    // self-training: epoch after which each labeling happened
  std::vector<double> pseudo_label_accuracy;
};

struct RunResult {
  std::vector<EpochMetrics> series;
  std::vector<double> wall_seconds;  // cumulative, parallel to series
  RunSummary summary;
  Network network;
};

using ProgressFn = std::function<void(const EpochMetrics&)>;

namespace detail {

class Recorder {
 public:
  Recorder(RunResult& out, const ExperimentData& data, const RunConfig& cfg, const ProgressFn& progress)
      : out_(out), data_(data), cfg_(cfg), progress_(progress), start_(std::chrono::steady_clock::now()) {}

  void learn(Millis duration, std::size_t presentations) {
    learned_ms_ += static_cast<double>(duration) * static_cast<double>(presentations);
  }

  /// Evaluates (subject to eval_every) and appends a row.
  void epoch_done(const Network& net, int epoch, const std::string& phase, bool force = false) {
    if (!force && epoch % cfg_.schedule.eval_every != 0) return;
    const auto r = evaluate(net, data_.bank, data_.splits.test_sets, cfg_.seed, epoch, cfg_.schedule.test_ms);
    EpochMetrics m{epoch, phase, r.mean, r.std, learned_ms_ / 1000.0};
    out_.series.push_back(m);
    out_.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    if (progress_) progress_(m);
  }

  void finish(const std::string& kind) {
    auto& s = out_.summary;
    s.kind = kind;
    s.total_seconds = learned_ms_ / 1000.0;
    if (out_.series.empty()) return;
    std::size_t best = 0;
    for (std::size_t i = 1; i < out_.series.size(); ++i) {
      if (out_.series[i].mean_accuracy > out_.series[best].mean_accuracy) best = i;
    }
    s.best_accuracy = out_.series[best].mean_accuracy;
    s.best_epoch = out_.series[best].epoch;
    s.seconds_to_best = out_.series[best].seconds;
    s.wall_seconds_to_best = out_.wall_seconds[best];
    s.final_accuracy = out_.series.back().mean_accuracy;
    s.wall_seconds_total = out_.wall_seconds.back();
  }

 private:
  RunResult& out_;
  const ExperimentData& data_;
  const RunConfig& cfg_;
  const ProgressFn& progress_;
  std::chrono::steady_clock::time_point start_;
  double learned_ms_ = 0.0;
};

}  // namespace detail

/// BP for bp_epochs, then (unless kind is bp-only) STDP for stdp_epochs on the
/// unlabeled set, evaluating after every epoch.
inline RunResult train_proposed(const RunConfig& cfg, const ExperimentData& data, const ProgressFn& progress = {}) {
  validate(cfg);
  RunResult out;
  out.network = make_network(cfg.network, cfg.bp, cfg.seed);
  Network& net = out.network;
  detail::Recorder rec(out, data, cfg, progress);
  const auto& sched = cfg.schedule;

  int epoch = 0;
  for (int e = 0; e < sched.bp_epochs; ++e) {
    ++epoch;
    bp_epoch(net, data.bank, data.splits.bp, cfg.bp, cfg.seed, epoch, sched.train_ms);
    rec.learn(sched.train_ms, data.splits.bp.size());
    rec.epoch_done(net, epoch, "bp", e + 1 == sched.bp_epochs);
  }

  if (cfg.kind != ExperimentKind::bp_only && sched.stdp_epochs > 0) {
    double bp_best = 0.0;
    for (const auto& m : out.series) bp_best = std::max(bp_best, m.mean_accuracy);
    const double bp_end = out.series.empty() ? 0.0 : out.series.back().mean_accuracy;
    out.summary.bp_end_accuracy = bp_end;
    out.summary.bp_best_accuracy = bp_best;

    std::vector<double> stdp_acc;
    for (int e = 0; e < sched.stdp_epochs; ++e) {
      ++epoch;
      stdp_epoch(net, data.bank, data.splits.stdp, cfg.stdp, cfg.bp, cfg.seed, epoch, sched.train_ms);
      rec.learn(sched.train_ms, data.splits.stdp.size());
      const bool last = e + 1 == sched.stdp_epochs;
      const auto before = out.series.size();
      rec.epoch_done(net, epoch, "stdp", last);
      if (out.series.size() == before) continue;
      stdp_acc.push_back(out.series.back().mean_accuracy);
      if (!last && stdp_guard(stdp_acc, bp_end, cfg.guard.patience, cfg.guard.margin) == GuardDecision::stop) {
        out.summary.stopped_early = true;
        break;
      }
    }
    if (bp_end > 0.0) out.summary.improvement_rate = improvement_rate(bp_end, out.series.back().mean_accuracy);
  }
  rec.finish(to_string(cfg.kind));
  return out;
}

/// Confidence-ranked pseudo-labels: each candidate is presented for
/// `duration`; its score is the largest output spike count and its label the
/// argmax neuron. Returns the top `take` as (bank index, label), ranked by
/// score with ties going to the lower bank index.
inline std::vector<std::pair<int, int>> select_pseudo_labels(const Network& net, const SampleBank& bank,
                                                             std::span<const int> candidates, int take,
                                                             Millis duration, std::uint64_t seed, int round) {
  struct Scored {
    int idx, score, label;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (int idx : candidates) {
    const auto counts = output_counts(net, bank.rates[static_cast<std::size_t>(idx)], duration,
                                      derive_seed(seed, "label-encode", static_cast<std::uint64_t>(round),
                                                  static_cast<std::uint64_t>(idx)));
    const int label = argmax_label(counts);
    scored.push_back({idx, counts[static_cast<std::size_t>(label)], label});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.idx < b.idx;
  });
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < take; ++i) {
    out.emplace_back(scored[i].idx, scored[i].label);
  }
  return out;
}

/// Self-training baseline: BP on the labeled pool for epochs_per_round epochs,
/// then pseudo-label the most confident label_per_round unlabeled samples and
/// move them into the pool; repeat until the unlabeled pool is empty.
inline RunResult train_self_training(const RunConfig& cfg, const ExperimentData& data,
                                     const ProgressFn& progress = {}) {
  validate(cfg);
  RunResult out;
  out.network = make_network(cfg.network, cfg.bp, cfg.seed);
  Network& net = out.network;
  detail::Recorder rec(out, data, cfg, progress);
  const auto& st = cfg.self_training;

  SampleBank bank = data.bank;  // pseudo-labels are written here
  std::vector<int> labeled = data.splits.bp;
  std::vector<int> unlabeled = data.splits.stdp;

  int epoch = 0;
  for (int round = 1;; ++round) {
    if (st.reinitialize && round > 1) {
      out.network = make_network(cfg.network, cfg.bp, derive_seed(cfg.seed, "reinit", static_cast<std::uint64_t>(round)));
    }
    const std::string phase = "selftrain-round" + std::to_string(round);
    for (int e = 0; e < st.epochs_per_round; ++e) {
      ++epoch;
      bp_epoch(net, bank, labeled, cfg.bp, cfg.seed, epoch, cfg.schedule.train_ms);
      rec.learn(cfg.schedule.train_ms, labeled.size());
      rec.epoch_done(net, epoch, phase, e + 1 == st.epochs_per_round);
    }
    if (unlabeled.empty()) break;

    const auto picked = select_pseudo_labels(net, bank, unlabeled, st.label_per_round, cfg.schedule.test_ms,
                                             cfg.seed, round);
    rec.learn(cfg.schedule.test_ms, unlabeled.size());
    int correct = 0;
    std::set<int> moved;
    for (const auto& [idx, label] : picked) {
      bank.labels[static_cast<std::size_t>(idx)] = label;
      correct += label == data.true_labels[static_cast<std::size_t>(idx)] ? 1 : 0;
      labeled.push_back(idx);
      moved.insert(idx);
    }
    std::erase_if(unlabeled, [&](int idx) { return moved.contains(idx); });
    out.summary.labeling_epochs.push_back(epoch);
    out.summary.pseudo_label_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(picked.size()));
    if (unlabeled.empty()) break;
  }
  rec.finish(to_string(cfg.kind));
  return out;
}

inline RunResult run_experiment(const RunConfig& cfg, const ExperimentData& data, const ProgressFn& progress = {}) {
  return cfg.kind == ExperimentKind::self_training ? train_self_training(cfg, data, progress)
                                                   : train_proposed(cfg, data, progress);
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// CSV with header `epoch,phase,mean_accuracy,accuracy_std,seconds`, LF line
/// endings, '.' decimals independent of locale.
inline std::string emit_metrics(std::span<const EpochMetrics> series) {
  std::string out = "epoch,phase,mean_accuracy,accuracy_std,seconds\n";
  for (const auto& m : series) {
    out += std::to_string(m.epoch);
    out += ',';
    out += m.phase;
    out += ',';
    out += detail::fixed(m.mean_accuracy, 8);
    out += ',';
    out += detail::fixed(m.accuracy_std, 8);
    out += ',';
    out += detail::fixed(m.seconds, 3);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["kind"] = s.kind;
  j["best_accuracy"] = s.best_accuracy;
  j["best_epoch"] = s.best_epoch;
  j["learning_seconds_to_best"] = s.seconds_to_best;
  j["final_accuracy"] = s.final_accuracy;
  j["total_learning_seconds"] = s.total_seconds;
  j["wall_seconds_to_best"] = s.wall_seconds_to_best;
  j["wall_seconds_total"] = s.wall_seconds_total;
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["bp_end_accuracy"] = opt(s.bp_end_accuracy);
  j["bp_best_accuracy"] = opt(s.bp_best_accuracy);
  j["improvement_rate"] = opt(s.improvement_rate);
  j["stopped_early"] = s.stopped_early;
  j["labeling_epochs"] = s.labeling_epochs;
  j["pseudo_label_accuracy"] = s.pseudo_label_accuracy;
  return j;
}

}  // namespace snnssl
