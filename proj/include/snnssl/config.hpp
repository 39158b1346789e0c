#pragma once

// Run configuration: every experiment parameter with its default, a flat JSON
// file format, and validation that names the offending key.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "backprop.hpp"
#include "core.hpp"
#include "mnist.hpp"
#include "stdp.hpp"

namespace snnssl {

enum class ExperimentKind { proposed, bp_only, self_training };

struct Schedule {
  int bp_epochs = 150;
  int stdp_epochs = 50;
  int eval_every = 1;
  Millis train_ms = 50;
  Millis test_ms = 150;

  [[nodiscard]] int total_epochs() const { return bp_epochs + stdp_epochs; }
};

struct NetworkConfig {
  int input_size = 784;
  int hidden_size = 300;
  int output_size = 10;
  double tau_mp = 20.0;
  double mu_hidden = -0.4;
  double mu_output = -1.0;
  double sigma = 0.5;
  double t_ref = 1.0;
  double max_rate = kMaxRate;
};

struct SelfTrainingConfig {
  int epochs_per_round = 200;
  int label_per_round = 200;
  bool reinitialize = false;
};

struct GuardConfig {
  std::optional<int> patience;  // disabled when empty
  double margin = 0.02;
};

struct RunConfig {
  ExperimentKind kind = ExperimentKind::proposed;
  std::uint64_t seed = 1;
  std::string data_dir;
  mnist::SplitSpec split;
  Schedule schedule;
  NetworkConfig network;
  BpHyperParams bp;
  StdpConfig stdp;
  SelfTrainingConfig self_training;
  GuardConfig guard;
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::proposed: return "proposed";
    case ExperimentKind::bp_only: return "bp-only";
    case ExperimentKind::self_training: return "self-training";
  }
  return "proposed";
}

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "proposed") return ExperimentKind::proposed;
  if (s == "bp-only") return ExperimentKind::bp_only;
  if (s == "self-training") return ExperimentKind::self_training;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

namespace detail {

inline std::string to_string(ThresholdRegularization m) {
  return m == ThresholdRegularization::classic ? "classic" : "modified";
}

inline std::string to_string(WeightInit w) {
  return w == WeightInit::uniform ? "uniform" : "truncated_normal";
}

inline std::string to_string(StdpLayers l) {
  switch (l) {
    case StdpLayers::both: return "both";
    case StdpLayers::hidden: return "hidden";
    case StdpLayers::output: return "output";
  }
  return "both";
}

template <typename T>
void require(bool ok, const char* key, const T& value, const char* rule) {
  if (!ok) {
    std::ostringstream os;
    os << key << ": value " << value << " out of range (" << rule << ")";
    throw ConfigError(os.str());
  }
}

}  // namespace detail

/// Range checks for every field; the message starts with the key name.
inline void validate(const RunConfig& c) {
  using detail::require;
  const auto& n = c.network;
  require(n.input_size == mnist::kPixels, "input_size", n.input_size, "must be 784");
  require(n.hidden_size >= 1, "hidden_size", n.hidden_size, ">= 1");
  require(n.output_size == mnist::kClasses, "output_size", n.output_size, "must be 10");
  require(n.tau_mp > 0.0, "tau_mp", n.tau_mp, "> 0");
  require(n.mu_hidden >= -1.0 && n.mu_hidden <= 0.0, "mu_hidden", n.mu_hidden, "[-1, 0]");
  require(n.mu_output >= -1.0 && n.mu_output <= 0.0, "mu_output", n.mu_output, "[-1, 0]");
  require(n.sigma >= 0.0 && n.sigma <= 1.0, "sigma", n.sigma, "[0, 1]");
  require(n.t_ref >= 0.0, "t_ref", n.t_ref, ">= 0");
  require(n.max_rate >= 0.0 && n.max_rate <= 1000.0, "max_rate", n.max_rate, "[0, 1000]");

  const auto& s = c.schedule;
  require(s.bp_epochs >= 0, "bp_epochs", s.bp_epochs, ">= 0");
  require(s.stdp_epochs >= 0, "stdp_epochs", s.stdp_epochs, ">= 0");
  require(s.eval_every >= 1, "eval_every", s.eval_every, ">= 1");
  require(s.train_ms >= 1, "train_ms", s.train_ms, ">= 1");
  require(s.test_ms >= 1, "test_ms", s.test_ms, ">= 1");

  const auto& sp = c.split;
  require(sp.labeled_per_class >= 1, "labeled_per_class", sp.labeled_per_class, ">= 1");
  require(sp.unlabeled_per_class >= 0, "unlabeled_per_class", sp.unlabeled_per_class, ">= 0");
  require(sp.test_sets >= 1, "test_sets", sp.test_sets, ">= 1");
  require(sp.test_per_class >= 1, "test_per_class", sp.test_per_class, ">= 1");

  const auto& b = c.bp;
  require(b.alpha > 1.0, "alpha", b.alpha, "> 1");
  require(b.eta_w >= 0.0, "eta_w", b.eta_w, ">= 0");
  require(b.eta_th >= 0.0, "eta_th", b.eta_th, ">= 0");
  require(b.rho >= 0.0, "rho", b.rho, ">= 0");
  require(b.batch_size >= 1, "batch_size", b.batch_size, ">= 1");
  require(b.target_scale > 0.0, "target_scale", b.target_scale, "> 0");

  const auto& st = c.stdp;
  require(st.a_plus > 0.0, "a_plus", st.a_plus, "> 0");
  require(st.a_minus < 0.0, "a_minus", st.a_minus, "< 0");
  require(st.tau_plus > 0.0, "tau_plus", st.tau_plus, "> 0");
  require(st.tau_minus > 0.0, "tau_minus", st.tau_minus, "> 0");
  require(st.lr >= 0.0, "stdp_lr", st.lr, ">= 0");
  require(st.dead_zone >= 0, "stdp_dead_zone", st.dead_zone, ">= 0");
  require(st.window >= st.dead_zone, "stdp_window", st.window, ">= stdp_dead_zone");

  const auto& t = c.self_training;
  require(t.epochs_per_round >= 1, "self_train_epochs_per_round", t.epochs_per_round, ">= 1");
  require(t.label_per_round >= 1, "self_train_label_count", t.label_per_round, ">= 1");

  if (c.guard.patience) require(*c.guard.patience >= 1, "guard_patience", *c.guard.patience, ">= 1");
  require(c.guard.margin >= 0.0, "guard_margin", c.guard.margin, ">= 0");
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["labeled_per_class"] = c.split.labeled_per_class;
  j["unlabeled_per_class"] = c.split.unlabeled_per_class;
  j["test_sets"] = c.split.test_sets;
  j["test_per_class"] = c.split.test_per_class;
  j["bp_epochs"] = c.schedule.bp_epochs;
  j["stdp_epochs"] = c.schedule.stdp_epochs;
  j["eval_every"] = c.schedule.eval_every;
  j["train_ms"] = c.schedule.train_ms;
  j["test_ms"] = c.schedule.test_ms;
  j["input_size"] = c.network.input_size;
  j["hidden_size"] = c.network.hidden_size;
  j["output_size"] = c.network.output_size;
  j["tau_mp"] = c.network.tau_mp;
  j["mu_hidden"] = c.network.mu_hidden;
  j["mu_output"] = c.network.mu_output;
  j["sigma"] = c.network.sigma;
  j["t_ref"] = c.network.t_ref;
  j["max_rate"] = c.network.max_rate;
  j["alpha"] = c.bp.alpha;
  j["eta_w"] = c.bp.eta_w;
  j["eta_th"] = c.bp.eta_th;
  j["gamma"] = c.bp.gamma;
  j["rho"] = c.bp.rho;
  j["batch_size"] = c.bp.batch_size;
  j["target_scale"] = c.bp.target_scale;
  j["threshold_regularization"] = detail::to_string(c.bp.regularization);
  j["weight_init"] = detail::to_string(c.bp.init);
  j["a_plus"] = c.stdp.a_plus;
  j["a_minus"] = c.stdp.a_minus;
  j["tau_plus"] = c.stdp.tau_plus;
  j["tau_minus"] = c.stdp.tau_minus;
  j["stdp_lr"] = c.stdp.lr;
  j["stdp_window"] = c.stdp.window;
  j["stdp_dead_zone"] = c.stdp.dead_zone;
  j["stdp_layers"] = detail::to_string(c.stdp.layers);
  j["self_train_epochs_per_round"] = c.self_training.epochs_per_round;
  j["self_train_label_count"] = c.self_training.label_per_round;
  j["self_train_reinit"] = c.self_training.reinitialize;
  j["guard_patience"] = c.guard.patience ? nlohmann::ordered_json(*c.guard.patience) : nlohmann::ordered_json(nullptr);
  j["guard_margin"] = c.guard.margin;
  return j;
}

/// Overlays the keys present in `j` onto the defaults. Unknown keys and
/// wrongly typed values are rejected. When eta_w is given without eta_th,
/// eta_th follows as 0.1 * eta_w.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(key + ": unknown configuration key");
  }
  auto get = [&]<typename T>(const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(key) + ": wrong value type");
    }
  };
  auto get_enum = [&](const char* key, auto& field, auto parse) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigError(std::string(key) + ": expected a string");
    field = parse(j.at(key).get<std::string>());
  };

  get_enum("kind", c.kind, parse_kind);
  get("seed", c.seed);
  get("data_dir", c.data_dir);
  get("labeled_per_class", c.split.labeled_per_class);
  get("unlabeled_per_class", c.split.unlabeled_per_class);
  get("test_sets", c.split.test_sets);
  get("test_per_class", c.split.test_per_class);
  get("bp_epochs", c.schedule.bp_epochs);
  get("stdp_epochs", c.schedule.stdp_epochs);
  get("eval_every", c.schedule.eval_every);
  get("train_ms", c.schedule.train_ms);
  get("test_ms", c.schedule.test_ms);
  get("input_size", c.network.input_size);
  get("hidden_size", c.network.hidden_size);
  get("output_size", c.network.output_size);
  get("tau_mp", c.network.tau_mp);
  get("mu_hidden", c.network.mu_hidden);
  get("mu_output", c.network.mu_output);
  get("sigma", c.network.sigma);
  get("t_ref", c.network.t_ref);
  get("max_rate", c.network.max_rate);
  get("alpha", c.bp.alpha);
  get("eta_w", c.bp.eta_w);
  if (j.contains("eta_w") && !j.contains("eta_th")) c.bp.eta_th = 0.1 * c.bp.eta_w;
  get("eta_th", c.bp.eta_th);
  get("gamma", c.bp.gamma);
  get("rho", c.bp.rho);
  get("batch_size", c.bp.batch_size);
  get("target_scale", c.bp.target_scale);
  get_enum("threshold_regularization", c.bp.regularization, [](const std::string& s) {
    if (s == "classic") return ThresholdRegularization::classic;
    if (s == "modified") return ThresholdRegularization::modified;
    throw ConfigError("threshold_regularization: expected 'classic' or 'modified'");
  });
  get_enum("weight_init", c.bp.init, [](const std::string& s) {
    if (s == "uniform") return WeightInit::uniform;
    if (s == "truncated_normal") return WeightInit::truncated_normal;
    throw ConfigError("weight_init: expected 'uniform' or 'truncated_normal'");
  });
  get("a_plus", c.stdp.a_plus);
  get("a_minus", c.stdp.a_minus);
  get("tau_plus", c.stdp.tau_plus);
  get("tau_minus", c.stdp.tau_minus);
  get("stdp_lr", c.stdp.lr);
  get("stdp_window", c.stdp.window);
  get("stdp_dead_zone", c.stdp.dead_zone);
  get_enum("stdp_layers", c.stdp.layers, [](const std::string& s) {
    if (s == "both") return StdpLayers::both;
    if (s == "hidden") return StdpLayers::hidden;
    if (s == "output") return StdpLayers::output;
    throw ConfigError("stdp_layers: expected 'both', 'hidden' or 'output'");
  });
  get("self_train_epochs_per_round", c.self_training.epochs_per_round);
  get("self_train_label_count", c.self_training.label_per_round);
  get("self_train_reinit", c.self_training.reinitialize);
  if (j.contains("guard_patience")) {
    const auto& p = j.at("guard_patience");
    if (p.is_null()) {
      c.guard.patience.reset();
    } else if (p.is_number_integer()) {
      c.guard.patience = p.get<int>();
    } else {
      throw ConfigError("guard_patience: expected an integer or null");
    }
  }
  get("guard_margin", c.guard.margin);

  validate(c);
  return c;
}

/// Parses config text; empty or whitespace-only text yields the defaults.
inline RunConfig parse_config(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    RunConfig c;
    validate(c);
    return c;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline std::string dump_config(const RunConfig& c) {
  return to_json(c).dump(2) + "\n";
}

}  // namespace snnssl
