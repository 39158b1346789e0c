// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any of the selected criteria fail.
//
//   acceptance --fast          criteria 5-11 (seconds)
//   acceptance --experiments   criteria 1-4 on MNIST (hours)
//
// Experiment runs are stored under --work-dir together with a key made of the
// resolved config and the library headers; a matching key is reused.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "oracles.hpp"
#include "snnssl/snnssl.hpp"

using namespace snnssl;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail << std::endl;
  if (!ok) ++failures;
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// --- fast criteria ---------------------------------------------------------

void gradient_criterion() {
  const auto start = std::chrono::steady_clock::now();
  const auto r = oracle::gradient_suite(derive_seed(2024, "acceptance-gradient"), 120);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(5, "gradient suite", r.layers >= 100 && r.worst <= 1e-4 && secs < 10.0,
         std::to_string(r.layers) + " layers, " + std::to_string(r.checks) + " derivatives, worst rel err " +
             num(r.worst, 3) + ", " + num(secs, 3) + " s");
}

void equivalence_criterion() {
  const auto r = oracle::equivalence_suite(derive_seed(2024, "acceptance-equivalence"), 100);
  report(6, "closed form vs matrix form", r.layers == 100 && r.worst <= 1e-10,
         std::to_string(r.layers) + " instances, max abs diff " + num(r.worst, 3));
}

void conservation_criterion() {
  Rng rng = make_rng(derive_seed(2024, "acceptance-conservation"));
  double worst_classic = 0.0, worst_modified = 0.0;
  const double rho = BpHyperParams{}.rho;
  for (int t = 0; t < 200; ++t) {
    const int n = 10 + static_cast<int>(uniform_index(rng, 300));
    Eigen::VectorXd th(n);
    for (int i = 0; i < n; ++i) th[i] = 0.05 + uniform01(rng);
    std::vector<char> fired(static_cast<std::size_t>(n));
    int winners = 0;
    for (auto& f : fired) {
      f = uniform01(rng) < 0.2;
      winners += f;
    }
    Eigen::VectorXd c = th, m = th;
    regularize_thresholds(c, fired, rho, ThresholdRegularization::classic);
    regularize_thresholds(m, fired, rho, ThresholdRegularization::modified);
    worst_classic = std::max(worst_classic, std::abs(c.sum() - th.sum()) / th.sum());
    const double expected = rho * winners * winners;
    const double shift = m.sum() - th.sum();
    worst_modified = std::max(worst_modified, std::abs(shift - expected) / std::max(expected, 1e-300));
  }
  report(7, "threshold regularization conservation", worst_classic <= 1e-12 && worst_modified <= 1e-6,
         "classic worst rel drift " + num(worst_classic, 3) + ", modified worst rel error vs rho*N^2 " +
             num(worst_modified, 3));
}

void stdp_criterion() {
  const StdpConfig cfg;
  double worst_kernel = 0.0;
  for (int ds = 1; ds <= 20; ++ds) {
    worst_kernel = std::max(worst_kernel, std::abs(stdp_delta(-ds, cfg) - 0.6 * std::exp(-ds / 8.0)));
    worst_kernel = std::max(worst_kernel, std::abs(stdp_delta(ds, cfg) - -0.3 * std::exp(-ds / 5.0)));
  }
  bool zeros = true;
  for (int ds : {0, 21, -21, 100, -100}) zeros = zeros && stdp_delta(ds, cfg) == 0.0;

  Rng rng = make_rng(derive_seed(2024, "acceptance-stdp"));
  double worst_pairs = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto pre = oracle::random_record(rng, 20, 50, 0.1);
    const auto post = oracle::random_record(rng, 8, 50, 0.08);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(8, 20);
    apply_stdp(pre, post, w, cfg);
    worst_pairs = std::max(worst_pairs, (w - oracle::brute_stdp_change(pre, post, cfg)).cwiseAbs().maxCoeff());
  }
  report(8, "STDP kernel and pair additivity", worst_kernel <= 1e-15 && zeros && worst_pairs <= 1e-15,
         "kernel max diff " + num(worst_kernel, 3) + ", zeros " + (zeros ? "ok" : "wrong") +
             ", brute-force max diff " + num(worst_pairs, 3));
}

void trace_criterion() {
  Rng rng = make_rng(derive_seed(2024, "acceptance-traces"));
  bool chained = true;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    Network net;
    net.input_size = 25;
    const std::vector<int> sizes{25, 5 + static_cast<int>(uniform_index(rng, 20)), 4};
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      auto init = init_layer(sizes[l + 1], sizes[l], 2.0, rng);
      LayerParams p;
      p.weights = init.weights.cwiseAbs() * 2.0;
      p.thresholds = init.thresholds;
      p.mu = l == 0 ? -0.4 : -1.0;
      net.layers.push_back(p);
    }
    RateMap rates(5, 5);
    for (auto& v : rates.values) v = 150.0 * uniform01(rng);
    NetworkState state(net);
    const auto p = present(net, state, rates, 50, derive_seed(2024, "acceptance-traces", static_cast<std::uint64_t>(t)));
    const auto g = gather_grad_states(net, p, 50);
    for (std::size_t l = 0; l + 1 < g.size(); ++l) chained = chained && g[l].a == g[l + 1].x;
    for (const auto& rec : p.populations) {
      for (Millis at : {1, 13, 50}) {
        const Eigen::VectorXd d = traces_from_record(rec, at, 20.0) - oracle::direct_traces(rec, at, 20.0);
        worst = std::max(worst, d.size() ? d.cwiseAbs().maxCoeff() : 0.0);
      }
    }
  }
  report(9, "trace chaining", chained && worst <= 1e-12,
         std::string("layer outputs equal next inputs: ") + (chained ? "yes" : "no") +
             ", incremental vs direct max diff " + num(worst, 3));
}

void init_criterion() {
  bool ok = true;
  std::string detail;
  for (int m : {10, 300, 784}) {
    Rng rng = make_rng(derive_seed(2024, "acceptance-init", static_cast<std::uint64_t>(m)));
    double sum = 0.0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) sum += init_layer(1, m, 2.0, rng).weights.squaredNorm();
    const double mean = sum / reps;
    ok = ok && std::abs(mean - 1.0) <= 0.1;
    detail += "M=" + std::to_string(m) + ": " + num(mean) + "  ";
  }
  report(10, "init statistics", ok, detail + "(target 1 +/- 0.1)");
}

mnist::Dataset synthetic_dataset() {
  std::vector<mnist::ImageBytes> images;
  std::vector<int> labels;
  Rng rng = make_rng(7);
  for (int i = 0; i < 12; ++i) {
    for (int c = 0; c < mnist::kClasses; ++c) {
      mnist::ImageBytes img{};
      for (int r = 2 * c + 3; r < 2 * c + 6; ++r) {
        for (int col = 6; col < 22; ++col) {
          img[static_cast<std::size_t>(r * mnist::kSide + col)] = static_cast<std::uint8_t>(200 + uniform_index(rng, 56));
        }
      }
      images.push_back(img);
      labels.push_back(c);
    }
  }
  return mnist::assemble(std::move(images), std::move(labels));
}

void determinism_criterion(const std::string& data_dir) {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.schedule.bp_epochs = 3;
  cfg.schedule.stdp_epochs = 2;
  std::string source;
  mnist::Dataset ds;
  if (!data_dir.empty() && fs::exists(data_dir)) {
    ds = mnist::load_training_set(data_dir);
    cfg.split = mnist::SplitSpec{10, 20, 3, 10};
    source = "MNIST";
  } else {
    ds = synthetic_dataset();
    cfg.split = mnist::SplitSpec{3, 4, 2, 2};
    source = "synthetic digits";
  }
  const auto data = prepare_data(ds, cfg.split, cfg.seed);
  const std::string a = emit_metrics(run_experiment(cfg, data).series);
  const auto data2 = prepare_data(ds, cfg.split, cfg.seed);
  const std::string b = emit_metrics(run_experiment(cfg, data2).series);
  report(11, "determinism", a == b && !a.empty(),
         "two reduced runs on " + source + ", metrics " + std::to_string(a.size()) + " bytes, " +
             (a == b ? "identical" : "different"));
}

// --- experiment criteria ---------------------------------------------------

std::uint64_t headers_hash(const fs::path& include_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(include_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    all += f.filename().string() + '\n' + buf.str();
  }
  return fnv1a64(all);
}

struct Outcome {
  RunSummary summary;
  bool cached = false;
};

RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.kind = j.at("kind").get<std::string>();
  s.best_accuracy = j.at("best_accuracy").get<double>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.final_accuracy = j.at("final_accuracy").get<double>();
  s.wall_seconds_total = j.at("wall_seconds_total").get<double>();
  s.wall_seconds_to_best = j.at("wall_seconds_to_best").get<double>();
  if (!j.at("bp_end_accuracy").is_null()) s.bp_end_accuracy = j.at("bp_end_accuracy").get<double>();
  if (!j.at("bp_best_accuracy").is_null()) s.bp_best_accuracy = j.at("bp_best_accuracy").get<double>();
  return s;
}

class Runner {
 public:
  Runner(fs::path work, std::string data_dir, std::uint64_t code_hash)
      : work_(std::move(work)), data_dir_(std::move(data_dir)), code_hash_(code_hash) {}

  Outcome run(const RunConfig& cfg, const std::string& name) {
    const fs::path dir = work_ / name;
    const std::string key = std::to_string(code_hash_) + "\n" + dump_config(cfg);
    if (read(dir / "key.txt") == key && fs::exists(dir / "summary.json")) {
      return {summary_from_json(nlohmann::json::parse(read(dir / "summary.json"))), true};
    }
    if (!dataset_) dataset_ = mnist::load_training_set(data_dir_);
    const auto data = prepare_data(*dataset_, cfg.split, cfg.seed, cfg.network.max_rate);
    std::cout << "  running " << name << " ..." << std::endl;
    const auto r = run_experiment(cfg, data);
    fs::create_directories(dir);
    write(dir / "metrics.csv", emit_metrics(r.series));
    write(dir / "config.json", dump_config(cfg));
    write(dir / "summary.json", summary_json(r.summary).dump(2) + "\n");
    write(dir / "key.txt", key);
    return {r.summary, false};
  }

 private:
  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }
  static void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
  }

  fs::path work_;
  std::string data_dir_;
  std::uint64_t code_hash_;
  std::optional<mnist::Dataset> dataset_;
};

void experiment_criteria(const std::string& data_dir, const fs::path& work, const fs::path& include_dir,
                         int seeds, int self_training_eval_every) {
  if (data_dir.empty() || !fs::exists(data_dir)) {
    for (int id : {1, 2, 3, 4}) report(id, "MNIST experiments", false, "MNIST directory not found: '" + data_dir + "'");
    return;
  }
  Runner runner(work, data_dir, headers_hash(include_dir));
  std::vector<RunSummary> small, large, self;
  for (int s = 1; s <= seeds; ++s) {
    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.data_dir = data_dir;
    cfg.split.labeled_per_class = 10;
    small.push_back(runner.run(cfg, "proposed_10x10_seed" + std::to_string(s)).summary);
    cfg.split.labeled_per_class = 30;
    large.push_back(runner.run(cfg, "proposed_30x10_seed" + std::to_string(s)).summary);
  }
  // self-training last: it takes far longer than the proposed runs
  for (int s = 1; s <= seeds; ++s) {
    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.data_dir = data_dir;
    cfg.kind = ExperimentKind::self_training;
    cfg.schedule.eval_every = self_training_eval_every;
    self.push_back(runner.run(cfg, "selftrain_10x10_seed" + std::to_string(s)).summary);
  }

  auto mean = [](const std::vector<RunSummary>& v, auto f) {
    double acc = 0.0;
    for (const auto& s : v) acc += f(s);
    return acc / static_cast<double>(v.size());
  };
  auto list = [](const std::vector<RunSummary>& v, auto f) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : " ") + num(f(s));
    return out;
  };
  const int n = static_cast<int>(small.size());
  const int need = (2 * n + 2) / 3;  // 2 of 3

  const double best = mean(small, [](const RunSummary& s) { return s.best_accuracy; });
  const double worst_wall = std::max_element(small.begin(), small.end(), [](const auto& a, const auto& b) {
                              return a.wall_seconds_total < b.wall_seconds_total;
                            })->wall_seconds_total;
  report(1, "10x10 reproduction", std::abs(best - 0.652) <= 0.05 && worst_wall <= 7200.0,
         "mean best " + num(best) + " over " + std::to_string(n) + " seeds (per seed " +
             list(small, [](const RunSummary& s) { return s.best_accuracy; }) + "), target 0.652 +/- 0.05, slowest run " +
             num(worst_wall, 4) + " s");

  int improved = 0;
  for (const auto& s : small) improved += s.final_accuracy > s.bp_end_accuracy.value_or(1.0) ? 1 : 0;
  report(2, "STDP helps at 10x10", improved >= need,
         std::to_string(improved) + "/" + std::to_string(n) + " seeds end STDP above BP end (BP end " +
             list(small, [](const RunSummary& s) { return s.bp_end_accuracy.value_or(0.0); }) + "; after STDP " +
             list(small, [](const RunSummary& s) { return s.final_accuracy; }) + ")");

  int hurt = 0;
  for (const auto& s : large) hurt += s.final_accuracy < s.bp_best_accuracy.value_or(0.0) ? 1 : 0;
  report(3, "STDP hurts at 30x10", hurt >= need,
         std::to_string(hurt) + "/" + std::to_string(n) + " seeds end STDP below the BP best (BP best " +
             list(large, [](const RunSummary& s) { return s.bp_best_accuracy.value_or(0.0); }) + "; after STDP " +
             list(large, [](const RunSummary& s) { return s.final_accuracy; }) + ")");

  const double p_epoch = mean(small, [](const RunSummary& s) { return s.best_epoch; });
  const double s_epoch = mean(self, [](const RunSummary& s) { return s.best_epoch; });
  const double s_best = mean(self, [](const RunSummary& s) { return s.best_accuracy; });
  report(4, "comparison with self-training", p_epoch < s_epoch && best >= s_best - 0.02,
         "epochs to best: proposed " + num(p_epoch) + " vs self-training " + num(s_epoch) + "; best accuracy: proposed " +
             num(best) + " vs self-training " + num(s_best) + " (per seed " +
             list(self, [](const RunSummary& s) { return s.best_accuracy; }) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snnssl acceptance checks"};
  bool fast = false, experiments = false;
  int seeds = 3;
  int st_eval_every = 5;
  const char* env_dir = std::getenv("SNNSSL_MNIST_DIR");
  std::string data_dir = env_dir ? env_dir : "";
  std::string work = "acceptance_runs";
  std::string include_dir = SNNSSL_INCLUDE_DIR;
  app.add_flag("--fast", fast, "criteria 5-11");
  app.add_flag("--experiments", experiments, "criteria 1-4 (MNIST, long)");
  app.add_option("--seeds", seeds, "master seeds for the experiment criteria")->check(CLI::Range(1, 100));
  app.add_option("--self-training-eval-every", st_eval_every, "evaluation cadence for self-training runs")
      ->check(CLI::Range(1, 1000));
  app.add_option("--data-dir", data_dir, "MNIST directory");
  app.add_option("--work-dir", work, "where experiment runs are stored");
  CLI11_PARSE(app, argc, argv);
  if (!fast && !experiments) fast = experiments = true;

  try {
    if (experiments) experiment_criteria(data_dir, work, include_dir, seeds, st_eval_every);
    if (fast) {
      gradient_criterion();
      equivalence_criterion();
      conservation_criterion();
      stdp_criterion();
      trace_criterion();
      init_criterion();
      determinism_criterion(data_dir);
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
