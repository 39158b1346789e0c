// Command-line driver: resolves a run configuration, executes the selected
// experiment and writes metrics.csv, config.json, summary.json and timing.csv
// into the output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "snnssl/snnssl.hpp"

namespace fs = std::filesystem;
using namespace snnssl;

namespace {

constexpr const char* kDataEnv = "SNNSSL_MNIST_DIR";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string timing_csv(const RunResult& r) {
  std::string out = "epoch,wall_seconds\n";
  for (std::size_t i = 0; i < r.series.size(); ++i) {
    out += std::to_string(r.series[i].epoch) + "," + std::to_string(r.wall_seconds[i]) + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised spiking network training: BP followed by STDP, or the self-training baseline"};
  std::string config_path;
  std::string out_dir = "runs/latest";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kind;
  std::optional<int> labeled;
  std::optional<std::string> data_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration (absent keys take defaults)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--kind", kind, "proposed | bp-only | self-training")
      ->check(CLI::IsMember({"proposed", "bp-only", "self-training"}));
  app.add_option("--labeled-per-class", labeled, "labeled samples per digit for BP");
  app.add_option("--data-dir", data_dir, std::string("MNIST directory (default: $") + kDataEnv + ")");
  app.add_flag("--quiet", quiet, "suppress per-epoch progress");
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? parse_config("") : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (kind) cfg.kind = parse_kind(*kind);
    if (labeled) cfg.split.labeled_per_class = *labeled;
    if (data_dir) {
      cfg.data_dir = *data_dir;
    } else if (cfg.data_dir.empty()) {
      const char* env = std::getenv(kDataEnv);
      cfg.data_dir = env ? env : "data/mnist";
    }
    validate(cfg);

    const auto dataset = mnist::load_training_set(cfg.data_dir);
    const auto data = prepare_data(dataset, cfg.split, cfg.seed, cfg.network.max_rate);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config.json", dump_config(cfg));

    ProgressFn progress;
    if (!quiet) {
      progress = [](const EpochMetrics& m) {
        std::cerr << "epoch " << m.epoch << " [" << m.phase << "] accuracy " << m.mean_accuracy << " +/- "
                  << m.accuracy_std << "\n";
      };
    }
    const auto result = run_experiment(cfg, data, progress);

    write_text(fs::path(out_dir) / "metrics.csv", emit_metrics(result.series));
    write_text(fs::path(out_dir) / "summary.json", summary_json(result.summary).dump(2) + "\n");
    write_text(fs::path(out_dir) / "timing.csv", timing_csv(result));
    std::cout << summary_json(result.summary).dump(2) << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const mnist::IdxError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
