#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mamlcon/archive.hpp"
#include "mamlcon/checkpoint.hpp"
#include "mamlcon/config.hpp"
#include "mamlcon/errors.hpp"
#include "mamlcon/features.hpp"
#include "mamlcon/harness.hpp"
#include "mamlcon/report.hpp"
#include "mamlcon/synthetic.hpp"

using namespace mamlcon;

namespace {

/// Flags shared by the commands that build a RunConfig.
struct RunFlags {
  std::string config;
  std::string algo;
  std::string scenario;
  std::optional<std::size_t> shots;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> iterations;
  std::vector<std::uint64_t> seeds;
  std::string data;
  std::string csv;
  std::optional<std::size_t> threads;
  bool verbose = false;

  void add_to(CLI::App* app, bool with_algo = true) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    if (with_algo) app->add_option("--algo", algo, "mamlcon, oml or none");
    app->add_option("--scenario", scenario, "N<n>:CS<cs>:CA<ca>");
    app->add_option("--shots", shots, "support examples per class (K)");
    app->add_option("--episodes", episodes, "held-out episodes per seed");
    app->add_option("--iterations", iterations, "meta-training iterations");
    app->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
    app->add_option("--data", data, "evaluation feature archive (overrides the config dataset)");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_flag("-v,--verbose", verbose, "print meta-training progress");
  }

  RunConfig build() const {
    RunConfig c = config.empty() ? parse_run_config("{}") : load_run_config(config);
    if (!algo.empty()) c.algorithm = algorithm_from_string(algo);
    if (!scenario.empty()) {
      const auto old_n = c.scenario_spec().n_final;
      c.scenario = scenario;
      if (c.model.head_classes == old_n) c.model.head_classes = c.scenario_spec().n_final;
    }
    if (shots) c.k = *shots;
    if (episodes) c.episodes_per_eval = *episodes;
    if (iterations) c.meta.meta_iterations = *iterations;
    if (!seeds.empty()) c.seeds = seeds;
    if (!data.empty()) {
      // Synthetic configs default to the MLP; spectrogram-like archives need the conv net.
      if (c.dataset.kind == DatasetConfig::Kind::Synthetic) {
        const FeatureArchive a = read_archive(data);
        const bool vectors = !a.records.empty() && a.records.front().features.dim(0) == 1;
        c.model.architecture = vectors ? Architecture::Mlp : Architecture::Conv;
      }
      c.dataset.kind = DatasetConfig::Kind::Archive;
      c.dataset.test_archive = data;
    }
    if (!csv.empty()) c.csv = csv;
    if (threads) c.threads = *threads;
    c.validate();
    return c;
  }

  ExperimentOptions options() const {
    ExperimentOptions o;
    if (verbose)
      o.progress = [](std::uint64_t seed, std::size_t it, double loss) {
        if ((it + 1) % 50 == 0) std::cerr << "seed " << seed << " iteration " << it + 1 << " meta-loss " << loss << "\n";
      };
    return o;
  }
};

int cmd_train(const RunFlags& flags, const std::string& out) {
  const RunConfig cfg = flags.build();
  if (cfg.algorithm == Algorithm::None) throw ConfigError("train needs --algo mamlcon or oml");
  const DatasetPair data = load_datasets(cfg);
  MetaProgress progress;
  if (flags.verbose)
    progress = [](std::size_t it, double loss) {
      if ((it + 1) % 50 == 0) std::cerr << "iteration " << it + 1 << " meta-loss " << loss << "\n";
    };
  const Checkpoint c = train_checkpoint(cfg, data, cfg.seeds.front(), progress);
  save_checkpoint(c, out);
  std::cout << "wrote " << out << " (" << c.algorithm << ", " << c.params.numel() << " parameters)\n";
  return 0;
}

int cmd_eval(const RunFlags& flags, const std::string& ckpt) {
  RunConfig cfg = flags.build();
  ExperimentOptions options = flags.options();
  if (!ckpt.empty()) {
    options.checkpoint = load_checkpoint(ckpt);
    cfg.algorithm = algorithm_from_string(options.checkpoint->algorithm);
  } else if (cfg.algorithm != Algorithm::None) {
    throw ConfigError("eval needs --ckpt, or --algo none for the untrained baseline");
  }
  const ExperimentResult r = run_experiment(cfg, options);
  const std::vector<ResultRow> one{r.summary};
  std::cout << format_report(one);
  return 0;
}

int cmd_run(const RunFlags& flags, const std::vector<std::string>& algos) {
  RunConfig cfg = flags.build();
  const std::string csv = cfg.csv;
  cfg.csv.clear();
  std::vector<ResultRow> rows, summaries;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& a : algos.empty() ? std::vector<std::string>{to_string(cfg.algorithm)} : algos) {
    RunConfig c = cfg;
    c.algorithm = algorithm_from_string(a);
    const ExperimentResult r = run_experiment(c, flags.options());
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    summaries.push_back(r.summary);
  }
  if (!csv.empty()) {
    write_csv(rows, csv);
    cfg.csv = csv;
    write_sidecar(cfg, csv, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::cout << format_report(summaries);
  return 0;
}

int cmd_sweep(const RunFlags& flags, const std::vector<std::size_t>& ks) {
  const RunConfig cfg = flags.build();
  const auto rows = sweep_k(cfg, ks, flags.options());
  std::cout << "K  accuracy\n";
  for (const auto& r : rows) std::cout << r.k << "  " << format_cell_value(r.accuracy) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot continual meta-learning toolkit"};
  app.require_subcommand(1);

  RunFlags train_flags, eval_flags, run_flags, sweep_flags;
  std::string train_out, eval_ckpt;
  std::vector<std::string> run_algos;
  std::vector<std::size_t> ks{1, 5, 20, 50, 100};

  auto* train = app.add_subcommand("train", "meta-train and save a checkpoint");
  train_flags.add_to(train);
  train->add_option("--out", train_out, "checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "deploy a checkpoint (or the untrained baseline) on held-out episodes");
  eval_flags.add_to(eval);
  eval->add_option("--ckpt", eval_ckpt, "checkpoint from train")->check(CLI::ExistingFile);
  eval->add_option("--csv", eval_flags.csv, "per-seed result CSV");

  auto* run = app.add_subcommand("run", "meta-train and evaluate one or more algorithms per seed");
  run_flags.add_to(run, false);
  run->add_option("--algos", run_algos, "comma-separated algorithms")->delimiter(',');
  run->add_option("--csv", run_flags.csv, "per-seed result CSV");

  auto* sweep = app.add_subcommand("sweep-k", "one summary row per shot count K");
  sweep_flags.add_to(sweep);
  sweep->add_option("--ks", ks, "comma-separated K values")->delimiter(',');
  sweep->add_option("--csv", sweep_flags.csv, "summary CSV");

  SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a Gaussian-cluster feature archive");
  synth->add_option("--classes", synth_spec.n_classes)->capture_default_str();
  synth->add_option("--dim", synth_spec.dim)->capture_default_str();
  synth->add_option("--per-class", synth_spec.examples_per_class)->capture_default_str();
  synth->add_option("--sep", synth_spec.cluster_separation)->capture_default_str();
  synth->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth->add_option("--out", synth_out)->required();

  MfccConfig mfcc_cfg;
  std::string wav_dir, stems_path, features_out;
  auto* features = app.add_subcommand("features", "extract MFCC archives from word recordings");
  features->add_option("--wav-dir", wav_dir)->required()->check(CLI::ExistingDirectory);
  features->add_option("--stems", stems_path, "word<TAB>stem map")->check(CLI::ExistingFile);
  features->add_option("--frames", mfcc_cfg.target_frames, "padded frame count")->capture_default_str();
  features->add_option("--out", features_out)->required();

  std::string split_in, split_train, split_test;
  double split_fraction = 0.3;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "stem-disjoint train/test split of an archive");
  split->add_option("--archive", split_in)->required()->check(CLI::ExistingFile);
  split->add_option("--test-fraction", split_fraction)->capture_default_str();
  split->add_option("--seed", split_seed)->capture_default_str();
  split->add_option("--train-out", split_train)->required();
  split->add_option("--test-out", split_test)->required();

  std::string report_csv;
  auto* report = app.add_subcommand("report", "format a result CSV as a retention table");
  report->add_option("--csv", report_csv)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, train_out);
    if (eval->parsed()) return cmd_eval(eval_flags, eval_ckpt);
    if (run->parsed()) return cmd_run(run_flags, run_algos);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, ks);
    if (synth->parsed()) {
      write_archive(synth_generate(synth_spec), synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }
    if (features->parsed()) {
      const auto stems = stems_path.empty() ? std::map<std::string, std::string>{} : read_stem_map(stems_path);
      const auto a = build_feature_archive(wav_dir, stems, mfcc_cfg);
      write_archive(a, features_out);
      std::cout << "wrote " << features_out << " (" << a.records.size() << " records, " << a.classes.size()
                << " classes)\n";
      return 0;
    }
    if (split->parsed()) {
      const auto s = split_by_stem(read_archive(split_in), split_fraction, split_seed);
      write_archive(s.train, split_train);
      write_archive(s.test, split_test);
      std::cout << "train " << s.train.classes.size() << " classes, test " << s.test.classes.size() << " classes\n";
      return 0;
    }
    if (report->parsed()) {
      std::cout << format_report(read_csv(report_csv));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
