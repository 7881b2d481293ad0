#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <random>
#include <sstream>

#include "mamlcon/config.hpp"
#include "mamlcon/harness.hpp"
#include "mamlcon/report.hpp"
#include "test_util.hpp"

using namespace mamlcon;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / ("mamlcon_harness_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A fake continual run: the trajectory holds one (unused) snapshot per group
/// with the cumulative mask, so only the classifier decides accuracy.
struct FakeRun {
  Episode episode;
  Trajectory trajectory;
  DeployedModel final_model;
};

FakeRun fake_run(const ScenarioSpec& spec, std::uint64_t seed) {
  const auto data = mamlcon::testing::tagged_data(spec.n_final + 5, spec.k + 5);
  std::mt19937_64 rng(seed);
  FakeRun f;
  f.episode = sample_episode(data, spec, spec.n_final, rng);
  ClassMask mask(spec.n_final);
  for (const auto& group : f.episode.groups) {
    for (const auto& cs : group) mask.set(static_cast<std::size_t>(f.episode.head_index(cs.class_id)));
    f.trajectory.snapshots.push_back(ParameterSet{});
    f.trajectory.masks.push_back(mask);
  }
  f.final_model.mask = mask;
  return f;
}

/// Reads the class id off tagged inputs and maps it through the episode.
Classifier oracle_classifier(const Episode& ep) {
  return [&ep](const ParameterSet&, const ClassMask&, const LabeledBatch& b) {
    std::vector<int> out;
    const std::size_t stride = b.inputs.size() / b.size();
    for (std::size_t i = 0; i < b.size(); ++i) out.push_back(ep.head_index(static_cast<int>(b.inputs[i * stride])));
    return out;
  };
}

RunConfig tiny_config(Algorithm algo) {
  RunConfig c;
  c.algorithm = algo;
  c.scenario = "N4:CS2:CA1";
  c.k = 2;
  c.dataset.synthetic.n_classes = 10;
  c.dataset.synthetic.examples_per_class = 8;
  c.dataset.synthetic.dim = 4;
  c.dataset.train_classes = 5;
  c.model.hidden = {6};
  c.model.head_classes = 4;
  c.inner.t_initial = 3;
  c.inner.t_step = 2;
  c.inner.inner_lr = 0.01;
  c.meta.meta_iterations = 3;
  c.meta.tasks_per_meta_batch = 2;
  c.meta.outer_lr = 0.01;
  c.episodes_per_eval = 3;
  c.test_per_class = 2;
  c.seeds = {1, 2};
  c.threads = 2;
  c.validate();
  return c;
}

ResultRow table_row(std::string algo, std::vector<double> s, std::vector<double> e, double acc) {
  ResultRow r;
  r.algorithm = std::move(algo);
  r.dataset = "gsc";
  r.scenario = "N50:CS5:CA5";
  r.k = 5;
  r.seed = 0;
  r.episodes = 100;
  r.accuracy = acc;
  r.group_start = std::move(s);
  r.group_end = std::move(e);
  for (std::size_t i = 0; i < r.group_start.size(); ++i) r.group_delta.push_back(r.group_end[i] - r.group_start[i]);
  return r;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Retention, OracleClassifierIsPerfect) {
  const auto spec = parse_scenario("N6:CS2:CA2", 3);
  const auto f = fake_run(spec, 5);
  const auto report = evaluate_retention(f.trajectory, f.final_model, f.episode, oracle_classifier(f.episode));
  ASSERT_EQ(report.groups.size(), 3u);
  for (const auto& g : report.groups) {
    EXPECT_DOUBLE_EQ(g.start, 100.0);
    EXPECT_DOUBLE_EQ(g.end, 100.0);
    EXPECT_DOUBLE_EQ(g.delta, 0.0);
  }
  EXPECT_TRUE(report.groups.back().last);
  EXPECT_EQ(report.groups[1].first_label, 3u);
  EXPECT_EQ(report.groups[1].last_label, 4u);
  EXPECT_DOUBLE_EQ(report.overall, 100.0);
}

TEST(Retention, UniformRandomClassifierNearChance) {
  const auto spec = parse_scenario("N50:CS5:CA5", 1);
  double correct = 0.0, items = 0.0;
  std::mt19937_64 pick(77);
  for (std::uint64_t ep = 0; ep < 4; ++ep) {
    const auto f = fake_run(spec, ep);
    const Classifier random = [&](const ParameterSet&, const ClassMask&, const LabeledBatch& b) {
      std::uniform_int_distribution<int> u(0, 49);
      std::vector<int> out;
      for (std::size_t i = 0; i < b.size(); ++i) out.push_back(u(pick));
      return out;
    };
    const auto r = evaluate_retention(f.trajectory, f.final_model, f.episode, random);
    std::size_t n = 0;
    for (const auto& g : r.groups) n += g.test_items;
    correct += r.overall / 100.0 * static_cast<double>(n);
    items += static_cast<double>(n);
  }
  ASSERT_EQ(items, 1000.0);  // 4 episodes x 50 classes x 5 test items
  const double p = 1.0 / 50.0, sigma = std::sqrt(p * (1 - p) / items);
  EXPECT_NEAR(correct / items, p, 3 * sigma);
}

TEST(Retention, OverallIsWeightedMeanOfEnd) {
  const auto spec = parse_scenario("N7:CS3:CA2", 2);
  const auto f = fake_run(spec, 3);
  // Wrong on every odd head index.
  const Classifier half = [&](const ParameterSet&, const ClassMask&, const LabeledBatch& b) {
    std::vector<int> out;
    for (int l : b.labels) out.push_back(l % 2 ? (l + 1) % 7 : l);
    return out;
  };
  const auto r = evaluate_retention(f.trajectory, f.final_model, f.episode, half);
  double weighted = 0.0, n = 0.0;
  for (const auto& g : r.groups) {
    weighted += g.end * static_cast<double>(g.test_items);
    n += static_cast<double>(g.test_items);
  }
  EXPECT_NEAR(r.overall, weighted / n, 1e-12);
}

TEST(Retention, RejectsSnapshotMismatch) {
  auto f = fake_run(parse_scenario("N6:CS2:CA2", 3), 1);
  f.trajectory.snapshots.pop_back();
  EXPECT_THROW(evaluate_retention(f.trajectory, f.final_model, f.episode, oracle_classifier(f.episode)),
               std::invalid_argument);
}

TEST(Csv, RoundTripIsByteIdentical) {
  std::vector<ResultRow> rows{table_row("mamlcon", {95, 100}, {95, 90.25}, 77.123456),
                              table_row("oml,quoted \"name\"", {1.5}, {0.25}, 3)};
  rows[1].seed.reset();
  const std::string text = format_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
  const auto parsed = parse_csv(text);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_FALSE(parsed[1].seed.has_value());
  EXPECT_EQ(parsed[1].algorithm, rows[1].algorithm);
  EXPECT_EQ(format_csv(parsed), text);
  EXPECT_THROW(parse_csv("nonsense\n"), DataError);
}

TEST(Csv, SummaryIsSeedMean) {
  std::vector<ResultRow> rows{table_row("m", {90, 80}, {70, 60}, 50), table_row("m", {100, 60}, {90, 60}, 70)};
  rows[1].seed = 1;
  const auto s = summarize(rows);
  EXPECT_FALSE(s.seed.has_value());
  EXPECT_DOUBLE_EQ(s.accuracy, 60.0);
  EXPECT_DOUBLE_EQ(s.group_start[0], 95.0);
  EXPECT_DOUBLE_EQ(s.group_delta[0], -15.0);
}

TEST(Report, TenGroupRetentionColumn) {
  const std::vector<double> s{95, 100, 90, 95, 95, 95, 95, 80, 85, 95};
  const std::vector<double> e{95, 95, 85, 70, 80, 70, 50, 70, 60, 95};
  const std::vector<ResultRow> rows{table_row("mamlcon", s, e, 77.0)};
  const auto out = lines(format_report(rows));
  ASSERT_EQ(out.size(), 12u);  // header, ten groups, footer
  EXPECT_EQ(tokens(out[0]), (std::vector<std::string>{"Labels", "mamlcon", "S/E", "Delta"}));
  EXPECT_EQ(tokens(out[1]), (std::vector<std::string>{"1-5", "95/95", "0"}));
  EXPECT_EQ(tokens(out[2]), (std::vector<std::string>{"6-10", "100/95", "-5"}));
  EXPECT_EQ(tokens(out[7]), (std::vector<std::string>{"31-35", "95/50", "-45"}));
  EXPECT_EQ(tokens(out[10]), (std::vector<std::string>{"46-50", "-/95", "-"}));
  EXPECT_EQ(tokens(out[11]), (std::vector<std::string>{"Accuracy", "77.0"}));
  // Every printed delta equals E - S of the printed cell.
  for (std::size_t g = 1; g + 2 < out.size(); ++g) {
    const auto t = tokens(out[g]);
    const auto slash = t[1].find('/');
    EXPECT_DOUBLE_EQ(std::stod(t[2]), std::stod(t[1].substr(slash + 1)) - std::stod(t[1].substr(0, slash))) << out[g];
  }
}

TEST(Report, ThreeAlgorithmsSideBySide) {
  const std::vector<double> v(10, 50.0);
  const std::vector<ResultRow> rows{table_row("mamlcon", v, v, 77.0), table_row("oml", v, v, 64.5),
                                    table_row("none", v, v, 33.0)};
  const auto out = lines(format_report(rows));
  EXPECT_EQ(tokens(out.back()), (std::vector<std::string>{"Accuracy", "77.0", "64.5", "33.0"}));
  EXPECT_EQ(tokens(out[0]).size(), 1u + 3u * 3u);
}

TEST(Report, SingleGroupScenario) {
  ResultRow r = table_row("mamlcon", {80}, {80}, 80);
  r.scenario = "N5:CS5:CA5";
  const std::vector<ResultRow> rows{r};
  const auto out = lines(format_report(rows));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(tokens(out[1]), (std::vector<std::string>{"1-5", "-/80", "-"}));
  EXPECT_EQ(format_cell_value(77.25), "77.3");
  EXPECT_EQ(format_cell_value(-0.01), "0");
}

TEST(Config, ParsesAndDefaults) {
  const auto c = parse_run_config(R"({"algorithm":"oml","scenario":"N10:CS2:CA2","k":3,
      "dataset":{"classes":40,"train_classes":25},"meta":{"optimizer":"sgd","iterations":7},
      "eval":{"episodes":4,"test_per_class":3},"seeds":[4,5]})");
  EXPECT_EQ(c.algorithm, Algorithm::Oml);
  EXPECT_EQ(c.model.head_classes, 10u);
  EXPECT_EQ(c.model.architecture, Architecture::Mlp);
  EXPECT_EQ(c.meta.outer_optimizer, OuterOptimizer::Sgd);
  EXPECT_EQ(c.meta.meta_iterations, 7u);
  EXPECT_EQ(c.test_per_class, 3u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(parse_run_config(dump_run_config(c)).scenario, c.scenario);
  EXPECT_EQ(config_hash(parse_run_config(dump_run_config(c))), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_run_config(R"({"algoritm":"oml"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"inner":{"lr":0.1,"typo":1}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"algorithm":"reptile"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"scenario":"N6:CS0:CA2"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"dataset":{"classes":10,"train_classes":10}})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}

TEST(Experiment, NoPretrainingIsReproducible) {
  auto cfg = tiny_config(Algorithm::None);
  const auto dir = temp_dir();
  cfg.csv = (dir / "none_a.csv").string();
  const auto a = run_experiment(cfg);
  cfg.csv = (dir / "none_b.csv").string();
  cfg.threads = 1;
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(slurp(dir / "none_a.csv"), slurp(dir / "none_b.csv"));
  EXPECT_TRUE(fs::exists(dir / "none_a.csv.meta.json"));
  EXPECT_EQ(a.rows[0].group_start.size(), 3u);  // N4:CS2:CA1
  for (const auto& r : a.rows) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 100.0);
  }
}

TEST(Experiment, MetaLearnersRunAndReuseCheckpoint) {
  for (auto algo : {Algorithm::Mamlcon, Algorithm::Oml}) {
    auto cfg = tiny_config(algo);
    cfg.seeds = {3};
    const auto data = load_datasets(cfg);
    const auto ckpt = train_checkpoint(cfg, data, 3);
    ExperimentOptions opt;
    opt.checkpoint = ckpt;
    EXPECT_EQ(run_experiment(cfg).rows, run_experiment(cfg, opt).rows) << to_string(algo);
  }
}

TEST(Experiment, SweepKGivesOneRowPerK) {
  auto cfg = tiny_config(Algorithm::None);
  const std::vector<std::size_t> ks{1, 2, 3};
  const auto rows = sweep_k(cfg, ks);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    EXPECT_EQ(rows[i].k, ks[i]);
    EXPECT_FALSE(rows[i].seed.has_value());
  }
}

TEST(Experiment, FailsFastOnSmallDataset) {
  auto cfg = tiny_config(Algorithm::None);
  cfg.k = 7;  // 7 support + 2 test > 8 examples per class
  try {
    run_experiment(cfg);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("needs 4"), std::string::npos) << e.what();
  }
}
