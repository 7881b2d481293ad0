#include "mamlcon/harness.hpp"

#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mamlcon/archive.hpp"
#include "mamlcon/errors.hpp"

namespace mamlcon {

Classifier model_classifier(const ModelConfig& model) {
  return [model](const ParameterSet& params, const ClassMask& mask, const LabeledBatch& batch) {
    return argmax_masked(predict(params, batch.inputs, mask, model).logits, mask);
  };
}

namespace {

std::size_t count_correct(const Classifier& classify, const ParameterSet& params, const ClassMask& mask,
                          const LabeledBatch& batch) {
  const auto predicted = classify(params, mask, batch);
  if (predicted.size() != batch.size())
    throw std::logic_error("classifier returned " + std::to_string(predicted.size()) + " predictions for " +
                           std::to_string(batch.size()) + " examples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
  return correct;
}

}  // namespace

RetentionReport evaluate_retention(const Trajectory& trajectory, const DeployedModel& final_model,
                                   const Episode& episode, const Classifier& classify) {
  const std::size_t n = episode.groups.size();
  if (trajectory.snapshots.size() != n || trajectory.masks.size() != n)
    throw std::invalid_argument("trajectory has " + std::to_string(trajectory.snapshots.size()) +
                                " snapshots but the episode has " + std::to_string(n) + " groups");
  RetentionReport report;
  std::size_t label = 0, correct_total = 0, items_total = 0;
  for (std::size_t g = 0; g < n; ++g) {
    const LabeledBatch batch = test_batch(episode, g);
    if (batch.size() == 0) throw std::invalid_argument("group " + std::to_string(g) + " has no test examples");
    const double items = static_cast<double>(batch.size());
    const std::size_t end_correct = count_correct(classify, final_model.params, final_model.mask, batch);
    GroupRetention r;
    r.first_label = label + 1;
    label += episode.groups[g].size();
    r.last_label = label;
    r.test_items = batch.size();
    r.start = 100.0 * static_cast<double>(count_correct(classify, trajectory.snapshots[g], trajectory.masks[g], batch)) / items;
    r.end = 100.0 * static_cast<double>(end_correct) / items;
    r.delta = r.end - r.start;
    r.last = g + 1 == n;
    report.groups.push_back(r);
    correct_total += end_correct;
    items_total += batch.size();
  }
  report.overall = 100.0 * static_cast<double>(correct_total) / static_cast<double>(items_total);
  return report;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string join_fixed(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ";" : "") + fixed6(values[i]);
  return out;
}

bool needs_quotes(const std::string& s) { return s.find_first_of(",\"\n\r") != std::string::npos; }

std::string csv_field(const std::string& s) {
  if (!needs_quotes(s)) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("CSV line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("CSV line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
}

std::uint64_t parse_u64(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size() && !s.empty() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw DataError("CSV line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
}

std::vector<double> parse_list(const std::string& s, std::size_t n, std::size_t line_no, const char* what) {
  std::vector<double> out;
  if (!s.empty()) {
    std::size_t start = 0;
    while (true) {
      const auto semi = s.find(';', start);
      out.push_back(parse_double(s.substr(start, semi - start), line_no, what));
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
  }
  if (out.size() != n)
    throw DataError("CSV line " + std::to_string(line_no) + ": " + what + " has " + std::to_string(out.size()) +
                    " values, n_groups is " + std::to_string(n));
  return out;
}

}  // namespace

std::string format_csv(std::span<const ResultRow> rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    if (r.group_start.size() != r.group_end.size() || r.group_start.size() != r.group_delta.size())
      throw std::invalid_argument("result row has mismatched group lists");
    out += csv_field(r.algorithm) + "," + csv_field(r.dataset) + "," + csv_field(r.scenario) + "," +
           std::to_string(r.k) + "," + (r.seed ? std::to_string(*r.seed) : std::string("all")) + "," +
           std::to_string(r.episodes) + "," + fixed6(r.accuracy) + "," + std::to_string(r.group_start.size()) + "," +
           join_fixed(r.group_start) + "," + join_fixed(r.group_end) + "," + join_fixed(r.group_delta) + "\n";
  }
  return out;
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::vector<ResultRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != kCsvHeader) throw DataError("CSV header does not match the expected columns");
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 11)
      throw DataError("CSV line " + std::to_string(line_no) + ": expected 11 fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.algorithm = f[0];
    r.dataset = f[1];
    r.scenario = f[2];
    r.k = parse_u64(f[3], line_no, "k");
    if (f[4] != "all") r.seed = parse_u64(f[4], line_no, "seed");
    r.episodes = parse_u64(f[5], line_no, "episodes");
    r.accuracy = parse_double(f[6], line_no, "accuracy");
    const std::size_t n = parse_u64(f[7], line_no, "n_groups");
    r.group_start = parse_list(f[8], n, line_no, "group_start");
    r.group_end = parse_list(f[9], n, line_no, "group_end");
    r.group_delta = parse_list(f[10], n, line_no, "group_delta");
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_csv(std::span<const ResultRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(rows);
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<ResultRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

ResultRow summarize(std::span<const ResultRow> rows) {
  if (rows.empty()) throw std::invalid_argument("nothing to summarize");
  ResultRow s;
  s.algorithm = rows[0].algorithm;
  s.dataset = rows[0].dataset;
  s.scenario = rows[0].scenario;
  s.k = rows[0].k;
  const std::size_t n = rows[0].group_start.size();
  s.group_start.assign(n, 0.0);
  s.group_end.assign(n, 0.0);
  const double w = 1.0 / static_cast<double>(rows.size());
  for (const auto& r : rows) {
    if (r.algorithm != s.algorithm || r.scenario != s.scenario || r.k != s.k || r.group_start.size() != n)
      throw std::invalid_argument("rows to summarize differ in configuration");
    s.episodes += r.episodes;
    s.accuracy += w * r.accuracy;
    for (std::size_t g = 0; g < n; ++g) {
      s.group_start[g] += w * r.group_start[g];
      s.group_end[g] += w * r.group_end[g];
    }
  }
  for (std::size_t g = 0; g < n; ++g) s.group_delta.push_back(s.group_end[g] - s.group_start[g]);
  return s;
}

DatasetPair load_datasets(const RunConfig& cfg) {
  DatasetPair out;
  if (cfg.dataset.kind == DatasetConfig::Kind::Synthetic) {
    const FeatureArchive all = synth_generate(cfg.dataset.synthetic);
    std::vector<int> train_ids, test_ids;
    for (const auto& [id, name] : all.classes)
      (static_cast<std::size_t>(id) < cfg.dataset.train_classes ? train_ids : test_ids).push_back(id);
    out.train = to_dataset(select_classes(all, train_ids));
    out.test = to_dataset(select_classes(all, test_ids));
    return out;
  }
  if (!cfg.dataset.train_archive.empty()) out.train = to_dataset(read_archive(cfg.dataset.train_archive));
  out.test = to_dataset(read_archive(cfg.dataset.test_archive));
  if (!cfg.dataset.train_archive.empty() &&
      (out.train.frames != out.test.frames || out.train.coeffs != out.test.coeffs))
    throw DataError("train and test archives have different feature shapes");
  return out;
}

void require_episode_capacity(const LabeledDataset& data, const ScenarioSpec& spec, std::size_t test_per_class,
                              const std::string& what) {
  const std::size_t need = spec.k + test_per_class;
  std::size_t eligible = 0;
  for (const auto& [id, examples] : data.classes) eligible += examples.size() >= need;
  if (eligible < spec.n_final)
    throw DataError(what + " has " + std::to_string(eligible) + " classes with at least " + std::to_string(need) +
                    " examples (K=" + std::to_string(spec.k) + " + " + std::to_string(test_per_class) +
                    " test); scenario " + spec.notation() + " needs " + std::to_string(spec.n_final));
}

ModelConfig resolve_model(const RunConfig& cfg, const LabeledDataset& data) {
  ModelConfig m = cfg.model;
  m.input_shape = {1, data.frames, data.coeffs};
  m.validate();
  return m;
}

Checkpoint train_checkpoint(const RunConfig& cfg, const DatasetPair& data, std::uint64_t seed,
                            const MetaProgress& progress) {
  if (cfg.algorithm == Algorithm::None) throw ConfigError("algorithm none has nothing to meta-train");
  const ScenarioSpec spec = cfg.scenario_spec();
  require_episode_capacity(data.train, spec, cfg.test_per_class, "meta-training data");
  MetaTrainConfig meta = cfg.meta;
  meta.scenario = spec;
  meta.seed = seed;
  meta.test_per_class = cfg.test_per_class;
  Checkpoint c;
  c.model = resolve_model(cfg, data.train);
  c.algorithm = to_string(cfg.algorithm);
  c.params = cfg.algorithm == Algorithm::Mamlcon ? mamlcon_meta_train(data.train, meta, cfg.inner, c.model, progress)
                                                 : oml_meta_train(data.train, meta, cfg.inner, c.model, progress);
  c.extra = {{"seed", std::to_string(seed)},
             {"scenario", spec.notation()},
             {"k", std::to_string(spec.k)},
             {"config_hash", config_hash(cfg)}};
  return c;
}

namespace {

std::mt19937_64 eval_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6576616cu};
  return std::mt19937_64(seq);
}

ResultRow evaluate_seed(const RunConfig& cfg, const DatasetPair& data, std::uint64_t seed,
                        const ExperimentOptions& options) {
  const ScenarioSpec spec = cfg.scenario_spec();
  Algorithm algorithm = cfg.algorithm;
  ParameterSet theta;
  ModelConfig model = resolve_model(cfg, data.test);
  if (options.checkpoint) {
    algorithm = algorithm_from_string(options.checkpoint->algorithm);
    model = options.checkpoint->model;
    theta = options.checkpoint->params;
  } else if (algorithm != Algorithm::None) {
    MetaProgress progress;
    if (options.progress) progress = [&](std::size_t it, double loss) { options.progress(seed, it, loss); };
    Checkpoint c = train_checkpoint(cfg, data, seed, progress);
    model = c.model;
    theta = std::move(c.params);
  }
  if (model.input_shape[1] != data.test.frames || model.input_shape[2] != data.test.coeffs)
    throw ConfigError("model input shape does not match the evaluation data");

  const Classifier classify = model_classifier(model);
  std::mt19937_64 rng = eval_rng(seed);
  ResultRow row;
  row.algorithm = to_string(algorithm);
  row.dataset = cfg.dataset.label();
  row.scenario = spec.notation();
  row.k = spec.k;
  row.seed = seed;
  row.episodes = cfg.episodes_per_eval;
  const double w = 1.0 / static_cast<double>(cfg.episodes_per_eval);
  for (std::size_t e = 0; e < cfg.episodes_per_eval; ++e) {
    const Episode ep = sample_episode(data.test, spec, model.head_classes, rng, cfg.test_per_class);
    const std::uint64_t deploy_seed = rng();
    ContinualRun run;
    switch (algorithm) {
      case Algorithm::Mamlcon: run = continual_deploy(theta, ep, cfg.inner, model, deploy_seed); break;
      case Algorithm::Oml:
        run = continual_deploy(theta, ep, cfg.inner, model, deploy_seed, ContinualProcedure::oml());
        break;
      case Algorithm::None:
        run = finetune_baseline(model, ep, cfg.inner, deploy_seed, cfg.baseline_templates);
        break;
    }
    const RetentionReport rep = evaluate_retention(run.trajectory, run.model, ep, classify);
    if (row.group_start.empty()) {
      row.group_start.assign(rep.groups.size(), 0.0);
      row.group_end.assign(rep.groups.size(), 0.0);
    }
    row.accuracy += w * rep.overall;
    for (std::size_t g = 0; g < rep.groups.size(); ++g) {
      row.group_start[g] += w * rep.groups[g].start;
      row.group_end[g] += w * rep.groups[g].end;
    }
  }
  for (std::size_t g = 0; g < row.group_start.size(); ++g)
    row.group_delta.push_back(row.group_end[g] - row.group_start[g]);
  return row;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioSpec spec = cfg.scenario_spec();
  const DatasetPair data = load_datasets(cfg);
  require_episode_capacity(data.test, spec, cfg.test_per_class, "evaluation data");
  const bool trains = cfg.algorithm != Algorithm::None && !options.checkpoint;
  if (trains) require_episode_capacity(data.train, spec, cfg.test_per_class, "meta-training data");
  if (options.checkpoint && options.checkpoint->model.head_classes < spec.n_final)
    throw ConfigError("checkpoint head has " + std::to_string(options.checkpoint->model.head_classes) +
                      " classes, scenario needs " + std::to_string(spec.n_final));

  const std::size_t n = cfg.seeds.size();
  std::vector<ResultRow> rows(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        rows[i] = evaluate_seed(cfg, data, cfg.seeds[i], options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentResult result{rows, summarize(rows)};
  if (!cfg.csv.empty()) {
    write_csv(result.rows, cfg.csv);
    write_sidecar(cfg, cfg.csv,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return result;
}

std::vector<ResultRow> sweep_k(const RunConfig& cfg, std::span<const std::size_t> ks,
                               const ExperimentOptions& options) {
  if (ks.empty()) throw ConfigError("K sweep needs at least one K");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ResultRow> out;
  for (std::size_t k : ks) {
    RunConfig c = cfg;
    c.k = k;
    c.csv.clear();
    out.push_back(run_experiment(c, options).summary);
  }
  if (!cfg.csv.empty()) {
    write_csv(out, cfg.csv);
    write_sidecar(cfg, cfg.csv, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return out;
}

void write_sidecar(const RunConfig& cfg, const std::filesystem::path& csv, double wall_seconds) {
  nlohmann::json j{{"config", nlohmann::json::parse(dump_run_config(cfg))},
                   {"config_hash", config_hash(cfg)},
                   {"seeds", cfg.seeds},
                   {"wall_time_seconds", wall_seconds}};
  std::filesystem::path side = csv;
  side += ".meta.json";
  std::ofstream out(side, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + side.string());
  out << j.dump(2) << "\n";
}

}  // namespace mamlcon
