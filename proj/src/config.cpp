#include "mamlcon/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mamlcon/errors.hpp"

namespace mamlcon {

using nlohmann::json;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Mamlcon: return "mamlcon";
    case Algorithm::Oml: return "oml";
    case Algorithm::None: return "none";
  }
  return "?";
}

Algorithm algorithm_from_string(std::string_view text) {
  if (text == "mamlcon") return Algorithm::Mamlcon;
  if (text == "oml") return Algorithm::Oml;
  if (text == "none") return Algorithm::None;
  throw ConfigError("unknown algorithm '" + std::string(text) + "' (expected mamlcon, oml or none)");
}

std::string DatasetConfig::label() const {
  if (kind == Kind::Archive) return std::filesystem::path(test_archive).filename().string();
  std::ostringstream os;
  os << "synthetic(c" << synthetic.n_classes << ",d" << synthetic.dim << ",e" << synthetic.examples_per_class << ",s"
     << synthetic.cluster_separation << ",seed" << synthetic.seed << ")";
  return os.str();
}

ScenarioSpec RunConfig::scenario_spec() const { return parse_scenario(scenario, k); }

void RunConfig::validate() const {
  const ScenarioSpec spec = scenario_spec();
  spec.validate();
  inner.validate();
  if (algorithm != Algorithm::None) {
    MetaTrainConfig m = meta;
    m.scenario = spec;
    m.validate();
  }
  if (model.head_classes < spec.n_final)
    throw ConfigError("model.head_classes (" + std::to_string(model.head_classes) + ") is smaller than the scenario's N (" +
                      std::to_string(spec.n_final) + ")");
  if (episodes_per_eval == 0) throw ConfigError("eval.episodes must be positive");
  if (test_per_class == 0) throw ConfigError("eval.test_per_class must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (dataset.kind == DatasetConfig::Kind::Synthetic) {
    dataset.synthetic.validate();
    if (dataset.train_classes >= dataset.synthetic.n_classes)
      throw ConfigError("dataset.train_classes must leave at least one held-out class");
  } else if (dataset.test_archive.empty()) {
    throw ConfigError("dataset.test_archive is required for archive datasets");
  } else if (algorithm != Algorithm::None && dataset.train_archive.empty()) {
    throw ConfigError("dataset.train_archive is required to meta-train");
  }
}

namespace {

json to_json_value(const RunConfig& c) {
  const auto& s = c.dataset.synthetic;
  return json{
      {"algorithm", to_string(c.algorithm)},
      {"scenario", c.scenario},
      {"k", c.k},
      {"dataset",
       {{"kind", c.dataset.kind == DatasetConfig::Kind::Synthetic ? "synthetic" : "archive"},
        {"classes", s.n_classes},
        {"dim", s.dim},
        {"per_class", s.examples_per_class},
        {"separation", s.cluster_separation},
        {"seed", s.seed},
        {"train_classes", c.dataset.train_classes},
        {"train_archive", c.dataset.train_archive},
        {"test_archive", c.dataset.test_archive}}},
      {"model",
       {{"architecture", to_string(c.model.architecture)},
        {"conv_channels", c.model.conv_channels},
        {"kernel", c.model.kernel},
        {"stride", c.model.stride},
        {"hidden", c.model.hidden},
        {"head_classes", c.model.head_classes}}},
      {"inner",
       {{"t_initial", c.inner.t_initial},
        {"t_step", c.inner.t_step},
        {"lr", c.inner.inner_lr},
        {"template_steps", c.inner.template_steps}}},
      {"meta",
       {{"outer_lr", c.meta.outer_lr},
        {"iterations", c.meta.meta_iterations},
        {"tasks_per_batch", c.meta.tasks_per_meta_batch},
        {"optimizer", c.meta.outer_optimizer == OuterOptimizer::Adam ? "adam" : "sgd"}}},
      {"eval",
       {{"episodes", c.episodes_per_eval},
        {"test_per_class", c.test_per_class},
        {"baseline_templates", c.baseline_templates}}},
      {"seeds", c.seeds},
      {"csv", c.csv},
      {"threads", c.threads},
  };
}

void reject_unknown(const json& given, const json& known, const std::string& where) {
  if (!given.is_object()) throw ConfigError("config " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (known[it.key()].is_object()) reject_unknown(it.value(), known[it.key()], path);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  reject_unknown(j, to_json_value(c), "");

  std::string text;
  if (j.contains("algorithm")) {
    read(j, "algorithm", text, "");
    c.algorithm = algorithm_from_string(text);
  }
  read(j, "scenario", c.scenario, "");
  read(j, "k", c.k, "");
  read(j, "seeds", c.seeds, "");
  read(j, "csv", c.csv, "");
  read(j, "threads", c.threads, "");

  const json empty = json::object();
  const json& d = j.contains("dataset") ? j["dataset"] : empty;
  if (d.contains("kind")) {
    read(d, "kind", text, "dataset.");
    if (text == "synthetic") c.dataset.kind = DatasetConfig::Kind::Synthetic;
    else if (text == "archive") c.dataset.kind = DatasetConfig::Kind::Archive;
    else throw ConfigError("dataset.kind must be synthetic or archive, got '" + text + "'");
  }
  read(d, "classes", c.dataset.synthetic.n_classes, "dataset.");
  read(d, "dim", c.dataset.synthetic.dim, "dataset.");
  read(d, "per_class", c.dataset.synthetic.examples_per_class, "dataset.");
  read(d, "separation", c.dataset.synthetic.cluster_separation, "dataset.");
  read(d, "seed", c.dataset.synthetic.seed, "dataset.");
  read(d, "train_classes", c.dataset.train_classes, "dataset.");
  read(d, "train_archive", c.dataset.train_archive, "dataset.");
  read(d, "test_archive", c.dataset.test_archive, "dataset.");

  const json& m = j.contains("model") ? j["model"] : empty;
  c.model.architecture =
      c.dataset.kind == DatasetConfig::Kind::Synthetic ? Architecture::Mlp : Architecture::Conv;
  if (m.contains("architecture")) {
    read(m, "architecture", text, "model.");
    try {
      c.model.architecture = architecture_from_string(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.architecture: ") + e.what());
    }
  }
  read(m, "conv_channels", c.model.conv_channels, "model.");
  read(m, "kernel", c.model.kernel, "model.");
  read(m, "stride", c.model.stride, "model.");
  read(m, "hidden", c.model.hidden, "model.");
  c.model.head_classes = 0;
  read(m, "head_classes", c.model.head_classes, "model.");
  if (c.model.head_classes == 0) c.model.head_classes = c.scenario_spec().n_final;

  const json& in = j.contains("inner") ? j["inner"] : empty;
  read(in, "t_initial", c.inner.t_initial, "inner.");
  read(in, "t_step", c.inner.t_step, "inner.");
  read(in, "lr", c.inner.inner_lr, "inner.");
  read(in, "template_steps", c.inner.template_steps, "inner.");

  const json& mt = j.contains("meta") ? j["meta"] : empty;
  read(mt, "outer_lr", c.meta.outer_lr, "meta.");
  read(mt, "iterations", c.meta.meta_iterations, "meta.");
  read(mt, "tasks_per_batch", c.meta.tasks_per_meta_batch, "meta.");
  if (mt.contains("optimizer")) {
    read(mt, "optimizer", text, "meta.");
    if (text == "adam") c.meta.outer_optimizer = OuterOptimizer::Adam;
    else if (text == "sgd") c.meta.outer_optimizer = OuterOptimizer::Sgd;
    else throw ConfigError("meta.optimizer must be adam or sgd, got '" + text + "'");
  }

  const json& ev = j.contains("eval") ? j["eval"] : empty;
  read(ev, "episodes", c.episodes_per_eval, "eval.");
  read(ev, "test_per_class", c.test_per_class, "eval.");
  read(ev, "baseline_templates", c.baseline_templates, "eval.");
  c.meta.test_per_class = c.test_per_class;

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) { return to_json_value(cfg).dump(); }

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump_run_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mamlcon
