#include "mamlcon/episodes.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

namespace mamlcon {

void ScenarioSpec::validate() const {
  if (n_final < 1) throw ConfigError("scenario N must be at least 1");
  if (cs < 1) throw ConfigError("scenario CS must be at least 1");
  if (cs > n_final)
    throw ConfigError("scenario CS" + std::to_string(cs) + " exceeds N" + std::to_string(n_final));
  if (ca < 1) throw ConfigError("scenario CA must be at least 1");
  if (k < 1) throw ConfigError("shot count K must be at least 1");
}

std::string ScenarioSpec::notation() const {
  return "N" + std::to_string(n_final) + ":CS" + std::to_string(cs) + ":CA" + std::to_string(ca);
}

namespace {

// Consumes `prefix` followed by digits; returns the number.
std::size_t take_field(std::string_view& text, std::string_view prefix, std::string_view whole) {
  auto fail = [&] {
    return ConfigError("malformed scenario '" + std::string(whole) + "' (expected N<int>:CS<int>:CA<int>)");
  };
  if (text.substr(0, prefix.size()) != prefix) throw fail();
  text.remove_prefix(prefix.size());
  std::size_t value = 0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) throw fail();
  text.remove_prefix(static_cast<std::size_t>(ptr - begin));
  return value;
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text, std::size_t k) {
  const std::string_view whole = text;
  ScenarioSpec spec;
  spec.n_final = take_field(text, "N", whole);
  spec.cs = take_field(text, ":CS", whole);
  spec.ca = take_field(text, ":CA", whole);
  if (!text.empty())
    throw ConfigError("malformed scenario '" + std::string(whole) + "' (trailing characters)");
  spec.k = k;
  spec.validate();
  return spec;
}

std::vector<std::size_t> class_schedule(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<std::size_t> sizes{spec.cs};
  std::size_t total = spec.cs;
  while (total < spec.n_final) {
    const std::size_t add = std::min(spec.ca, spec.n_final - total);
    sizes.push_back(add);
    total += add;
  }
  return sizes;
}

std::vector<int> LabeledDataset::class_ids() const {
  std::vector<int> ids;
  ids.reserve(classes.size());
  for (const auto& [id, examples] : classes) ids.push_back(id);
  return ids;
}

std::size_t LabeledDataset::total_examples() const {
  std::size_t n = 0;
  for (const auto& [id, examples] : classes) n += examples.size();
  return n;
}

LabeledDataset LabeledDataset::subset(std::span<const int> ids) const {
  LabeledDataset out;
  out.frames = frames;
  out.coeffs = coeffs;
  for (int id : ids) {
    auto it = classes.find(id);
    if (it == classes.end()) throw DataError("class " + std::to_string(id) + " not in dataset");
    out.classes.emplace(id, it->second);
  }
  return out;
}

int Episode::head_index(int class_id) const {
  auto it = label_map.find(class_id);
  if (it == label_map.end()) throw std::out_of_range("class " + std::to_string(class_id) + " not in episode");
  return it->second;
}

std::size_t Episode::class_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

std::vector<int> Episode::class_ids() const {
  std::vector<int> out;
  for (const auto& g : groups)
    for (const auto& c : g) out.push_back(c.class_id);
  return out;
}

LabeledBatch make_batch(std::span<const Tensor> examples, std::span<const int> labels) {
  if (examples.size() != labels.size()) throw ShapeError("example/label count mismatch");
  if (examples.empty()) throw ShapeError("cannot build an empty batch");
  std::vector<Tensor> items;
  items.reserve(examples.size());
  for (const auto& e : examples) {
    Shape s{1};
    s.insert(s.end(), e.shape().begin(), e.shape().end());
    if (s.size() == 2) s.insert(s.begin() + 1, 1);  // [coeffs] -> [1,1,coeffs]
    items.push_back(e.reshaped(std::move(s)));
  }
  return {Tensor::stack(items), std::vector<int>(labels.begin(), labels.end())};
}

namespace {

LabeledBatch collect(const Episode& episode, std::span<const ClassSamples> classes, bool support) {
  std::vector<Tensor> xs;
  std::vector<int> ys;
  for (const auto& c : classes) {
    const auto& items = support ? c.support : c.test;
    const int label = episode.head_index(c.class_id);
    for (const auto& x : items) {
      xs.push_back(x);
      ys.push_back(label);
    }
  }
  return make_batch(xs, ys);
}

std::map<int, int> random_label_map(const std::vector<int>& class_ids, std::size_t n_max, std::mt19937_64& rng) {
  if (class_ids.size() > n_max)
    throw ConfigError("episode has " + std::to_string(class_ids.size()) + " classes but the head has only " +
                      std::to_string(n_max) + " slots");
  std::vector<int> slots(n_max);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::map<int, int> out;
  for (std::size_t i = 0; i < class_ids.size(); ++i) out.emplace(class_ids[i], slots[i]);
  return out;
}

}  // namespace

LabeledBatch support_batch(const Episode& episode, std::size_t group) {
  return collect(episode, episode.groups.at(group), true);
}

LabeledBatch test_batch(const Episode& episode, std::size_t group) {
  return collect(episode, episode.groups.at(group), false);
}

LabeledBatch full_test_batch(const Episode& episode) {
  std::vector<ClassSamples> all;
  for (const auto& g : episode.groups) all.insert(all.end(), g.begin(), g.end());
  return collect(episode, all, false);
}

Episode sample_episode(const LabeledDataset& data, const ScenarioSpec& spec, std::size_t n_max, std::mt19937_64& rng,
                       std::size_t test_per_class) {
  const auto schedule = class_schedule(spec);
  if (test_per_class < 1) throw ConfigError("need at least one test example per class");
  const std::size_t needed = spec.k + test_per_class;

  std::vector<int> eligible;
  std::ostringstream short_classes;
  for (const auto& [id, examples] : data.classes) {
    if (examples.size() >= needed)
      eligible.push_back(id);
    else
      short_classes << " class " << id << " has " << examples.size() << ";";
  }
  if (eligible.size() < spec.n_final) {
    std::ostringstream msg;
    msg << "scenario " << spec.notation() << " with K=" << spec.k << " needs " << spec.n_final
        << " classes with at least " << needed << " examples each, dataset has " << eligible.size() << " (deficit "
        << spec.n_final - eligible.size() << ")";
    if (!short_classes.str().empty()) msg << ":" << short_classes.str();
    throw DataError(msg.str());
  }

  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(spec.n_final);

  Episode ep;
  ep.n_max = n_max;
  std::size_t next = 0;
  for (std::size_t group_size : schedule) {
    std::vector<ClassSamples> group;
    for (std::size_t j = 0; j < group_size; ++j) {
      const int id = eligible[next++];
      const auto& examples = data.classes.at(id);
      std::vector<std::size_t> order(examples.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      ClassSamples cs;
      cs.class_id = id;
      for (std::size_t i = 0; i < spec.k; ++i) cs.support.push_back(examples[order[i]]);
      for (std::size_t i = spec.k; i < needed; ++i) cs.test.push_back(examples[order[i]]);
      group.push_back(std::move(cs));
    }
    ep.groups.push_back(std::move(group));
  }
  ep.label_map = random_label_map(ep.class_ids(), n_max, rng);
  return ep;
}

Episode shuffle_labels(const Episode& episode, std::mt19937_64& rng) {
  Episode out = episode;
  out.label_map = random_label_map(episode.class_ids(), episode.n_max, rng);
  return out;
}

}  // namespace mamlcon
