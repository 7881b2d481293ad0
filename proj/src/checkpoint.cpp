#include "mamlcon/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

#include "mamlcon/archive.hpp"

namespace mamlcon {

namespace {

template <class Container>
std::string join(const Container& values) {
  std::ostringstream os;
  bool first = true;
  for (auto v : values) {
    os << (first ? "" : ",") << v;
    first = false;
  }
  return os.str();
}

std::vector<std::size_t> split_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ArchiveError(ArchiveError::Kind::Malformed, "bad size list '" + text + "' in checkpoint");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <std::size_t N>
std::array<std::size_t, N> fixed_sizes(const std::string& text) {
  const auto v = split_sizes(text);
  if (v.size() != N) throw ArchiveError(ArchiveError::Kind::Malformed, "expected " + std::to_string(N) + " sizes in '" + text + "'");
  std::array<std::size_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  FeatureArchive a;
  a.n_coeffs = 1;
  a.classes[0] = "parameters";
  a.meta = {{"kind", "checkpoint"},
            {"algorithm", ckpt.algorithm},
            {"model.architecture", to_string(ckpt.model.architecture)},
            {"model.input_shape", join(ckpt.model.input_shape)},
            {"model.conv_channels", join(ckpt.model.conv_channels)},
            {"model.kernel", join(ckpt.model.kernel)},
            {"model.stride", std::to_string(ckpt.model.stride)},
            {"model.hidden", join(ckpt.model.hidden)},
            {"model.head_classes", std::to_string(ckpt.model.head_classes)}};
  for (const auto& kv : ckpt.extra) a.meta.push_back(kv);
  if (!ckpt.params.same_layout([&] {
        ParameterSet expected;
        for (const auto& [name, shape] : ckpt.model.parameter_shapes()) expected.add(name, Tensor(shape));
        return expected;
      }()))
    throw ConfigError("checkpoint parameters do not match the model configuration");
  for (const auto& [name, t] : ckpt.params) a.records.push_back({name, 0, t.reshaped({t.size(), 1})});
  write_archive(a, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const FeatureArchive a = read_archive(path);
  if (a.n_coeffs != 1 || a.meta_value("kind") != "checkpoint")
    throw ArchiveError(ArchiveError::Kind::Malformed, path.string() + " is a feature archive, not a checkpoint");
  Checkpoint c;
  c.algorithm = a.meta_value("algorithm");
  c.model.architecture = architecture_from_string(a.meta_value("model.architecture"));
  c.model.input_shape = fixed_sizes<3>(a.meta_value("model.input_shape"));
  c.model.conv_channels = fixed_sizes<3>(a.meta_value("model.conv_channels"));
  c.model.kernel = fixed_sizes<2>(a.meta_value("model.kernel"));
  c.model.stride = split_sizes(a.meta_value("model.stride")).at(0);
  c.model.hidden = split_sizes(a.meta_value("model.hidden"));
  c.model.head_classes = split_sizes(a.meta_value("model.head_classes")).at(0);
  for (const auto& kv : a.meta)
    if (kv.first != "kind" && kv.first != "algorithm" && kv.first.rfind("model.", 0) != 0) c.extra.push_back(kv);

  const auto shapes = c.model.parameter_shapes();
  if (shapes.size() != a.records.size())
    throw ArchiveError(ArchiveError::Kind::Malformed, "checkpoint holds " + std::to_string(a.records.size()) +
                                                          " tensors, model expects " + std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& rec = a.records[i];
    if (rec.id != shapes[i].first || rec.features.size() != shape_numel(shapes[i].second))
      throw ArchiveError(ArchiveError::Kind::Shape, "checkpoint tensor '" + rec.id + "' does not match model parameter '" +
                                                        shapes[i].first + "'", rec.id);
    c.params.add(rec.id, rec.features.reshaped(shapes[i].second));
  }
  return c;
}

}  // namespace mamlcon
