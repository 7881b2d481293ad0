#include "mamlcon/archive.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace mamlcon {

namespace fs = std::filesystem;
using Kind = ArchiveError::Kind;

std::size_t FeatureArchive::total_frames() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.features.dim(0);
  return n;
}

const std::string& FeatureArchive::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw ArchiveError(Kind::Malformed, "archive has no meta entry '" + key + "'");
}

namespace {

bool plain_token(const std::string& s) {
  return !s.empty() && s.find_first_of("\t\n\r") == std::string::npos;
}

}  // namespace

void FeatureArchive::validate() const {
  if (n_coeffs == 0) throw ArchiveError(Kind::Malformed, "n_coeffs must be positive");
  for (const auto& [id, name] : classes)
    if (!plain_token(name)) throw ArchiveError(Kind::Malformed, "class " + std::to_string(id) + " has an unusable name");
  for (const auto& [k, v] : meta)
    if (!plain_token(k) || v.find_first_of("\t\n\r") != std::string::npos)
      throw ArchiveError(Kind::Malformed, "meta entry '" + k + "' contains TAB or newline");
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!plain_token(r.id)) throw ArchiveError(Kind::Malformed, "record id is empty or contains TAB/newline", r.id);
    if (!seen.insert(r.id).second) throw ArchiveError(Kind::DuplicateId, "duplicate record id '" + r.id + "'", r.id);
    if (!classes.count(r.class_id))
      throw ArchiveError(Kind::UnknownClass,
                         "record '" + r.id + "' references unknown class " + std::to_string(r.class_id), r.id);
    if (r.features.rank() != 2 || r.features.dim(1) != n_coeffs)
      throw ArchiveError(Kind::Shape,
                         "record '" + r.id + "' has shape " + shape_to_string(r.features.shape()) + ", expected [*," +
                             std::to_string(n_coeffs) + "]",
                         r.id);
  }
}

fs::path blob_path(const fs::path& manifest) { return fs::path(manifest.string() + ".bin"); }

std::vector<std::uint64_t> record_offsets(const FeatureArchive& archive) {
  std::vector<std::uint64_t> out;
  std::uint64_t offset = 0;
  for (const auto& r : archive.records) {
    out.push_back(offset);
    offset += static_cast<std::uint64_t>(r.features.size()) * 8;
  }
  return out;
}

namespace {

void put_le64(std::string& buf, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

class ManifestReader {
 public:
  ManifestReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::vector<std::string> fields() {
    std::string line;
    if (!std::getline(in_, line)) throw error("unexpected end of manifest");
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      out.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return out;
  }

  std::vector<std::string> expect(std::size_t count) {
    auto f = fields();
    if (f.size() != count)
      throw error("expected " + std::to_string(count) + " fields, found " + std::to_string(f.size()));
    return f;
  }

  std::string keyed(const std::string& key) {
    auto f = expect(2);
    if (f[0] != key) throw error("expected '" + key + "', found '" + f[0] + "'");
    return f[1];
  }

  template <class T>
  T number(const std::string& text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw error("'" + text + "' is not a valid number");
    return value;
  }

  ArchiveError error(const std::string& what) const {
    return ArchiveError(Kind::Malformed, source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace

void write_archive(const FeatureArchive& archive, const fs::path& path) {
  archive.validate();
  const auto offsets = record_offsets(archive);

  std::ostringstream man;
  man << kArchiveMagic << '\n';
  man << "version\t" << kArchiveVersion << '\n';
  man << "n_coeffs\t" << archive.n_coeffs << '\n';
  man << "total_frames\t" << archive.total_frames() << '\n';
  man << "blob\t" << blob_path(path).filename().string() << '\n';
  man << "classes\t" << archive.classes.size() << '\n';
  for (const auto& [id, name] : archive.classes) man << id << '\t' << name << '\n';
  man << "meta\t" << archive.meta.size() << '\n';
  for (const auto& [k, v] : archive.meta) man << k << '\t' << v << '\n';
  man << "records\t" << archive.records.size() << '\n';
  for (std::size_t i = 0; i < archive.records.size(); ++i) {
    const auto& r = archive.records[i];
    man << r.id << '\t' << r.class_id << '\t' << r.features.dim(0) << '\t' << offsets[i] << '\n';
  }
  man << "end\n";

  std::string blob;
  blob.reserve(archive.total_frames() * archive.n_coeffs * 8);
  for (const auto& r : archive.records)
    for (double v : r.features.data()) put_le64(blob, v);

  std::ofstream mf(path, std::ios::binary);
  if (!mf) throw ArchiveError(Kind::Io, "cannot write manifest " + path.string());
  mf << man.str();
  std::ofstream bf(blob_path(path), std::ios::binary);
  if (!bf) throw ArchiveError(Kind::Io, "cannot write blob " + blob_path(path).string());
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!mf || !bf) throw ArchiveError(Kind::Io, "write failed for archive " + path.string());
}

FeatureArchive read_archive(const fs::path& path) {
  std::ifstream mf(path, std::ios::binary);
  if (!mf) throw ArchiveError(Kind::Io, "cannot open manifest " + path.string());
  ManifestReader rd(mf, path.string());

  const auto magic = rd.fields();
  if (magic.size() != 1 || magic[0] != kArchiveMagic)
    throw ArchiveError(Kind::BadMagic, path.string() + " is not an " + kArchiveMagic + " archive");
  const int version = rd.number<int>(rd.keyed("version"));
  if (version != kArchiveVersion)
    throw ArchiveError(Kind::BadVersion, "unsupported archive version " + std::to_string(version));

  FeatureArchive a;
  a.n_coeffs = rd.number<std::size_t>(rd.keyed("n_coeffs"));
  if (a.n_coeffs == 0) throw rd.error("n_coeffs must be positive");
  const auto total_frames = rd.number<std::size_t>(rd.keyed("total_frames"));
  const fs::path blob_file = path.parent_path() / rd.keyed("blob");

  const auto n_classes = rd.number<std::size_t>(rd.keyed("classes"));
  for (std::size_t i = 0; i < n_classes; ++i) {
    auto f = rd.expect(2);
    if (!a.classes.emplace(rd.number<int>(f[0]), f[1]).second) throw rd.error("duplicate class id " + f[0]);
  }
  const auto n_meta = rd.number<std::size_t>(rd.keyed("meta"));
  for (std::size_t i = 0; i < n_meta; ++i) {
    auto f = rd.expect(2);
    a.meta.emplace_back(f[0], f[1]);
  }

  struct Row {
    std::string id;
    int class_id;
    std::size_t frames;
    std::uint64_t offset;
  };
  const auto n_records = rd.number<std::size_t>(rd.keyed("records"));
  std::vector<Row> rows;
  rows.reserve(n_records);
  std::set<std::string> ids;
  std::size_t frame_sum = 0;
  for (std::size_t i = 0; i < n_records; ++i) {
    auto f = rd.expect(4);
    Row r{f[0], rd.number<int>(f[1]), rd.number<std::size_t>(f[2]), rd.number<std::uint64_t>(f[3])};
    if (r.frames == 0) throw ArchiveError(Kind::Malformed, "record '" + r.id + "' has zero frames", r.id);
    if (!ids.insert(r.id).second) throw ArchiveError(Kind::DuplicateId, "duplicate record id '" + r.id + "'", r.id);
    if (!a.classes.count(r.class_id))
      throw ArchiveError(Kind::UnknownClass,
                         "record '" + r.id + "' references unknown class " + std::to_string(r.class_id), r.id);
    frame_sum += r.frames;
    rows.push_back(std::move(r));
  }
  const auto end_line = rd.fields();
  if (end_line.size() != 1 || end_line[0] != "end") throw rd.error("missing 'end' line");
  if (frame_sum != total_frames)
    throw rd.error("records hold " + std::to_string(frame_sum) + " frames, header says " +
                   std::to_string(total_frames));

  std::ifstream bf(blob_file, std::ios::binary);
  if (!bf) throw ArchiveError(Kind::Io, "cannot open blob " + blob_file.string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  // Bounds first, in manifest order, so a truncated blob names the first record it cuts.
  for (const auto& r : rows) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(r.frames) * a.n_coeffs * 8;
    if (r.offset > blob.size() || bytes > blob.size() - r.offset)
      throw ArchiveError(Kind::OutOfBounds,
                         "record '" + r.id + "' spans bytes [" + std::to_string(r.offset) + ", " +
                             std::to_string(r.offset + bytes) + ") but the blob holds " + std::to_string(blob.size()),
                         r.id);
  }
  std::vector<const Row*> by_offset;
  for (const auto& r : rows) by_offset.push_back(&r);
  std::sort(by_offset.begin(), by_offset.end(), [](const Row* x, const Row* y) { return x->offset < y->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    const Row& prev = *by_offset[i - 1];
    if (prev.offset + static_cast<std::uint64_t>(prev.frames) * a.n_coeffs * 8 > by_offset[i]->offset)
      throw ArchiveError(Kind::Overlap, "record '" + by_offset[i]->id + "' overlaps '" + prev.id + "'",
                         by_offset[i]->id);
  }

  for (const auto& r : rows) {
    std::vector<double> values(r.frames * a.n_coeffs);
    const unsigned char* p = blob.data() + r.offset;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_le64(p + 8 * i);
    a.records.push_back({r.id, r.class_id, Tensor({r.frames, a.n_coeffs}, std::move(values))});
  }
  return a;
}

LabeledDataset to_dataset(const FeatureArchive& archive) {
  LabeledDataset ds;
  ds.coeffs = archive.n_coeffs;
  for (const auto& r : archive.records) {
    if (ds.frames == 0) ds.frames = r.features.dim(0);
    if (r.features.dim(0) != ds.frames)
      throw DataError("record '" + r.id + "' has " + std::to_string(r.features.dim(0)) + " frames, expected " +
                      std::to_string(ds.frames) + " (pad features to a common length)");
    ds.classes[r.class_id].push_back(r.features);
  }
  return ds;
}

FeatureArchive select_classes(const FeatureArchive& archive, const std::vector<int>& class_ids) {
  const std::set<int> keep(class_ids.begin(), class_ids.end());
  FeatureArchive out;
  out.n_coeffs = archive.n_coeffs;
  out.meta = archive.meta;
  for (const auto& [id, name] : archive.classes)
    if (keep.count(id)) out.classes.emplace(id, name);
  for (const auto& r : archive.records)
    if (keep.count(r.class_id)) out.records.push_back(r);
  return out;
}

std::map<std::string, std::string> read_stem_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stem map " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() || line.find('\t', tab + 1) != std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'word<TAB>stem'");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

FeatureArchive build_feature_archive(const fs::path& wav_dir, const std::map<std::string, std::string>& stems,
                                     const MfccConfig& cfg) {
  cfg.validate();
  if (!fs::is_directory(wav_dir)) throw DataError(wav_dir.string() + " is not a directory");

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(wav_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .wav files under " + wav_dir.string());

  auto word_of = [&](const fs::path& file) {
    const fs::path rel = fs::relative(file, wav_dir);
    if (rel.has_parent_path()) return rel.begin()->string();
    const std::string name = file.stem().string();
    return name.substr(0, name.find('_'));
  };

  std::vector<std::pair<fs::path, std::string>> labelled;
  std::set<std::string> stem_names;
  for (const auto& f : files) {
    const std::string word = word_of(f);
    auto it = stems.find(word);
    const std::string stem = it == stems.end() ? word : it->second;
    stem_names.insert(stem);
    labelled.emplace_back(f, stem);
  }

  FeatureArchive a;
  a.n_coeffs = cfg.feature_dim();
  std::map<std::string, int> class_of;
  for (const auto& s : stem_names) {
    const int id = static_cast<int>(class_of.size());
    class_of[s] = id;
    a.classes[id] = s;
  }
  a.meta = {{"kind", "features"},
            {"sample_rate", std::to_string(static_cast<long>(cfg.sample_rate))},
            {"target_frames", std::to_string(cfg.target_frames)}};
  for (const auto& [file, stem] : labelled) {
    const Waveform wav = read_wav(file);
    if (static_cast<double>(wav.sample_rate) != cfg.sample_rate)
      throw DataError(file.string() + ": sample rate " + std::to_string(wav.sample_rate) + " does not match " +
                      std::to_string(static_cast<long>(cfg.sample_rate)));
    Tensor feats = pad_or_truncate(mfcc(wav.samples, cfg), cfg.target_frames);
    a.records.push_back({fs::relative(file, wav_dir).generic_string(), class_of.at(stem), std::move(feats)});
  }
  return a;
}

ArchiveSplit split_by_stem(const FeatureArchive& archive, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  std::vector<int> ids;
  for (const auto& [id, name] : archive.classes) ids.push_back(id);
  if (ids.size() < 2) throw DataError("need at least two stems to split");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
  std::vector<int> test(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<int> train(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  return {select_classes(archive, train), select_classes(archive, test)};
}

}  // namespace mamlcon
