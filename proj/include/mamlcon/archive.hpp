#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mamlcon/episodes.hpp"
#include "mamlcon/features.hpp"
#include "mamlcon/tensor.hpp"

namespace mamlcon {

/// Feature-archive container ("MCFA1").
///
/// An archive is two files: a UTF-8 text manifest at `path` and a blob of raw
/// little-endian IEEE-754 64-bit floats at `path` + ".bin". The manifest is
/// line oriented, fields separated by a single TAB:
///
///   MCFA1
///   version      1
///   n_coeffs     <D>
///   total_frames <sum of record frame counts>
///   blob         <blob file name, relative to the manifest>
///   classes      <count>
///   <class_id>   <name>                               (count lines)
///   meta         <count>
///   <key>        <value>                              (count lines)
///   records      <count>
///   <id> <class_id> <n_frames> <byte offset>          (count lines)
///   end
///
/// Record i occupies n_frames * n_coeffs * 8 bytes of the blob starting at
/// its offset, row-major [n_frames, n_coeffs]. The writer packs records
/// back to back in manifest order.
inline constexpr const char* kArchiveMagic = "MCFA1";
inline constexpr int kArchiveVersion = 1;

struct FeatureRecord {
  std::string id;
  int class_id = 0;
  Tensor features;  // [n_frames, n_coeffs]

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureArchive {
  std::size_t n_coeffs = 0;
  std::map<int, std::string> classes;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<FeatureRecord> records;

  std::size_t total_frames() const;
  /// Value of a meta key, or throws ArchiveError.
  const std::string& meta_value(const std::string& key) const;
  /// Checks ids, class references and feature shapes; throws ArchiveError.
  void validate() const;

  bool operator==(const FeatureArchive&) const = default;
};

class ArchiveError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, Malformed, DuplicateId, UnknownClass, OutOfBounds, Overlap, Shape };

  ArchiveError(Kind kind, std::string message, std::string record = {})
      : std::runtime_error(std::move(message)), kind_(kind), record_(std::move(record)) {}

  Kind kind() const { return kind_; }
  /// Offending record id, when the error concerns one record.
  const std::string& record() const { return record_; }

 private:
  Kind kind_;
  std::string record_;
};

std::filesystem::path blob_path(const std::filesystem::path& manifest);

void write_archive(const FeatureArchive& archive, const std::filesystem::path& path);
FeatureArchive read_archive(const std::filesystem::path& path);

/// Byte offset of each record as the writer lays them out.
std::vector<std::uint64_t> record_offsets(const FeatureArchive& archive);

/// Groups records by class. All records must share one frame count.
LabeledDataset to_dataset(const FeatureArchive& archive);

/// Archive restricted to the given class ids (records keep their order).
FeatureArchive select_classes(const FeatureArchive& archive, const std::vector<int>& class_ids);

// ---------------------------------------------------------------------------
// Archive building from waveforms
// ---------------------------------------------------------------------------

/// word -> stem, read from UTF-8 lines of `word<TAB>stem`. Blank lines and
/// lines starting with '#' are skipped.
std::map<std::string, std::string> read_stem_map(const std::filesystem::path& path);

/// Extracts padded MFCC features for every .wav under `wav_dir`. A file's word
/// is the name of its parent directory below `wav_dir` (or, for files directly
/// in `wav_dir`, the file name up to the first '_'). Words map to classes
/// through their stem; words missing from the map are their own stem.
FeatureArchive build_feature_archive(const std::filesystem::path& wav_dir,
                                     const std::map<std::string, std::string>& stems, const MfccConfig& cfg);

struct ArchiveSplit {
  FeatureArchive train;
  FeatureArchive test;
};

/// Random stem-disjoint split: a whole class (= stem) goes to one side.
ArchiveSplit split_by_stem(const FeatureArchive& archive, double test_fraction, std::uint64_t seed);

}  // namespace mamlcon
