#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "haifit/core.hpp"

namespace haifit {

/// A sketch and its photograph, both (1, 3, r, r) in [-1, 1].
struct SketchImagePair {
  std::string id;
  FeatureMap<float> sketch;
  FeatureMap<float> photo;

  void validate() const;
};

/// Pair ids found under <root>/images and <root>/sketches, sorted, plus a
/// train/test split.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> ids;
  std::vector<std::string> train;
  std::vector<std::string> test;

  std::filesystem::path photo_path(const std::string& id) const;
  std::filesystem::path sketch_path(const std::string& id) const;

  std::string to_json_text() const;
  static DatasetManifest from_json_text(const std::string& text);
};

/// Scans <root>/images/<id>.png and <root>/sketches/<id>.png. Any id present
/// on only one side is a Pairing error listing every offender.
DatasetManifest scan_dataset(const std::filesystem::path& root);

/// Seeded shuffle of the ids; the first `train_count` become the training
/// split, the rest the test split (each kept in sorted order).
DatasetManifest split_dataset(DatasetManifest manifest, std::size_t train_count, std::uint64_t seed);

/// Loads and letterboxes one pair to `resolution`.
SketchImagePair load_pair(const DatasetManifest& manifest, const std::string& id, int resolution);

std::vector<SketchImagePair> load_pairs(const DatasetManifest& manifest, const std::vector<std::string>& ids,
                                        int resolution);

struct SyntheticImages {
  Image8 photo;
  Image8 sketch;
};

/// A flat-colored garment (shirt, dress or trousers) on white, and its
/// binary edge sketch: black wherever the region label changes.
SyntheticImages synthesize_garment(std::uint64_t seed, int resolution);

SketchImagePair synthetic_pair(std::uint64_t seed, int resolution);

/// Writes `count` synthetic pairs as PNGs in the dataset layout.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& root, std::size_t count, int resolution,
                                        std::uint64_t seed);

/// Per-level batch tensors, coarsest level first.
struct PyramidBatch {
  std::vector<std::string> ids;
  std::vector<Tensor<float>> sketch;
  std::vector<Tensor<float>> photo;

  Index size() const { return static_cast<Index>(ids.size()); }
};

/// Pyramids for every pair, computed once.
class PyramidCache {
 public:
  PyramidCache() = default;
  PyramidCache(const std::vector<SketchImagePair>& pairs, const ResolutionSchedule& schedule);

  std::size_t size() const { return ids_.size(); }
  const ResolutionSchedule& schedule() const { return schedule_; }

  /// Stacks the given samples; the batch may be smaller than configured.
  PyramidBatch batch(const std::vector<std::size_t>& indices) const;

  /// Consecutive batches over `order`; the last one keeps the remainder.
  std::vector<PyramidBatch> batches(const std::vector<std::size_t>& order, int batch_size) const;

 private:
  ResolutionSchedule schedule_;
  std::vector<std::string> ids_;
  std::vector<std::vector<Tensor<float>>> sketch_;
  std::vector<std::vector<Tensor<float>>> photo_;
};

}  // namespace haifit
