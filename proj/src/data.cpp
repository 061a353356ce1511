#include "haifit/data.hpp"

#include <algorithm>
#include <array>
#include <json.hpp>
#include <map>
#include <random>
#include <set>

#include "haifit/archive.hpp"
#include "haifit/image_io.hpp"

namespace haifit {

namespace fs = std::filesystem;

void SketchImagePair::validate() const {
  sketch.validate();
  photo.validate();
  const Shape& s = sketch.shape();
  if (s.n != 1 || s.c != 3 || s.h != s.w) throw Error(ErrorKind::Shape, "pair " + id + " sketch is " + to_string(s));
  if (!(photo.shape() == s)) throw Error(ErrorKind::Shape, "pair " + id + " photo and sketch differ in shape");
}

fs::path DatasetManifest::photo_path(const std::string& id) const { return root / "images" / (id + ".png"); }
fs::path DatasetManifest::sketch_path(const std::string& id) const { return root / "sketches" / (id + ".png"); }

std::string DatasetManifest::to_json_text() const {
  nlohmann::json j;
  j["root"] = root.string();
  j["ids"] = ids;
  j["train"] = train;
  j["test"] = test;
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json_text(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.root = j.at("root").get<std::string>();
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("bad dataset manifest: ") + e.what());
  }
}

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "missing directory " + dir.string());
  std::set<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.insert(entry.path().stem().string());
  }
  return out;
}

}  // namespace

DatasetManifest scan_dataset(const fs::path& root) {
  const auto photos = png_stems(root / "images");
  const auto sketches = png_stems(root / "sketches");
  std::vector<std::string> unpaired;
  for (const auto& id : photos) {
    if (!sketches.count(id)) unpaired.push_back("images/" + id + ".png has no sketch");
  }
  for (const auto& id : sketches) {
    if (!photos.count(id)) unpaired.push_back("sketches/" + id + ".png has no photo");
  }
  if (!unpaired.empty()) {
    std::string msg = std::to_string(unpaired.size()) + " unpaired file(s):";
    for (const auto& u : unpaired) msg += " " + u + ";";
    throw Error(ErrorKind::Pairing, msg);
  }
  DatasetManifest m;
  m.root = root;
  m.ids.assign(photos.begin(), photos.end());
  m.train = m.ids;
  return m;
}

DatasetManifest split_dataset(DatasetManifest manifest, std::size_t train_count, std::uint64_t seed) {
  if (train_count > manifest.ids.size()) {
    throw Error(ErrorKind::SampleCount, "train count " + std::to_string(train_count) + " exceeds " +
                                            std::to_string(manifest.ids.size()) + " pairs");
  }
  std::vector<std::string> order = manifest.ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  manifest.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  manifest.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
  std::sort(manifest.train.begin(), manifest.train.end());
  std::sort(manifest.test.begin(), manifest.test.end());
  return manifest;
}

SketchImagePair load_pair(const DatasetManifest& manifest, const std::string& id, int resolution) {
  SketchImagePair p{id, normalize_image<float>(letterbox(read_png(manifest.sketch_path(id)), resolution)),
                    normalize_image<float>(letterbox(read_png(manifest.photo_path(id)), resolution))};
  p.validate();
  return p;
}

std::vector<SketchImagePair> load_pairs(const DatasetManifest& manifest, const std::vector<std::string>& ids,
                                        int resolution) {
  std::vector<SketchImagePair> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_pair(manifest, id, resolution));
  return out;
}

namespace {

struct Point {
  double x;
  double y;
};

using Polygon = std::vector<Point>;

bool inside(const Polygon& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

Polygon mirror(const Polygon& p, double cx) {
  Polygon out;
  for (auto it = p.rbegin(); it != p.rend(); ++it) out.push_back({2 * cx - it->x, it->y});
  return out;
}

Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

/// Regions in paint order; a later region overrides an earlier one.
struct Region {
  Polygon shape;
  int label;
};

std::vector<Region> garment_regions(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double cx = 0.5;
  const double top = between(0.12, 0.2);
  const double bottom = between(0.8, 0.9);
  const double half = between(0.15, 0.22);
  const double neck = between(0.05, 0.09);
  const double dip = between(0.03, 0.08);
  std::vector<Region> regions;
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: {  // shirt
      const double shoulder = top + 0.03;
      const double reach = between(0.1, 0.2);
      const double drop = between(0.12, 0.2);
      Polygon sleeve{{cx - half, shoulder},
                     {cx - half - reach, shoulder + drop},
                     {cx - half - reach + 0.07, shoulder + drop + 0.06},
                     {cx - half, shoulder + 0.18}};
      regions.push_back({sleeve, 2});
      regions.push_back({mirror(sleeve, cx), 2});
      regions.push_back({{{cx - neck, top},
                          {cx - half, shoulder},
                          {cx - half, bottom},
                          {cx + half, bottom},
                          {cx + half, shoulder},
                          {cx + neck, top},
                          {cx, top + dip}},
                         1});
      if (u(rng) < 0.5) {
        const double y = between(0.45, 0.6);
        regions.push_back({rect(cx - half, y, cx + half, y + between(0.04, 0.08)), 3});
      }
      if (u(rng) < 0.5) {
        const double px = cx + half * between(0.1, 0.4);
        const double py = shoulder + between(0.08, 0.15);
        regions.push_back({rect(px, py, px + 0.08, py + 0.08), 4});
      }
      break;
    }
    case 1: {  // dress
      const double waist = between(0.4, 0.5);
      const double flare = between(1.3, 1.8);
      regions.push_back({{{cx - neck, top},
                          {cx - half * 0.8, top + 0.02},
                          {cx - half * 0.7, waist},
                          {cx - half * flare, bottom},
                          {cx + half * flare, bottom},
                          {cx + half * 0.7, waist},
                          {cx + half * 0.8, top + 0.02},
                          {cx + neck, top},
                          {cx, top + dip}},
                         1});
      regions.push_back({rect(cx - half * 0.72, waist - 0.025, cx + half * 0.72, waist + 0.025), 3});
      break;
    }
    default: {  // trousers
      const double crotch = between(0.38, 0.5);
      const double gap = between(0.02, 0.05);
      regions.push_back({{{cx - half, top},
                          {cx + half, top},
                          {cx + half * 1.15, bottom},
                          {cx + gap, bottom},
                          {cx, crotch},
                          {cx - gap, bottom},
                          {cx - half * 1.15, bottom}},
                         1});
      regions.push_back({rect(cx - half, top, cx + half, top + between(0.04, 0.07)), 3});
      break;
    }
  }
  return regions;
}

}  // namespace

SyntheticImages synthesize_garment(std::uint64_t seed, int resolution) {
  if (resolution < 8) throw Error(ErrorKind::Shape, "synthetic resolution must be at least 8");
  std::mt19937_64 rng(seed);
  const std::vector<Region> regions = garment_regions(rng);
  std::uniform_int_distribution<int> channel(30, 220);
  std::map<int, std::array<std::uint8_t, 3>> palette;
  palette[0] = {255, 255, 255};
  for (int label = 1; label <= 4; ++label) {
    palette[label] = {std::uint8_t(channel(rng)), std::uint8_t(channel(rng)), std::uint8_t(channel(rng))};
  }

  std::vector<int> labels(std::size_t(resolution) * resolution, 0);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double px = (x + 0.5) / resolution;
      const double py = (y + 0.5) / resolution;
      int label = 0;
      for (const auto& r : regions) {
        // Trims only paint over the garment, never the background.
        if (inside(r.shape, px, py) && (r.label < 3 || label != 0)) label = r.label;
      }
      labels[std::size_t(y) * resolution + x] = label;
    }
  }

  SyntheticImages out;
  out.photo = Image8{resolution, resolution, 3, std::vector<std::uint8_t>(std::size_t(resolution) * resolution * 3)};
  out.sketch = Image8{resolution, resolution, 3, std::vector<std::uint8_t>(std::size_t(resolution) * resolution * 3)};
  auto label_at = [&](int x, int y) { return labels[std::size_t(y) * resolution + x]; };
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const int l = label_at(x, y);
      const bool edge = (x + 1 < resolution && label_at(x + 1, y) != l) || (y + 1 < resolution && label_at(x, y + 1) != l);
      for (int c = 0; c < 3; ++c) {
        out.photo.at(x, y, c) = palette[l][c];
        out.sketch.at(x, y, c) = edge ? 0 : 255;
      }
    }
  }
  return out;
}

SketchImagePair synthetic_pair(std::uint64_t seed, int resolution) {
  const SyntheticImages images = synthesize_garment(seed, resolution);
  return {"synthetic_" + std::to_string(seed), normalize_image<float>(images.sketch),
          normalize_image<float>(images.photo)};
}

DatasetManifest write_synthetic_dataset(const fs::path& root, std::size_t count, int resolution,
                                        std::uint64_t seed) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "sketches");
  DatasetManifest m;
  m.root = root;
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    const SyntheticImages images = synthesize_garment(seed + i, resolution);
    write_png(m.photo_path(id), images.photo);
    write_png(m.sketch_path(id), images.sketch);
    m.ids.push_back(id);
  }
  m.train = m.ids;
  return m;
}

PyramidCache::PyramidCache(const std::vector<SketchImagePair>& pairs, const ResolutionSchedule& schedule)
    : schedule_(schedule) {
  for (const auto& p : pairs) {
    p.validate();
    ids_.push_back(p.id);
    std::vector<Tensor<float>> s;
    std::vector<Tensor<float>> t;
    for (auto& m : downsample_pyramid(p.sketch, schedule)) s.push_back(std::move(m.data));
    for (auto& m : downsample_pyramid(p.photo, schedule)) t.push_back(std::move(m.data));
    sketch_.push_back(std::move(s));
    photo_.push_back(std::move(t));
  }
}

PyramidBatch PyramidCache::batch(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw Error(ErrorKind::SampleCount, "empty batch");
  PyramidBatch b;
  const Index n = static_cast<Index>(indices.size());
  for (std::size_t level = 0; level < schedule_.size(); ++level) {
    const Index r = schedule_[level];
    Tensor<float> s(Shape{n, 3, r, r});
    Tensor<float> t(Shape{n, 3, r, r});
    const Index per = 3 * r * r;
    for (Index i = 0; i < n; ++i) {
      const std::size_t k = indices[static_cast<std::size_t>(i)];
      s.vec().segment(i * per, per) = sketch_.at(k)[level].vec();
      t.vec().segment(i * per, per) = photo_.at(k)[level].vec();
    }
    b.sketch.push_back(std::move(s));
    b.photo.push_back(std::move(t));
  }
  for (auto k : indices) b.ids.push_back(ids_.at(k));
  return b;
}

std::vector<PyramidBatch> PyramidCache::batches(const std::vector<std::size_t>& order, int batch_size) const {
  if (batch_size < 1) throw Error(ErrorKind::Configuration, "batch size must be positive");
  std::vector<PyramidBatch> out;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(batch_size)) {
    const std::size_t end = std::min(order.size(), start + std::size_t(batch_size));
    out.push_back(batch({order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end)}));
  }
  return out;
}

}  // namespace haifit
