#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "haifit/data.hpp"
#include "haifit/extractor.hpp"
#include "haifit/metrics.hpp"
#include "haifit/model.hpp"

namespace haifit {

/// A model restored for generation, with the SHA-256 of the file it came from.
struct LoadedModel {
  HaifitModel<float> model;
  std::string fingerprint;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Letterboxes the sketch to the finest schedule resolution and returns the
/// photo from the finest active level.
Image8 generate_image(const HaifitModel<float>& model, const Image8& sketch);

/// PNG in, PNG out. Shared by the CLI and the HTTP service so both produce
/// identical bytes.
std::string generate_png(const HaifitModel<float>& model, std::string_view sketch_png);

struct EvaluationResult {
  MetricsReport report;
  double inference_ms_per_image = 0;
};

/// PSNR, SSIM and LPIPS averaged per image at the finest active level, and
/// FID over pooled extractor features (absent when there are too few pairs
/// for a full-rank covariance).
EvaluationResult evaluate_model(const HaifitModel<float>& model, const std::vector<SketchImagePair>& pairs,
                                const FeatureExtractor<float>& extractor);

}  // namespace haifit
