#include "haifit/inference.hpp"

#include <chrono>
#include <limits>

#include "haifit/image_io.hpp"

namespace haifit {

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const std::string bytes = read_file(checkpoint);
  return {HaifitModel<float>::read_from(Archive::parse(bytes)), sha256_hex(bytes)};
}

Image8 generate_image(const HaifitModel<float>& model, const Image8& sketch) {
  NoGradGuard no_grad;
  const auto input = normalize_image<float>(letterbox(sketch, model.config().schedule.finest()));
  const auto images = model.generator().forward_full(input.data, model.active_levels());
  return denormalize_image(images.back().value());
}

std::string generate_png(const HaifitModel<float>& model, std::string_view sketch_png) {
  return encode_png(generate_image(model, decode_png(sketch_png)));
}

EvaluationResult evaluate_model(const HaifitModel<float>& model, const std::vector<SketchImagePair>& pairs,
                                const FeatureExtractor<float>& extractor) {
  if (pairs.empty()) throw Error(ErrorKind::SampleCount, "evaluation set is empty");
  NoGradGuard no_grad;
  const int levels = model.active_levels();
  const int res = model.active_resolution();
  const Index n = static_cast<Index>(pairs.size());
  const Index dims = extractor.pooled_features(Tensor<float>(Shape{1, 3, res, res})).cols();
  Eigen::MatrixXd generated(n, dims);
  Eigen::MatrixXd real(n, dims);
  double seconds = 0.0;
  EvaluationResult out;
  double psnr_sum = 0.0;
  double ssim_sum = 0.0;
  double lpips_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto& p = pairs[std::size_t(i)];
    const auto t0 = std::chrono::steady_clock::now();
    const auto image = model.generator().forward_full(p.sketch.data, levels).back().value();
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto target = downsample_pyramid(p.photo, model.config().schedule)[std::size_t(levels - 1)].data;
    generated.row(i) = extractor.pooled_features(image).row(0).cast<double>();
    real.row(i) = extractor.pooled_features(target).row(0).cast<double>();
    const auto a = to_pixel_scale(image);
    const auto b = to_pixel_scale(target);
    const PsnrValue v = psnr(a, b);
    if (v.infinite) out.report.psnr.infinite = true;
    else psnr_sum += v.db;
    ssim_sum += ssim(a, b);
    lpips_sum += lpips_distance(image, target, extractor);
  }
  auto& r = out.report;
  r.psnr.db = r.psnr.infinite ? std::numeric_limits<double>::infinity() : psnr_sum / double(n);
  r.ssim = ssim_sum / double(n);
  r.lpips = lpips_sum / double(n);
  r.sample_count = pairs.size();
  try {
    r.fid = fid_from_samples(real, generated);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SampleCount) throw;
  }
  out.inference_ms_per_image = 1000.0 * seconds / double(n);
  return out;
}

}  // namespace haifit
