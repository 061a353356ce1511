#include "haifit/trainer.hpp"

#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "haifit/metrics.hpp"

namespace haifit {

double learning_rate_at(double base, int epoch, int period, double factor) {
  if (period <= 0) return base;
  return base * std::pow(factor, double(epoch / period));
}

bool EarlyStopper::update(double score) {
  if (!best_ || score > *best_) {
    best_ = score;
    since_ = 0;
    return false;
  }
  return ++since_ >= patience_;
}

std::string IterationRecord::to_json_line() const {
  nlohmann::json j;
  j["event"] = "iteration";
  j["stage"] = stage;
  j["epoch"] = epoch;
  j["iter"] = iteration;
  j["l1"] = l1;
  j["adv_g"] = adv_g;
  j["adv_d"] = adv_d;
  j["style"] = style;
  j["per"] = perceptual;
  j["total"] = total;
  j["lr_G"] = lr_generator;
  j["lr_D"] = lr_discriminator;
  return j.dump();
}

namespace {

std::vector<SketchImagePair> first_n(std::vector<SketchImagePair> pairs, int n) {
  if (n > 0 && pairs.size() > std::size_t(n)) pairs.resize(std::size_t(n));
  return pairs;
}

Var<float> accumulate(const Var<float>& total, const Var<float>& term) {
  return total.defined() ? ops::add(total, term) : term;
}

}  // namespace

Trainer::Trainer(TrainConfig config, FeatureExtractor<float> extractor, std::vector<SketchImagePair> train,
                 std::vector<SketchImagePair> validation, TrainerOptions options)
    : model_(std::move(config)),
      extractor_(std::move(extractor)),
      train_(std::move(train)),
      validation_(first_n(std::move(validation), model_.config().validation_count)),
      options_(std::move(options)),
      cache_(train_, model_.config().schedule),
      opt_g_(model_.config().lr_generator, model_.config().adam_beta1, model_.config().adam_beta2),
      opt_d_(model_.config().lr_discriminator, model_.config().adam_beta1, model_.config().adam_beta2),
      shuffle_rng_(model_.config().seed ^ 0x5eed5eed5eed5eedULL),
      stopper_(model_.config().early_stop_patience) {
  if (train_.empty()) throw Error(ErrorKind::SampleCount, "no training pairs");
  if (extractor_.stage_count() != 5) {
    throw Error(ErrorKind::Configuration, "perceptual extractor needs 5 stages");
  }
  opt_g_.add(model_.generator_params());
  opt_d_.add(model_.critic_params());
}

Trainer Trainer::resume(const Archive& checkpoint, FeatureExtractor<float> extractor,
                        std::vector<SketchImagePair> train, std::vector<SketchImagePair> validation,
                        TrainerOptions options) {
  const auto& m = checkpoint.manifest();
  if (m.value("format", std::string()) != "haifit-checkpoint") {
    throw Error(ErrorKind::Format, "not a training checkpoint");
  }
  HaifitModel<float> restored = HaifitModel<float>::read_from(checkpoint);
  Trainer t(restored.config(), std::move(extractor), std::move(train), std::move(validation), std::move(options));
  t.model_ = std::move(restored);
  t.opt_g_ = Adam<float>(t.config().lr_generator, t.config().adam_beta1, t.config().adam_beta2);
  t.opt_d_ = Adam<float>(t.config().lr_discriminator, t.config().adam_beta1, t.config().adam_beta2);
  t.opt_g_.add(t.model_.generator_params());
  t.opt_d_.add(t.model_.critic_params());
  t.opt_g_.load(checkpoint, "opt.G");
  t.opt_d_.load(checkpoint, "opt.D");
  t.epoch_ = m.at("epoch").get<int>();
  t.stage_epoch_ = m.at("stage_epoch").get<int>();
  t.iteration_ = m.at("iteration").get<int>();
  const auto& best = m.at("best_validation_ssim");
  t.stopper_.restore(best.is_null() ? std::nullopt : std::optional<double>(best.get<double>()),
                     m.at("evaluations_since_improvement").get<int>());
  std::istringstream rng(m.at("shuffle_rng").get<std::string>());
  rng >> t.shuffle_rng_;
  return t;
}

void Trainer::apply_learning_rates() {
  const auto& c = config();
  opt_g_.set_lr(learning_rate_at(c.lr_generator, epoch_, c.decay_period_epochs, c.decay_factor));
  opt_d_.set_lr(learning_rate_at(c.lr_discriminator, epoch_, c.decay_period_epochs, c.decay_factor));
}

double Trainer::discriminator_step(const PyramidBatch& batch) {
  if (options_.hooks.before_phase) options_.hooks.before_phase(Phase::Discriminator, model_);
  const int levels = model_.active_levels();
  std::vector<Var<float>> fakes;
  {
    NoGradGuard no_grad;
    fakes = model_.generator().forward_full(batch.sketch.back(), levels);
  }
  for (const auto& f : fakes) {
    if (!f.value().all_finite()) {
      std::string msg = "non-finite generator output at stage " + std::to_string(levels) + " epoch " +
                        std::to_string(epoch_) + " iteration " + std::to_string(iteration_) + "; batch:";
      for (const auto& id : batch.ids) msg += " " + id;
      throw Error(ErrorKind::Numerical, msg);
    }
  }
  Var<float> loss;
  for (int n = 1; n <= levels; ++n) {
    const auto real = model_.critics().discriminate(Var<float>(batch.photo[std::size_t(n - 1)]), n);
    const auto fake = model_.critics().discriminate(fakes[std::size_t(n - 1)], n);
    loss = accumulate(loss, discriminator_loss(real, fake));
  }
  loss = ops::scale(loss, 1.0f / float(levels));
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::Numerical, "non-finite critic loss at stage " + std::to_string(levels) + " epoch " +
                                          std::to_string(epoch_) + " iteration " + std::to_string(iteration_));
  }
  backward(loss);
  opt_d_.step();
  if (options_.hooks.after_phase) options_.hooks.after_phase(Phase::Discriminator, model_);
  return value;
}

LossBreakdown Trainer::generator_step(const PyramidBatch& batch) {
  if (options_.hooks.before_phase) options_.hooks.before_phase(Phase::Generator, model_);
  const auto critic = model_.critic_params();
  set_requires_grad(critic, false);
  const auto& c = config();
  const int levels = model_.active_levels();
  const auto images = model_.generator().forward_full(batch.sketch.back(), levels);
  Var<float> l1;
  Var<float> adv;
  Var<float> style;
  Var<float> per;
  int textured = 0;
  for (int n = 1; n <= levels; ++n) {
    const auto& image = images[std::size_t(n - 1)];
    const Var<float> target(batch.photo[std::size_t(n - 1)]);
    l1 = accumulate(l1, l1_loss(image, target));
    adv = accumulate(adv, generator_adversarial_loss(model_.critics().discriminate(image, n)));
    if (n == levels || c.perceptual_all_levels) {
      style = accumulate(style, c.style_on_features ? feature_style_loss(image, target, extractor_)
                                                    : style_loss(image, target));
      per = accumulate(per, perceptual_loss(image, target, extractor_));
      ++textured;
    }
  }
  l1 = ops::scale(l1, 1.0f / float(levels));
  adv = ops::scale(adv, 1.0f / float(levels));
  style = ops::scale(style, 1.0f / float(textured));
  per = ops::scale(per, 1.0f / float(textured));
  const auto w = LossWeights::from(c);
  const auto total = ops::add(ops::add(ops::scale(l1, float(w.l1)), ops::scale(adv, float(w.adv))),
                              ops::add(ops::scale(style, float(w.style)), ops::scale(per, float(w.perceptual))));
  const auto breakdown = total_generator_loss(l1.item(), adv.item(), style.item(), per.item(), w);
  check_finite(breakdown, 0.0, batch);
  backward(total);
  opt_g_.step();
  set_requires_grad(critic, true);
  if (options_.hooks.after_phase) options_.hooks.after_phase(Phase::Generator, model_);
  return breakdown;
}

void Trainer::check_finite(const LossBreakdown& b, double d_loss, const PyramidBatch& batch) const {
  if (std::isfinite(b.total) && std::isfinite(d_loss)) return;
  std::ostringstream msg;
  msg << "non-finite generator loss at stage " << model_.active_levels() << " epoch " << epoch_ << " iteration "
      << iteration_ << " (l1=" << b.l1 << " adv=" << b.adv << " style=" << b.style << " per=" << b.perceptual
      << " d=" << d_loss << "); batch:";
  for (const auto& id : batch.ids) msg << ' ' << id;
  throw Error(ErrorKind::Numerical, msg.str());
}

std::vector<IterationRecord> Trainer::run_epoch() {
  apply_learning_rates();
  std::vector<std::size_t> order(cache_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);
  const auto batches = cache_.batches(order, config().batch_size);
  const std::size_t k = std::size_t(config().k_alternation);
  std::vector<IterationRecord> records;
  for (std::size_t start = 0; start < batches.size(); start += k) {
    const std::size_t end = std::min(batches.size(), start + k);
    std::vector<double> d_losses;
    for (std::size_t i = start; i < end; ++i) d_losses.push_back(discriminator_step(batches[i]));
    for (std::size_t i = start; i < end; ++i) {
      const auto b = generator_step(batches[i]);
      IterationRecord r{model_.active_levels(), epoch_, iteration_++, b.l1, b.adv, d_losses[i - start],
                        b.style, b.perceptual, b.total, opt_g_.lr(), opt_d_.lr()};
      log_line(r.to_json_line());
      if (options_.hooks.on_iteration) options_.hooks.on_iteration(r, model_);
      records.push_back(r);
    }
  }
  ++epoch_;
  ++stage_epoch_;
  return records;
}

void Trainer::grow() {
  if (options_.hooks.before_growth) options_.hooks.before_growth(model_);
  model_.grow();
  opt_g_.add(model_.generator_params());
  opt_d_.add(model_.critic_params());
  stage_epoch_ = 0;
  if (options_.hooks.after_growth) options_.hooks.after_growth(model_);
}

Evaluation Trainer::evaluate(const std::vector<SketchImagePair>& pairs) const {
  if (pairs.empty()) throw Error(ErrorKind::SampleCount, "nothing to evaluate");
  NoGradGuard no_grad;
  const PyramidCache cache(pairs, config().schedule);
  std::vector<std::size_t> order(cache.size());
  std::iota(order.begin(), order.end(), 0);
  const int levels = model_.active_levels();
  double l1_sum = 0.0;
  double ssim_sum = 0.0;
  double elements = 0.0;
  for (const auto& batch : cache.batches(order, config().batch_size)) {
    const auto image = model_.generator().forward_full(batch.sketch.back(), levels).back().value();
    const auto& target = batch.photo[std::size_t(levels - 1)];
    l1_sum += (image.vec() - target.vec()).template cast<double>().cwiseAbs().sum();
    elements += double(image.size());
    ssim_sum += ssim(to_pixel_scale(image), to_pixel_scale(target)) * double(batch.size());
  }
  return {l1_sum / elements, ssim_sum / double(pairs.size())};
}

TrainSummary Trainer::run() {
  const auto& c = config();
  {
    nlohmann::json header;
    header["event"] = "config";
    header["lambda_l1"] = c.lambda_l1;
    header["lambda_adv"] = c.lambda_adv;
    header["lambda_style"] = c.lambda_style;
    header["lambda_per"] = c.lambda_per;
    header["config"] = nlohmann::json::parse(to_json_text(c));
    log_line(header.dump());
  }
  TrainSummary s;
  auto keep = [&s](std::vector<IterationRecord> r) { s.history.insert(s.history.end(), r.begin(), r.end()); };
  const int start_epoch = epoch_;
  while (!model_.at_finest()) {
    while (stage_epoch_ < c.epochs_per_stage) keep(run_epoch());
    save_checkpoint("stage" + std::to_string(model_.active_levels()) + ".hfc");
    grow();
  }
  const bool validate = c.early_stopping || options_.hooks.scripted_validation;
  while (stage_epoch_ < c.max_epochs) {
    keep(run_epoch());
    if (!validate) continue;
    std::optional<double> score;
    if (options_.hooks.scripted_validation) score = options_.hooks.scripted_validation(epoch_ - 1);
    if (!score) score = evaluate(validation_.empty() ? first_n(train_, c.validation_count) : validation_).ssim;
    nlohmann::json v{{"event", "validation"}, {"epoch", epoch_ - 1}, {"ssim", *score}};
    log_line(v.dump());
    if (options_.hooks.on_validation) options_.hooks.on_validation(epoch_ - 1, *score);
    if (stopper_.update(*score) && c.early_stopping) {
      s.early_stopped = true;
      break;
    }
  }
  save_checkpoint("stage" + std::to_string(model_.active_levels()) + ".hfc");
  save_checkpoint("final.hfc");
  s.epochs = epoch_ - start_epoch;
  s.stages = model_.active_levels();
  s.best_validation_ssim = stopper_.best();
  return s;
}

Archive Trainer::checkpoint() const {
  Archive a;
  model_.write_to(a);
  opt_g_.save(a, "opt.G");
  opt_d_.save(a, "opt.D");
  auto& m = a.manifest();
  m["format"] = "haifit-checkpoint";
  m["epoch"] = epoch_;
  m["stage_epoch"] = stage_epoch_;
  m["iteration"] = iteration_;
  m["best_validation_ssim"] = stopper_.best() ? nlohmann::json(*stopper_.best()) : nlohmann::json(nullptr);
  m["evaluations_since_improvement"] = stopper_.since_improvement();
  std::ostringstream rng;
  rng << shuffle_rng_;
  m["shuffle_rng"] = rng.str();
  return a;
}

void Trainer::save_checkpoint(const std::string& name) const {
  if (options_.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(options_.checkpoint_dir);
  checkpoint().save(options_.checkpoint_dir / name);
}

void Trainer::log_line(const std::string& line) const {
  if (options_.log != nullptr) *options_.log << line << '\n' << std::flush;
}

}  // namespace haifit
