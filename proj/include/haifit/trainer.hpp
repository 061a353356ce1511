#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "haifit/data.hpp"
#include "haifit/extractor.hpp"
#include "haifit/losses.hpp"
#include "haifit/model.hpp"
#include "haifit/optim.hpp"

namespace haifit {

/// base * factor^floor(epoch / period), epochs counted from zero.
double learning_rate_at(double base, int epoch, int period, double factor);

/// Stops after `patience` consecutive evaluations without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience = 10) : patience_(patience) {}

  /// Records one evaluation; true means stop now.
  bool update(double score);

  std::optional<double> best() const { return best_; }
  int since_improvement() const { return since_; }
  void restore(std::optional<double> best, int since) {
    best_ = best;
    since_ = since;
  }

 private:
  int patience_;
  std::optional<double> best_;
  int since_ = 0;
};

struct IterationRecord {
  int stage = 0;
  int epoch = 0;
  int iteration = 0;
  double l1 = 0;
  double adv_g = 0;
  double adv_d = 0;
  double style = 0;
  double perceptual = 0;
  double total = 0;
  double lr_generator = 0;
  double lr_discriminator = 0;

  std::string to_json_line() const;
};

enum class Phase { Discriminator, Generator };

/// Observation points used by tests and tools; all optional.
struct TrainHooks {
  std::function<void(Phase, const HaifitModel<float>&)> before_phase;
  std::function<void(Phase, const HaifitModel<float>&)> after_phase;
  std::function<void(const IterationRecord&, const HaifitModel<float>&)> on_iteration;
  std::function<void(const HaifitModel<float>&)> before_growth;
  std::function<void(const HaifitModel<float>&)> after_growth;
  /// Replaces the measured validation SSIM for the given epoch.
  std::function<std::optional<double>(int epoch)> scripted_validation;
  std::function<void(int epoch, double ssim)> on_validation;
};

struct TrainerOptions {
  /// Checkpoints go here after each stage and at the end; empty disables.
  std::filesystem::path checkpoint_dir;
  /// JSON-lines training log; null disables.
  std::ostream* log = nullptr;
  TrainHooks hooks;
};

struct Evaluation {
  double l1 = 0;
  double ssim = 0;
};

struct TrainSummary {
  int epochs = 0;
  int stages = 0;
  bool early_stopped = false;
  std::optional<double> best_validation_ssim;
  std::vector<IterationRecord> history;
};

/// Progressive adversarial training of a HaifitModel<float>.
class Trainer {
 public:
  Trainer(TrainConfig config, FeatureExtractor<float> extractor, std::vector<SketchImagePair> train,
          std::vector<SketchImagePair> validation, TrainerOptions options = {});

  /// Continues from a checkpoint written by `checkpoint()`.
  static Trainer resume(const Archive& checkpoint, FeatureExtractor<float> extractor,
                        std::vector<SketchImagePair> train, std::vector<SketchImagePair> validation,
                        TrainerOptions options = {});

  const HaifitModel<float>& model() const { return model_; }
  const TrainConfig& config() const { return model_.config(); }
  int epoch() const { return epoch_; }
  double lr_generator() const { return opt_g_.lr(); }
  double lr_discriminator() const { return opt_d_.lr(); }

  /// One critic update on `batch`; the generator runs without gradients.
  double discriminator_step(const PyramidBatch& batch);
  /// One generator update on `batch` with the critics frozen.
  LossBreakdown generator_step(const PyramidBatch& batch);

  /// One pass over the training set at the current stage.
  std::vector<IterationRecord> run_epoch();

  /// Adds the next level to generator and critics and registers the new
  /// parameters with the optimizers.
  void grow();

  /// L1 (on [-1, 1]) and SSIM (on [0, 255]) at the finest active level.
  Evaluation evaluate(const std::vector<SketchImagePair>& pairs) const;

  /// Full schedule: epochs_per_stage per coarse stage, then up to
  /// max_epochs at the finest stage with early stopping on validation SSIM.
  TrainSummary run();

  Archive checkpoint() const;

 private:
  void apply_learning_rates();
  void check_finite(const LossBreakdown& b, double d_loss, const PyramidBatch& batch) const;
  void save_checkpoint(const std::string& name) const;
  void log_line(const std::string& line) const;

  HaifitModel<float> model_;
  FeatureExtractor<float> extractor_;
  std::vector<SketchImagePair> train_;
  std::vector<SketchImagePair> validation_;
  TrainerOptions options_;
  PyramidCache cache_;
  Adam<float> opt_g_;
  Adam<float> opt_d_;
  Rng shuffle_rng_;
  EarlyStopper stopper_;
  int epoch_ = 0;
  int stage_epoch_ = 0;
  int iteration_ = 0;
};

}  // namespace haifit
