#include "haifit/core.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace haifit {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

ResolutionSchedule::ResolutionSchedule(std::vector<int> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw Error(ErrorKind::Schedule, "schedule has no levels");
  if (!is_power_of_two(levels_.front())) {
    throw Error(ErrorKind::Schedule, "resolution " + std::to_string(levels_.front()) + " is not a power of two");
  }
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    if (levels_[i] != 2 * levels_[i - 1]) {
      throw Error(ErrorKind::Schedule, "level " + std::to_string(i) + " is not double its predecessor");
    }
  }
}

ResolutionSchedule ResolutionSchedule::grown() const {
  auto next = levels_;
  next.push_back(2 * levels_.back());
  return ResolutionSchedule(std::move(next));
}

std::string ResolutionSchedule::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(levels_[i]);
  }
  return out;
}

ResolutionSchedule make_schedule(int coarsest, int finest) {
  if (coarsest <= 0 || finest < coarsest || finest % coarsest != 0 || !is_power_of_two(finest / coarsest)) {
    throw Error(ErrorKind::Schedule, std::to_string(finest) + "/" + std::to_string(coarsest) +
                                         " is not a power-of-two ratio");
  }
  std::vector<int> levels;
  for (int r = coarsest; r <= finest; r *= 2) levels.push_back(r);
  return ResolutionSchedule(std::move(levels));
}

ResolutionSchedule parse_schedule(const std::string& text) {
  std::vector<int> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    item = first == std::string::npos ? std::string() : item.substr(first, last - first + 1);
    try {
      std::size_t used = 0;
      levels.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Schedule, "cannot parse schedule entry '" + item + "'");
    }
  }
  return ResolutionSchedule(std::move(levels));
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw Error(ErrorKind::Configuration, std::string(name) + " must be > 0");
  };
  positive(lambda_l1, "lambda_l1");
  positive(lambda_adv, "lambda_adv");
  positive(lambda_style, "lambda_style");
  positive(lambda_per, "lambda_per");
  positive(lr_generator, "lr_generator");
  positive(lr_discriminator, "lr_discriminator");
  positive(decay_factor, "decay_factor");
  if (batch_size < 1) throw Error(ErrorKind::Configuration, "batch_size must be >= 1");
  if (k_alternation < 1) throw Error(ErrorKind::Configuration, "k_alternation must be >= 1");
  if (early_stop_patience < 1) throw Error(ErrorKind::Configuration, "early_stop_patience must be >= 1");
  if (decay_period_epochs < 1) throw Error(ErrorKind::Configuration, "decay_period_epochs must be >= 1");
  if (epochs_per_stage < 1 || max_epochs < 1) throw Error(ErrorKind::Configuration, "epoch counts must be >= 1");
  if (schedule.coarsest() < 32) {
    throw Error(ErrorKind::Configuration, "coarsest resolution must be at least 32");
  }
}

namespace {

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"lambda_l1", c.lambda_l1},
      {"lambda_adv", c.lambda_adv},
      {"lambda_style", c.lambda_style},
      {"lambda_per", c.lambda_per},
      {"lr_generator", c.lr_generator},
      {"lr_discriminator", c.lr_discriminator},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"batch_size", c.batch_size},
      {"k_alternation", c.k_alternation},
      {"decay_period_epochs", c.decay_period_epochs},
      {"decay_factor", c.decay_factor},
      {"early_stop_patience", c.early_stop_patience},
      {"early_stopping", c.early_stopping},
      {"epochs_per_stage", c.epochs_per_stage},
      {"max_epochs", c.max_epochs},
      {"use_afrm", c.use_afrm},
      {"use_cscm", c.use_cscm},
      {"style_on_features", c.style_on_features},
      {"perceptual_all_levels", c.perceptual_all_levels},
      {"validation_count", c.validation_count},
      {"extractor_path", c.extractor_path},
      {"schedule", c.schedule.levels()},
      {"seed", c.seed},
  };
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string to_json_text(const TrainConfig& config) { return to_json(config).dump(2); }

TrainConfig train_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Configuration, std::string("config is not valid JSON: ") + e.what());
  }
  static const char* known[] = {"lambda_l1",        "lambda_adv",          "lambda_style",      "lambda_per",
                                "lr_generator",     "lr_discriminator",    "adam_beta1",        "adam_beta2",
                                "batch_size",       "k_alternation",       "decay_period_epochs", "decay_factor",
                                "early_stop_patience", "early_stopping",   "epochs_per_stage",  "max_epochs",
                                "use_afrm",         "use_cscm",            "style_on_features", "perceptual_all_levels",
                                "validation_count", "extractor_path",      "schedule",          "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw Error(ErrorKind::Configuration, "unknown config key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    read(j, "lambda_l1", c.lambda_l1);
    read(j, "lambda_adv", c.lambda_adv);
    read(j, "lambda_style", c.lambda_style);
    read(j, "lambda_per", c.lambda_per);
    read(j, "lr_generator", c.lr_generator);
    read(j, "lr_discriminator", c.lr_discriminator);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "batch_size", c.batch_size);
    read(j, "k_alternation", c.k_alternation);
    read(j, "decay_period_epochs", c.decay_period_epochs);
    read(j, "decay_factor", c.decay_factor);
    read(j, "early_stop_patience", c.early_stop_patience);
    read(j, "early_stopping", c.early_stopping);
    read(j, "epochs_per_stage", c.epochs_per_stage);
    read(j, "max_epochs", c.max_epochs);
    read(j, "use_afrm", c.use_afrm);
    read(j, "use_cscm", c.use_cscm);
    read(j, "style_on_features", c.style_on_features);
    read(j, "perceptual_all_levels", c.perceptual_all_levels);
    read(j, "validation_count", c.validation_count);
    read(j, "extractor_path", c.extractor_path);
    read(j, "seed", c.seed);
    if (j.contains("schedule")) c.schedule = ResolutionSchedule(j.at("schedule").get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Configuration, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace haifit
