#pragma once

#include <set>
#include <sstream>
#include <string>

#include "haifit/archive.hpp"
#include "haifit/critic.hpp"
#include "haifit/pyramid.hpp"

namespace haifit {

inline constexpr int kCheckpointVersion = 1;

/// Generator pyramid, critics, configuration and the random stream used for
/// growth, with a fixed naming of every parameter.
template <typename Scalar>
class HaifitModel {
 public:
  explicit HaifitModel(TrainConfig config)
      : config_(std::move(config)),
        rng_(config_.seed),
        generator_(config_.schedule, config_.use_afrm, config_.use_cscm),
        critics_(config_.schedule) {
    config_.validate();
    grow();
  }

  const TrainConfig& config() const { return config_; }
  const PyramidGenerator<Scalar>& generator() const { return generator_; }
  const Critics<Scalar>& critics() const { return critics_; }
  int active_levels() const { return generator_.level_count(); }
  bool at_finest() const { return active_levels() == static_cast<int>(config_.schedule.size()); }
  int active_resolution() const { return config_.schedule[std::size_t(active_levels() - 1)]; }

  /// Adds the next generator level and its critic.
  void grow() {
    generator_.grow(rng_);
    critics_.grow(rng_);
  }

  ParamList<Scalar> generator_params() const {
    ParamList<Scalar> out;
    generator_.collect(out);
    return out;
  }
  ParamList<Scalar> critic_params() const {
    ParamList<Scalar> out;
    critics_.collect(out);
    return out;
  }
  ParamList<Scalar> all_params() const {
    auto out = generator_params();
    auto c = critic_params();
    out.insert(out.end(), c.begin(), c.end());
    return out;
  }

  /// SHA-256 over every parameter name and its float32 bytes, in name order.
  std::string parameter_hash() const {
    Archive a;
    for (const auto& p : all_params()) a.put<float>(p.name, p.var.value().template cast<float>());
    return sha256_hex(a.serialize());
  }

  /// Parameters under their names plus the manifest fields needed to rebuild.
  void write_to(Archive& a) const {
    a.manifest()["format"] = "haifit-model";
    a.manifest()["version"] = kCheckpointVersion;
    a.manifest()["config"] = nlohmann::json::parse(to_json_text(config_));
    a.manifest()["active_levels"] = active_levels();
    std::ostringstream rng;
    rng << rng_;
    a.manifest()["rng"] = rng.str();
    for (const auto& p : all_params()) a.put<Scalar>(p.name, p.var.value());
  }

  static HaifitModel read_from(const Archive& a) {
    const auto& m = a.manifest();
    if (!m.contains("format") || !m.contains("config") || !m.contains("active_levels")) {
      throw Error(ErrorKind::Format, "archive does not hold a model");
    }
    if (m.value("version", 0) != kCheckpointVersion) {
      throw Error(ErrorKind::Format, "unsupported model version " + m.at("version").dump());
    }
    HaifitModel model(train_config_from_json_text(m.at("config").dump()));
    const int levels = m.at("active_levels").get<int>();
    if (levels < 1 || levels > static_cast<int>(model.config_.schedule.size())) {
      throw Error(ErrorKind::Format, "active_levels " + std::to_string(levels) + " outside the schedule");
    }
    while (model.active_levels() < levels) model.grow();
    for (const auto& p : model.all_params()) {
      if (!a.contains(p.name)) throw Error(ErrorKind::Format, "checkpoint is missing parameter " + p.name);
      Tensor<Scalar> t = a.get<Scalar>(p.name);
      if (!(t.shape() == p.var.shape())) {
        throw Error(ErrorKind::Shape, "parameter " + p.name + " has shape " + to_string(t.shape()) + ", expected " +
                                          to_string(p.var.shape()));
      }
      p.var.mutable_value() = std::move(t);
    }
    std::istringstream rng(m.at("rng").get<std::string>());
    rng >> model.rng_;
    if (!rng) throw Error(ErrorKind::Format, "bad random state in checkpoint");
    return model;
  }

 private:
  TrainConfig config_;
  Rng rng_;
  PyramidGenerator<Scalar> generator_;
  Critics<Scalar> critics_;
};

}  // namespace haifit
