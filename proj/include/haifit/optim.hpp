#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "haifit/archive.hpp"
#include "haifit/nn.hpp"

namespace haifit {

/// Adam with bias correction and a per-parameter step count, so parameters
/// added after growth start their own correction from step one.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Registers parameters not seen before; existing ones keep their state.
  void add(const ParamList<Scalar>& params) {
    for (const auto& p : params) {
      bool known = false;
      for (const auto& s : slots_) known = known || s.name == p.name;
      if (!known) slots_.push_back({p.name, p.var, Tensor<Scalar>(p.var.shape()), Tensor<Scalar>(p.var.shape()), 0});
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t size() const { return slots_.size(); }

  /// Applies one update from the accumulated gradients, then clears them.
  /// Parameters without a gradient are left untouched.
  void step() {
    for (auto& s : slots_) {
      if (!s.var.has_grad()) continue;
      ++s.steps;
      const auto g = s.var.grad().vec().template cast<double>();
      auto& m = s.m.vec();
      auto& v = s.v.vec();
      m = (beta1_ * m.template cast<double>() + (1.0 - beta1_) * g).template cast<Scalar>();
      v = (beta2_ * v.template cast<double>() + (1.0 - beta2_) * g.cwiseAbs2()).template cast<Scalar>();
      const double c1 = 1.0 - std::pow(beta1_, double(s.steps));
      const double c2 = 1.0 - std::pow(beta2_, double(s.steps));
      const double step = lr_ / c1;
      auto& w = s.var.mutable_value().vec();
      w.array() -= (Scalar(step) * m.array()) / ((v.array() / Scalar(c2)).sqrt() + Scalar(eps_));
      s.var.zero_grad();
    }
  }

  void save(Archive& a, const std::string& prefix) const {
    nlohmann::json steps = nlohmann::json::object();
    for (const auto& s : slots_) {
      a.put<Scalar>(prefix + ".m/" + s.name, s.m);
      a.put<Scalar>(prefix + ".v/" + s.name, s.v);
      steps[s.name] = s.steps;
    }
    a.manifest()["optimizer"][prefix] = {{"lr", lr_}, {"steps", steps}};
  }

  /// Restores moments for every registered parameter.
  void load(const Archive& a, const std::string& prefix) {
    const auto& meta = a.manifest().at("optimizer").at(prefix);
    lr_ = meta.at("lr").get<double>();
    for (auto& s : slots_) {
      if (!meta.at("steps").contains(s.name)) throw Error(ErrorKind::Format, "no optimizer state for " + s.name);
      s.steps = meta.at("steps").at(s.name).template get<long>();
      s.m = a.get<Scalar>(prefix + ".m/" + s.name);
      s.v = a.get<Scalar>(prefix + ".v/" + s.name);
    }
  }

 private:
  struct Slot {
    std::string name;
    Var<Scalar> var;
    Tensor<Scalar> m;
    Tensor<Scalar> v;
    long steps = 0;
  };

  double lr_ = 1e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::vector<Slot> slots_;
};

}  // namespace haifit
