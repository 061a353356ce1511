#include <doctest.h>

#include <map>

#include "gradient_suite.hpp"

using namespace haifit;

TEST_CASE("analytic gradients match central differences") {
  const std::map<std::string, std::size_t> coordinates{
      {"l1", 64},          {"style", 64},        {"perceptual", 64},   {"feature_style", 32},
      {"adversarial_generator", 32}, {"adversarial_discriminator", 10}, {"mffe_zeta", 1}, {"mffe_weights", 10}};
  const auto results = testing::run_gradient_suite();
  CHECK(results.size() == coordinates.size());
  for (const auto& r : results) {
    INFO(r.name << ": max relative error " << r.check.max_rel_error << ", " << r.check.skipped << " skipped");
    CHECK(r.check.checked == coordinates.at(r.name));
    CHECK(r.check.max_rel_error < 1e-3);
  }
}
