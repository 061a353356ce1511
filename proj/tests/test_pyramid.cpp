#include <doctest.h>

#include <set>

#include "haifit/pyramid.hpp"
#include "support.hpp"

using namespace haifit;
using testing::uniform_tensor;

namespace {

using F = Var<float>;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("cscm fuse") {
  const F x(uniform_tensor<float>(Shape{1, 2, 3, 3}, -1, 1, 1));
  const F p(uniform_tensor<float>(Shape{1, 2, 3, 3}, -1, 1, 2));
  const auto y = cscm_fuse(x, p, true).value();
  CHECK(y[4] == doctest::Approx(x.value()[4] * (1 + p.value()[4])));
  CHECK(cscm_fuse(x, p, false).value().vec() == x.value().vec());
  CHECK(kind_of([&] { cscm_fuse(x, F(Tensor<float>(Shape{1, 2, 2, 2})), true); }) == ErrorKind::Shape);
}

TEST_CASE("generator level structure and protocol") {
  Rng rng(1);
  const GeneratorLevel<float> g1(1, rng);
  const GeneratorLevel<float> g3(3, rng);
  CHECK(g1.residual_depth() == 4);
  CHECK(g3.residual_depth() == 6);
  const F feat(uniform_tensor<float>(Shape{2, 256, 8, 8}, -1, 1, 3));
  const auto out = g1(feat, F());
  CHECK(out.image.shape() == Shape{2, 3, 32, 32});
  CHECK(out.last_residual.shape() == Shape{2, 256, 8, 8});
  CHECK(out.image.value().vec().cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(kind_of([&] { g3(feat, F()); }) == ErrorKind::Protocol);
  CHECK(kind_of([&] { g1(feat, out.image); }) == ErrorKind::Protocol);
  CHECK(kind_of([&] { g1(F(Tensor<float>(Shape{1, 128, 8, 8})), F()); }) == ErrorKind::ChannelCount);
}

TEST_CASE("pyramid grows one level at a time and traces every level") {
  PyramidGenerator<float> g(ResolutionSchedule({32, 64}), true, true);
  Rng rng(2);
  g.grow(rng);
  const auto s = uniform_tensor<float>(Shape{1, 3, 64, 64}, -1, 1, 4);
  CHECK(kind_of([&] { g.trace(s, 2); }) == ErrorKind::Protocol);
  const auto t1 = g.trace(s, 1);
  REQUIRE(t1.images.size() == 1);
  CHECK(t1.images[0].shape() == Shape{1, 3, 32, 32});

  ParamList<float> before;
  g.collect(before);
  std::vector<Tensor<float>> snapshot;
  for (const auto& p : before) snapshot.push_back(p.var.value());
  g.grow(rng);
  ParamList<float> after;
  g.collect(after);
  CHECK(after.size() > before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i].name == before[i].name);
    CHECK(after[i].var.value().vec() == snapshot[i].vec());
  }
  CHECK(kind_of([&] { g.grow(rng); }) == ErrorKind::Growth);

  const auto t2 = g.trace(s, 2);
  CHECK(t2.encoded[1].shape() == Shape{1, 256, 16, 16});
  CHECK(t2.images[1].shape() == Shape{1, 3, 64, 64});
  // The level-1 image does not depend on level 2.
  CHECK(t2.images[0].value().vec() == t1.images[0].value().vec());
}

TEST_CASE("cscm toggle changes the second level only") {
  PyramidGenerator<float> on(ResolutionSchedule({32, 64}), true, true);
  PyramidGenerator<float> off(ResolutionSchedule({32, 64}), true, false);
  Rng a(9);
  Rng b(9);
  on.grow(a);
  on.grow(a);
  off.grow(b);
  off.grow(b);
  const auto s = uniform_tensor<float>(Shape{1, 3, 64, 64}, -1, 1, 5);
  const auto x = on.trace(s, 2);
  const auto y = off.trace(s, 2);
  CHECK(x.images[0].value().vec() == y.images[0].value().vec());
  CHECK(x.encoded[1].value().vec() == y.encoded[1].value().vec());
  CHECK(x.images[1].value().vec() != y.images[1].value().vec());
}

TEST_CASE("level names follow the documented layout") {
  PyramidGenerator<float> g(ResolutionSchedule({32, 64}), true, true);
  Rng rng(3);
  g.grow(rng);
  g.grow(rng);
  ParamList<float> params;
  g.collect(params);
  std::set<std::string> names;
  for (const auto& p : params) names.insert(p.name);
  CHECK(names.count("gen.L1.res3.weight"));
  CHECK_FALSE(names.count("gen.L1.res4.weight"));
  CHECK(names.count("gen.L2.res4.weight"));
  CHECK(names.count("gen.L2.head2.bias"));
  CHECK(names.count("enc.L2.zeta"));
  CHECK(names.size() == params.size());
}
