#include <doctest.h>

#include "haifit/encoder.hpp"
#include "support.hpp"

using namespace haifit;
using testing::uniform_tensor;

namespace {

using F = Var<float>;

F sketch(Index n, Index m, std::uint64_t seed = 1) { return F(uniform_tensor<float>(Shape{n, 3, m, m}, -1, 1, seed)); }

bool same(const Tensor<float>& a, const Tensor<float>& b) { return a.shape() == b.shape() && a.vec() == b.vec(); }

}  // namespace

TEST_CASE("contour branch reduces resolution by four") {
  Rng rng(1);
  const Mffe<float> enc(rng);
  for (Index m : {16, 32, 64}) CHECK(enc.contour(sketch(2, m)).shape() == Shape{2, 256, m / 4, m / 4});
  CHECK_THROWS_AS(enc.contour(F(Tensor<float>(Shape{1, 1, 32, 32}))), Error);
  try {
    enc.contour(F(Tensor<float>(Shape{1, 1, 32, 32})));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ChannelCount);
  }
  try {
    enc.contour(F(Tensor<float>(Shape{1, 3, 30, 30})));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("sequence split keeps natural order and assemble inverts it") {
  Tensor<float> pooled(Shape{2, 256, 4, 4});
  for (Index i = 0; i < pooled.size(); ++i) pooled[i] = float(i);
  const auto seq = sequence_split(F(pooled));
  REQUIRE(seq.parts.size() == 4);
  for (Index j = 0; j < 4; ++j) {
    const auto& part = seq.parts[std::size_t(j)].value();
    CHECK(part.shape() == Shape{2, 1024, 1, 1});
    // sample 1, chunk j, element 5 is channel 64j + 0, row 1, col 1 of sample 1
    CHECK(part.at(1, 5, 0, 0) == pooled.at(1, 64 * j, 1, 1));
  }
  CHECK(same(sequence_assemble(seq.parts).value(), pooled));

  try {
    sequence_split(F(Tensor<float>(Shape{1, 256, 2, 2})));
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
  try {
    sequence_assemble(std::vector<F>(seq.parts.begin(), seq.parts.begin() + 3));
    FAIL("expected sequence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Sequence);
  }
}

TEST_CASE("level input fusion adds the upsampled coarser image") {
  const auto s = sketch(1, 8, 2);
  CHECK(same(level_input_fuse(s, F()).value(), s.value()));
  const auto prev = sketch(1, 4, 3);
  const auto fused = level_input_fuse(s, prev).value();
  CHECK(fused.at(0, 2, 5, 3) == s.value().at(0, 2, 5, 3) + prev.value().at(0, 2, 2, 1));
  CHECK_THROWS_AS(level_input_fuse(s, sketch(1, 3, 4)), Error);
}

TEST_CASE("reverse branch outputs are realigned to part order") {
  Rng rng(2);
  Mffe<float> enc(rng);
  enc.tie_reverse_to_forward();
  const auto a = F(uniform_tensor<float>(Shape{1, 1024, 1, 1}, -1, 1, 5));
  const auto b = F(uniform_tensor<float>(Shape{1, 1024, 1, 1}, -1, 1, 6));
  // A palindrome reads the same both ways, so with tied weights rev[j] = dir[3 - j].
  const auto out = enc.intent(IntentSequence<float>{{a, b, b, a}});
  for (std::size_t j = 0; j < 4; ++j) CHECK(same(out.rev[j].value(), out.dir[3 - j].value()));
  CHECK(out.feature.shape() == Shape{1, 256, 4, 4});
  CHECK_THROWS_AS(enc.intent(IntentSequence<float>{{a, b}}), Error);
}

TEST_CASE("mffe output is zeta times contour plus upsampled intent") {
  Rng rng(3);
  const Mffe<float> enc(rng);
  const auto s = sketch(1, 32, 7);
  const auto contour = enc.contour(s).value();
  CHECK(same(enc(s, F(), false).value(), contour));

  const auto full = enc(s, F(), true).value();
  CHECK(full.shape() == Shape{1, 256, 8, 8});
  enc.zeta().mutable_value()[0] = 0.0f;
  const auto intent_only = enc(s, F(), true).value();
  enc.zeta().mutable_value()[0] = 2.5f;
  const auto scaled = enc(s, F(), true).value();
  CHECK(((scaled.vec() - intent_only.vec()) - 2.5f * contour.vec()).cwiseAbs().maxCoeff() < 1e-5f);
  CHECK(((full.vec() - intent_only.vec()) - contour.vec()).cwiseAbs().maxCoeff() < 1e-5f);
  // The intent map is constant over each 2x2 block at m/4 = 8.
  CHECK(intent_only.at(0, 17, 2, 4) == intent_only.at(0, 17, 3, 5));
}

TEST_CASE("encoder parameters are named and zeta starts at one") {
  Rng rng(4);
  const Mffe<float> enc(rng);
  ParamList<float> params;
  enc.collect("enc.L1", params);
  std::vector<std::string> names;
  for (const auto& p : params) names.push_back(p.name);
  for (const char* want : {"enc.L1.scm0.weight", "enc.L1.scm2.bias", "enc.L1.afrm.dir.l0.w_ih", "enc.L1.afrm.rev.l1.w_hh",
                           "enc.L1.afrm.reduce.weight", "enc.L1.zeta"}) {
    CHECK(std::find(names.begin(), names.end(), want) != names.end());
  }
  CHECK(enc.zeta().value()[0] == 1.0f);
  CHECK(enc.zeta().requires_grad());
}
