#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <json.hpp>

#include "haifit/image_io.hpp"
#include "haifit/inference.hpp"
#include "support.hpp"

using namespace haifit;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HAIFIT_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  Run r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  const auto bad = run("train --out x");
  CHECK(bad.code == 2);
  CHECK(bad.output.find("usage error") != std::string::npos);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("synthetic data, training, evaluation and inference") {
  testing::TempDir dir;
  const auto data = dir.path() / "data";
  const auto out = dir.path() / "run";
  const auto synth = run("synth-data --count 6 --resolution 32 --seed 4 --out " + q(data));
  REQUIRE(synth.code == 0);
  const auto manifest = scan_dataset(data);
  CHECK(manifest.ids.size() == 6);

  const auto train = run("train --data-root " + q(data) + " --out " + q(out) +
                         " --schedule 32 --max-epochs 1 --batch-size 2 --no-early-stop --seed 1");
  INFO(train.output);
  REQUIRE(train.code == 0);
  CHECK(train.output.find("loss weights (l1/adv/style/per): 1.5/10.0/250.0/0.1") != std::string::npos);
  CHECK(std::filesystem::exists(out / "final.hfc"));
  CHECK(std::filesystem::exists(out / "split.json"));
  CHECK(std::filesystem::exists(out / "train_log.jsonl"));

  const auto report = dir.path() / "report.json";
  const auto ev = run("eval --data-root " + q(data) + " --checkpoint " + q(out / "final.hfc") + " --out " + q(report));
  INFO(ev.output);
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(read_file(report));
  for (const char* k : {"psnr_db", "ssim", "lpips", "fid", "n"}) CHECK(j.contains(k));
  CHECK(j["fid"].is_null());
  CHECK(ev.output.find("model fingerprint") != std::string::npos);

  const auto sketch = manifest.sketch_path(manifest.ids.front());
  const auto png = dir.path() / "out.png";
  const auto inf = run("infer --checkpoint " + q(out / "final.hfc") + " --input " + q(sketch) + " --out " + q(png));
  REQUIRE(inf.code == 0);
  CHECK(read_file(png) == generate_png(load_model(out / "final.hfc").model, read_file(sketch)));

  const auto broken = dir.path() / "broken.hfc";
  write_file_atomic(broken, "nope");
  const auto err = run("infer --checkpoint " + q(broken) + " --input " + q(sketch) + " --out " + q(png));
  CHECK(err.code == 1);
  CHECK(err.output.rfind("error: ", 0) == 0);
}

TEST_CASE("serve without a checkpoint is a usage error") {
  CHECK(run("serve").code == 2);
}
