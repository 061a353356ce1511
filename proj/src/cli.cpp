#include "haifit/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "haifit/archive.hpp"
#include "haifit/data.hpp"
#include "haifit/image_io.hpp"
#include "haifit/inference.hpp"
#include "haifit/server.hpp"
#include "haifit/trainer.hpp"

namespace haifit {

namespace fs = std::filesystem;

namespace {

/// Dataset split used when --train-count is absent: 2500 of every 3100 pairs.
std::size_t default_train_count(std::size_t total) {
  if (total < 2) return total;
  return std::clamp<std::size_t>(total * 2500 / 3100, 1, total - 1);
}

struct TrainArgs {
  std::string config;
  std::string data_root;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string schedule;
  bool no_afrm = false;
  bool no_cscm = false;
  bool no_early_stop = false;
  std::optional<int> epochs_per_stage;
  std::optional<int> max_epochs;
  std::optional<int> batch_size;
  std::optional<std::size_t> train_count;
  std::string extractor;
};

struct EvalArgs {
  std::string data_root;
  std::string checkpoint;
  std::string out = "report.json";
  std::string split;
  std::string extractor;
};

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
};

struct ServeArgs {
  std::string checkpoint;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_bytes = 8u << 20;
  int max_in_flight = 4;
};

struct SynthArgs {
  std::size_t count = 0;
  std::string out;
  std::uint64_t seed = 0;
  int resolution = 256;
};

FeatureExtractor<float> load_extractor(const std::string& path) {
  return FeatureExtractor<float>::load(path.empty() ? default_extractor_path() : fs::path(path));
}

/// Defaults, then the config file, then flags.
TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config.empty()) c = train_config_from_json_text(read_file(a.config));
  if (a.seed) c.seed = *a.seed;
  if (!a.schedule.empty()) c.schedule = parse_schedule(a.schedule);
  if (a.no_afrm) c.use_afrm = false;
  if (a.no_cscm) c.use_cscm = false;
  if (a.no_early_stop) c.early_stopping = false;
  if (a.epochs_per_stage) c.epochs_per_stage = *a.epochs_per_stage;
  if (a.max_epochs) c.max_epochs = *a.max_epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (!a.extractor.empty()) c.extractor_path = a.extractor;
  c.validate();
  return c;
}

int run_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  const fs::path out(a.out);
  fs::create_directories(out);
  DatasetManifest manifest = scan_dataset(a.data_root);
  const std::size_t train_count = a.train_count.value_or(default_train_count(manifest.ids.size()));
  manifest = split_dataset(std::move(manifest), train_count, config.seed);
  write_file_atomic(out / "split.json", manifest.to_json_text());
  write_file_atomic(out / "config.json", to_json_text(config));

  std::printf("loss weights (l1/adv/style/per): %.1f/%.1f/%.1f/%.1f\n", config.lambda_l1, config.lambda_adv,
              config.lambda_style, config.lambda_per);
  std::printf("schedule %s, %zu training pairs, %zu test pairs\n", config.schedule.to_string().c_str(),
              manifest.train.size(), manifest.test.size());
  std::fflush(stdout);

  const int res = config.schedule.finest();
  std::ofstream log(out / "train_log.jsonl");
  TrainerOptions options;
  options.checkpoint_dir = out;
  options.log = &log;
  Trainer trainer(config, load_extractor(config.extractor_path), load_pairs(manifest, manifest.train, res),
                  load_pairs(manifest, manifest.test, res), std::move(options));
  const TrainSummary s = trainer.run();
  std::printf("trained %d epochs over %d stage(s)%s; parameter hash %s\n", s.epochs, s.stages,
              s.early_stopped ? " (early stop)" : "", trainer.model().parameter_hash().c_str());
  std::printf("checkpoint %s\n", (out / "final.hfc").string().c_str());
  return 0;
}

int run_eval(const EvalArgs& a) {
  const LoadedModel loaded = load_model(a.checkpoint);
  const fs::path split = a.split.empty() ? fs::path(a.checkpoint).parent_path() / "split.json" : fs::path(a.split);
  DatasetManifest manifest = scan_dataset(a.data_root);
  std::vector<std::string> ids = manifest.ids;
  if (fs::exists(split)) {
    const auto saved = DatasetManifest::from_json_text(read_file(split));
    if (!saved.test.empty()) ids = saved.test;
  }
  const auto pairs = load_pairs(manifest, ids, loaded.model.config().schedule.finest());
  const auto extractor = load_extractor(a.extractor.empty() ? loaded.model.config().extractor_path : a.extractor);
  EvaluationResult r = evaluate_model(loaded.model, pairs, extractor);
  r.report.fingerprint = loaded.fingerprint;
  write_file_atomic(a.out, r.report.to_json_text() + "\n");
  std::printf("%s\n", r.report.to_json_text().c_str());
  std::printf("model fingerprint %s\n", loaded.fingerprint.c_str());
  std::printf("inference %.3f ms/image over %zu images\n", r.inference_ms_per_image, pairs.size());
  return 0;
}

int run_infer(const InferArgs& a) {
  const LoadedModel loaded = load_model(a.checkpoint);
  write_file_atomic(a.out, generate_png(loaded.model, read_file(a.input)));
  return 0;
}

int run_serve(ServeArgs a) {
  if (a.checkpoint.empty()) {
    const char* env = std::getenv("HAIFIT_CHECKPOINT");
    if (env == nullptr || *env == '\0') {
      std::cerr << "error: --checkpoint is required (or set HAIFIT_CHECKPOINT)\n";
      return kExitUsage;
    }
    a.checkpoint = env;
  }
  ServiceConfig c;
  c.host = a.host;
  c.port = a.port;
  c.checkpoint = a.checkpoint;
  c.max_bytes = a.max_bytes;
  c.max_in_flight = a.max_in_flight;
  return run_service(c);
}

int run_synth(const SynthArgs& a) {
  const auto m = write_synthetic_dataset(a.out, a.count, a.resolution, a.seed);
  std::printf("wrote %zu pairs to %s\n", m.ids.size(), a.out.c_str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Sketch-to-image generation with multi-scale feature fusion", "haifit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Progressive training on a dataset");
  t->add_option("--config", train.config, "TrainConfig JSON; flags override its values")->check(CLI::ExistingFile);
  t->add_option("--data-root", train.data_root, "Dataset with images/ and sketches/")->required();
  t->add_option("--out", train.out, "Directory for checkpoints and logs")->required();
  t->add_option("--seed", train.seed, "Seed for initialization, split and shuffling");
  t->add_option("--schedule", train.schedule, "Resolutions, coarsest first, e.g. 32,64,128,256");
  t->add_flag("--no-afrm", train.no_afrm, "Drop the intent branch from the encoder");
  t->add_flag("--no-cscm", train.no_cscm, "Disable cross-scale fusion");
  t->add_flag("--no-early-stop", train.no_early_stop, "Run max-epochs at the finest stage");
  t->add_option("--epochs-per-stage", train.epochs_per_stage, "Epochs at each coarse stage");
  t->add_option("--max-epochs", train.max_epochs, "Epoch cap at the finest stage");
  t->add_option("--batch-size", train.batch_size, "Mini-batch size");
  t->add_option("--train-count", train.train_count, "Pairs in the training split");
  t->add_option("--extractor", train.extractor, "Feature extractor archive");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Metrics of a checkpoint on the test split");
  e->add_option("--data-root", eval.data_root, "Dataset with images/ and sketches/")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--out", eval.out, "Report path")->capture_default_str();
  e->add_option("--split", eval.split, "Split file (default: split.json beside the checkpoint)");
  e->add_option("--extractor", eval.extractor, "Feature extractor archive");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Generate one image from one sketch");
  i->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  i->add_option("--input", infer.input, "Sketch PNG")->required()->check(CLI::ExistingFile);
  i->add_option("--out", infer.out, "Output PNG")->required();

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "HTTP inference service");
  s->add_option("--checkpoint", serve.checkpoint, "Checkpoint file (default: $HAIFIT_CHECKPOINT)");
  s->add_option("--host", serve.host, "Bind address")->capture_default_str();
  s->add_option("--port", serve.port, "Port, 0 for any free port")->capture_default_str();
  s->add_option("--max-bytes", serve.max_bytes, "Largest accepted request body")->capture_default_str();
  s->add_option("--max-in-flight", serve.max_in_flight, "Concurrent requests")->capture_default_str();

  SynthArgs synth;
  auto* y = app.add_subcommand("synth-data", "Write synthetic sketch/photo pairs");
  y->add_option("--count", synth.count, "Number of pairs")->required();
  y->add_option("--out", synth.out, "Dataset directory")->required();
  y->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  y->add_option("--resolution", synth.resolution, "Square size in pixels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "usage error: " << ex.what() << " (see --help)\n";
    return kExitUsage;
  }

  try {
    if (*t) return run_train(train);
    if (*e) return run_eval(eval);
    if (*i) return run_infer(infer);
    if (*s) return run_serve(serve);
    if (*y) return run_synth(synth);
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return kExitUsage;
}

}  // namespace haifit
