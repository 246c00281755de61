// Command-line front-end for the high-quality-noise pipeline. Subcommands:
//   collect  - run guided inference + inversion over a seed range, write pairs
//   filter   - keep pairs whose enriched noise generates better, write subset
//   train    - fit the encoder-decoder network, write checkpoint + loss CSV
//   infer    - generate an orbit under a mode, write per-view metrics CSV
//   verify   - run the identity-verification battery, write reports
// Exit codes: 0 success; 2 configuration/argument error; 3 I/O or file-format
// error; 4 verification failure; 5 training failure.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hqnoise/commands.hpp"

namespace {

using namespace hqnoise;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitVerify = 4;
constexpr int kExitTraining = 5;

struct CliArgs {
  std::string config;
  std::string in;
  std::string out;
  std::string scores;
  std::string checkpoint;
  std::string csv;
  std::string json;
  std::string mode = "standard";
  uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  bool workers_set = false;
};

// Resolution order for the worker count: --workers flag, then the
// HQNOISE_WORKERS environment variable, then the config file value.
int resolve_workers(const CliArgs& a, const RunConfig& cfg) {
  if (a.workers_set) return a.workers;
  if (const char* env = std::getenv("HQNOISE_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("HQNOISE_WORKERS must be a positive integer, got '" +
                        std::string(env) + "'");
    return static_cast<int>(v);
  }
  return cfg.workers;
}

RunConfig resolve_config(const CliArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  cfg.workers = resolve_workers(a, cfg);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CliArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file (defaults: reference profile)");
  cmd->add_option("--seed", a.seed, "master seed override")
      ->each([&a](const std::string&) { a.seed_set = true; });
  cmd->add_option("--workers", a.workers, "worker count override")
      ->each([&a](const std::string&) { a.workers_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"high-quality-noise pipeline for desk-scale novel view synthesis"};
  app.require_subcommand(1);
  CliArgs a;

  CLI::App* collect = app.add_subcommand("collect", "collect noise pairs over a seed range");
  add_common(collect, a);
  collect->add_option("--out", a.out, "output pair file (EDNP)")->required();

  CLI::App* filter = app.add_subcommand("filter", "keep pairs that beat their random noise");
  add_common(filter, a);
  filter->add_option("--in", a.in, "input pair file")->required();
  filter->add_option("--out", a.out, "output pair file")->required();
  filter->add_option("--scores", a.scores,
                     "external score table ('seed s_rd s_hq' lines); default: toy scorer");

  CLI::App* train = app.add_subcommand("train", "train the encoder-decoder network");
  add_common(train, a);
  train->add_option("--in", a.in, "input pair file")->required();
  train->add_option("--out", a.out, "output checkpoint (EDNM)")->required();
  train->add_option("--csv", a.csv, "loss CSV path (default: <out>.losses.csv)");

  CLI::App* infer = app.add_subcommand("infer", "generate an orbit and score it");
  add_common(infer, a);
  infer->add_option("--mode", a.mode, "standard | inversion | with-edn");
  infer->add_option("--checkpoint", a.checkpoint, "checkpoint for with-edn mode");
  infer->add_option("--out", a.out, "per-view metrics CSV")->required();

  CLI::App* verify = app.add_subcommand("verify", "run the identity-verification battery");
  add_common(verify, a);
  verify->add_option("--out", a.out, "text report path");
  verify->add_option("--json", a.json, "JSON summary path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (collect->parsed()) {
      cmd_collect(resolve_config(a), a.out, std::cout);
    } else if (filter->parsed()) {
      cmd_filter(resolve_config(a), a.in, a.out, a.scores, std::cout);
    } else if (train->parsed()) {
      const std::string csv = a.csv.empty() ? a.out + ".losses.csv" : a.csv;
      cmd_train(resolve_config(a), a.in, a.out, csv, std::cout);
    } else if (infer->parsed()) {
      const RunConfig cfg = resolve_config(a);
      const InferMode mode = a.mode.empty() ? cfg.infer_mode : infer_mode_from(a.mode);
      const uint64_t seed = a.seed_set ? a.seed : cfg.seed;
      cmd_infer(cfg, mode, seed, a.checkpoint, a.out, std::cout);
    } else if (verify->parsed()) {
      const std::string text = a.out.empty() ? "verify_report.txt" : a.out;
      const std::string json = a.json.empty() ? text + ".json" : a.json;
      if (!cmd_verify(resolve_config(a), text, json, std::cout)) {
        std::cerr << "verify: identity checks failed, see " << text << "\n";
        return kExitVerify;
      }
    }
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const VerificationError& e) {
    std::cerr << "verification error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ProtocolError& e) {
    std::cerr << "file-format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
