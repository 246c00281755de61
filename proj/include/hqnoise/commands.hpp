#pragma once
// The five pipeline commands, shared by the command-line front-end and the
// tests. Commands log to the provided stream, write their artifacts to
// explicit paths, and signal failures through the error taxonomy; the
// front-end maps error classes to exit codes.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "pipeline.hpp"
#include "theory.hpp"

namespace hqnoise {

// Collect pairs over the configured seed range and persist them. Failures are
// isolated per seed and listed in the log.
inline CollectOutcome cmd_collect(const RunConfig& cfg, const std::string& out_path,
                                  std::ostream& log) {
  cfg.validate();
  const ToyWorld world = ToyWorld::make(cfg.world);
  const ToyPredictor pred(world);
  const SigmaSchedule schedule = SigmaSchedule::karras(cfg.schedule);
  log << "collect: seeds [" << cfg.collect.seed_begin << ", " << cfg.collect.seed_end
      << "), n = " << cfg.collect.n << ", gamma1 " << cfg.collect.gamma1.gamma_front
      << " -> " << cfg.collect.gamma1.gamma_back << ", gamma2 = " << cfg.collect.gamma2
      << ", prediction = " << to_string(cfg.collect.kind) << ", q = ";
  {
    const std::streamsize p = log.precision(10);
    log << schedule.q();
    log.precision(p);
  }
  log << ", workers = " << cfg.workers << "\n";

  CollectOutcome outcome = collect_batch(world, cfg.collect, schedule, pred, cfg.workers);
  write_pairs(out_path, outcome.pairs, world.latent_shape());
  log << "collect: wrote " << outcome.pairs.size() << " pairs to " << out_path << "\n";
  for (const auto& [seed, what] : outcome.failures)
    log << "collect: seed " << seed << " failed: " << what << "\n";
  return outcome;
}

struct FilterReport {
  size_t retained = 0;
  size_t total = 0;
  size_t skipped = 0;  // records lacking scores in external-score mode
  std::string rate;    // two-decimal percentage
};

namespace detail {

// External score table: whitespace-separated "seed s_rd s_hq" lines; blank
// lines and lines starting with '#' are ignored.
inline std::map<uint64_t, std::pair<double, double>> read_score_table(
    const std::string& path, std::ostream& log) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open score file '" + path + "'");
  std::map<uint64_t, std::pair<double, double>> table;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    uint64_t seed = 0;
    double s_rd = 0.0, s_hq = 0.0;
    if (!(ss >> seed >> s_rd >> s_hq)) {
      log << "filter: warning: skipping unparseable score line " << lineno << "\n";
      continue;
    }
    table[seed] = {s_rd, s_hq};
  }
  return table;
}

}  // namespace detail

// Keep the pairs whose enriched noise scored better by more than the margin.
// With an empty scores_path the toy scorer generates from both noises; with a
// score file, records without an entry are skipped with a warning.
inline FilterReport cmd_filter(const RunConfig& cfg, const std::string& in_path,
                               const std::string& out_path, const std::string& scores_path,
                               std::ostream& log) {
  cfg.validate();
  std::vector<NoisePair> pairs = read_pairs(in_path);
  const ToyWorld world = ToyWorld::make(cfg.world);
  if (!pairs.empty() && pairs.front().z_T.shape() != world.latent_shape())
    throw ConfigError("filter: dataset latent " + shape_str(pairs.front().z_T.shape()) +
                      " does not match world latent " + shape_str(world.latent_shape()));

  FilterReport rep;
  rep.total = pairs.size();
  std::vector<NoisePair> kept;
  if (scores_path.empty()) {
    const ToyPredictor pred(world);
    const SigmaSchedule schedule = SigmaSchedule::karras(cfg.schedule);
    score_pairs(pairs, pred, world, schedule, cfg.collect.gamma1, cfg.collect.kind,
                cfg.workers);
  } else {
    const auto table = detail::read_score_table(scores_path, log);
    for (NoisePair& p : pairs) {
      const auto it = table.find(p.seed);
      if (it == table.end()) {
        p.s_rd.reset();
        p.s_hq.reset();
      } else {
        p.s_rd = it->second.first;
        p.s_hq = it->second.second;
      }
    }
  }
  for (NoisePair& p : pairs) {
    if (!p.s_rd || !p.s_hq) {
      ++rep.skipped;
      log << "filter: warning: seed " << p.seed << " has no scores, skipping\n";
      continue;
    }
    if (filter_retains(*p.s_rd, *p.s_hq, cfg.filter_margin)) kept.push_back(std::move(p));
  }
  rep.retained = kept.size();
  rep.rate = rep.total == 0 ? "0.00" : format_rate(filtering_rate(rep.retained, rep.total));
  write_pairs(out_path, kept, world.latent_shape());
  log << "filter: retained " << rep.retained << "/" << rep.total << " (" << rep.rate
      << "%), margin " << cfg.filter_margin << "\n";
  if (rep.skipped > 0) log << "filter: skipped " << rep.skipped << " unscored records\n";
  return rep;
}

// Train the network on a pair file; writes the checkpoint and the per-epoch
// loss CSV. The master seed drives initialization and the shuffle stream.
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& in_path,
                             const std::string& ckpt_path, const std::string& csv_path,
                             std::ostream& log) {
  cfg.validate();
  const std::vector<NoisePair> pairs = read_pairs(in_path);
  if (pairs.empty()) throw DataError("train: dataset '" + in_path + "' has no records");
  EdnModel model(cfg.edn_config(), cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  log << "train: " << pairs.size() << " pairs, " << tc.epochs << " epochs, batch "
      << tc.batch << ", lr " << tc.lr << " (decay " << tc.decay << " every "
      << tc.decay_every << "), seed " << cfg.seed << "\n";
  TrainResult result = train_edn(model, pairs, tc);
  save_edn(model, ckpt_path);
  write_loss_csv(csv_path, result);
  log << "train: final mean loss " << result.epoch_loss.back() << ", checkpoint "
      << ckpt_path << ", losses " << csv_path << "\n";
  return result;
}

// Run one object seed under the requested mode and export per-view metrics.
inline InferReport cmd_infer(const RunConfig& cfg, InferMode mode, uint64_t seed,
                             const std::string& ckpt_path, const std::string& csv_path,
                             std::ostream& log) {
  cfg.validate();
  if (mode == InferMode::kWithEdn && ckpt_path.empty())
    throw ConfigError("infer: with-edn mode requires --checkpoint");
  if (mode != InferMode::kWithEdn && !ckpt_path.empty())
    throw ConfigError("infer: --checkpoint is only meaningful in with-edn mode");
  const ToyWorld world = ToyWorld::make(cfg.world);
  const ToyPredictor pred(world);
  const SigmaSchedule schedule = SigmaSchedule::karras(cfg.schedule);
  EdnModel* edn = nullptr;
  std::optional<EdnModel> loaded;
  if (mode == InferMode::kWithEdn) {
    loaded.emplace(load_edn(ckpt_path));
    edn = &*loaded;
  }
  InferReport rep = run_infer(seed, mode, world, cfg.collect, schedule, pred, edn);
  if (!csv_path.empty()) write_metrics_csv(csv_path, rep);
  log << "infer: mode " << to_string(mode) << ", seed " << seed << ", mean proxy "
      << rep.mean_proxy << (csv_path.empty() ? "" : ", metrics " + csv_path) << "\n";
  return rep;
}

// Identity-verification battery: pinned single-step examples, random draws,
// and an n-step run on the configured schedule, for both prediction types.
// Writes the plain-text report and the JSON summary; returns overall pass.
inline bool cmd_verify(const RunConfig& cfg, const std::string& text_path,
                       const std::string& json_path, std::ostream& log) {
  cfg.validate();
  std::vector<AppendixReport> reports;
  const Shape shape{2, 4, 4};
  for (PredictionType kind : {PredictionType::kEpsilon, PredictionType::kVPrediction}) {
    Rng draw(cfg.seed ^ (kind == PredictionType::kEpsilon ? 0x65707300ull : 0x76707200ull));
    // Pinned example: gammas 6 / 0 across sigma 2 -> 1.
    {
      Rng rng = draw.child(1);
      Tensor mu_u = Tensor::randn(shape, rng);
      MockPredictor mock(mu_u + 0.5, mu_u);
      Tensor z = Tensor::randn(shape, rng) * std::sqrt(5.0);
      reports.push_back(verify_appendix(z, mock, 6.0, 0.0, 2.0, 1.0, kind));
    }
    // Random well-conditioned single steps.
    for (int trial = 0; trial < 100; ++trial) {
      const double sigma_t =
          std::exp(std::log(0.05) + draw.uniform() * std::log(80.0 / 0.05));
      const double sigma_prev = sigma_t * (0.95 - 0.90 * draw.uniform());
      const double gamma1 = -2.0 + 10.0 * draw.uniform();
      const double gamma2 =
          gamma1 - (0.2 + 5.8 * draw.uniform()) * (draw.uniform() < 0.5 ? -1.0 : 1.0);
      Rng rng = draw.child(1000 + static_cast<uint64_t>(trial));
      Tensor mu_u = Tensor::randn(shape, rng);
      Tensor diff = Tensor::randn(shape, rng) * 0.5;
      diff += 1.0;
      MockPredictor mock(mu_u + diff, mu_u);
      Tensor z = Tensor::randn(shape, rng) * std::sqrt(sigma_t * sigma_t + 1.0);
      reports.push_back(
          verify_appendix(z, mock, gamma1, gamma2, sigma_t, sigma_prev, kind));
    }
    // n-step telescoping on the configured schedule.
    {
      const SigmaSchedule schedule = SigmaSchedule::karras(cfg.schedule);
      const int n = std::min(cfg.collect.n, schedule.max_timestep());
      Rng rng = draw.child(2);
      Tensor mu_u = Tensor::randn(shape, rng);
      MockPredictor mock(mu_u + 0.75, mu_u);
      Tensor z = initial_noise(shape, cfg.seed + 17, schedule.q());
      reports.push_back(verify_appendix_schedule(z, mock, cfg.collect.gamma1.gamma_front,
                                                 cfg.collect.gamma2, schedule, n, kind));
    }
  }

  bool all_pass = true;
  double worst_rel = 0.0;
  for (const AppendixReport& r : reports) {
    all_pass = all_pass && r.pass;
    if (std::isfinite(r.rel_dev)) worst_rel = std::max(worst_rel, r.rel_dev);
  }

  if (!text_path.empty()) {
    std::ofstream os(text_path);
    if (!os) throw IoError("cannot open report file '" + text_path + "'");
    os << "identity verification: " << reports.size() << " checks, "
       << (all_pass ? "all passed" : "FAILURES PRESENT") << "\n"
       << "worst finite relative deviation: " << worst_rel << "\n\n";
    for (const AppendixReport& r : reports)
      if (!r.pass) os << r.text() << "\n";  // full diagnostics for failures
    // Always include one representative report per prediction type.
    os << reports.front().text();
    os << reports.back().text();
    if (!os) throw IoError("failed writing report file '" + text_path + "'");
  }
  if (!json_path.empty()) {
    nlohmann::json j;
    j["pass"] = all_pass;
    j["checks"] = reports.size();
    j["worst_rel_dev"] = worst_rel;
    j["failures"] = nlohmann::json::array();
    for (const AppendixReport& r : reports)
      if (!r.pass) j["failures"].push_back(nlohmann::json::parse(r.json_summary()));
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot open summary file '" + json_path + "'");
    os << j.dump(2) << "\n";
    if (!os) throw IoError("failed writing summary file '" + json_path + "'");
  }
  log << "verify: " << reports.size() << " checks, worst relative deviation " << worst_rel
      << ", " << (all_pass ? "pass" : "FAIL") << "\n";
  return all_pass;
}

}  // namespace hqnoise
