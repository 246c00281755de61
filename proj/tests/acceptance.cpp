// Acceptance gate. Each test case checks one top-level criterion and prints a
// single [PASS]/[FAIL] line with the measured value next to its bound, so the
// suite's stdout doubles as a summary report.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "hqnoise/commands.hpp"

using namespace hqnoise;

namespace {

template <typename F>
void criterion(const char* name, F&& body) {
  std::ostringstream detail;
  detail << std::setprecision(6);
  bool ok = false;
  std::string err;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    err = e.what();
  }
  std::string msg = detail.str();
  if (!err.empty()) msg += (msg.empty() ? "exception: " : "; exception: ") + err;
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, msg.c_str());
  std::fflush(stdout);
  INFO(name << ": " << msg);
  REQUIRE(ok);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/hqnoise_accept_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

// Well-conditioned random noise levels: sigma_t log-uniform in [0.05, 80],
// sigma_prev strictly below it but bounded away from zero and from sigma_t.
void draw_sigmas(Rng& rng, double& sigma_t, double& sigma_prev) {
  sigma_t = std::exp(std::log(0.05) + rng.uniform() * std::log(80.0 / 0.05));
  sigma_prev = sigma_t * (0.95 - 0.90 * rng.uniform());
}

double weighted_loss(const Batch& out, const Batch& w) {
  double acc = 0.0;
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t j = 0; j < out[i].size(); ++j) acc += out[i][j] * w[i][j];
  return acc;
}

}  // namespace

TEST_CASE("criterion 1: sampler step roundtrip") {
  criterion("1/9 sampler step roundtrip exactness", [](std::ostringstream& d) {
    Rng rng(2026);
    const Shape shape{2, 3, 3};
    double worst = 0.0;
    for (PredictionType kind : {PredictionType::kEpsilon, PredictionType::kVPrediction})
      for (int i = 0; i < 1000; ++i) {
        double sigma_t = 0.0, sigma_prev = 0.0;
        draw_sigmas(rng, sigma_t, sigma_prev);
        const Tensor z = Tensor::randn(shape, rng) * std::sqrt(sigma_t * sigma_t + 1.0);
        const Tensor out = Tensor::randn(shape, rng);
        const Tensor back = invert_step(euler_step(z, out, sigma_t, sigma_prev, kind),
                                        out, sigma_t, sigma_prev, kind);
        worst = std::max(worst, max_abs(back - z) / std::max(1.0, max_abs(z)));
      }
    d << "worst relative deviation " << worst
      << " over 1000 tuples per prediction type (bound 1e-12)";
    return worst < 1e-12;
  });
}

TEST_CASE("criterion 2: injection identity") {
  criterion("2/9 closed-form injection identity", [](std::ostringstream& d) {
    const Shape shape{2, 3, 3};
    bool all_pass = true;
    double worst_rel = 0.0;
    for (PredictionType kind : {PredictionType::kEpsilon, PredictionType::kVPrediction}) {
      Rng draw(kind == PredictionType::kEpsilon ? 901u : 902u);
      for (int trial = 0; trial < 500; ++trial) {
        double sigma_t = 0.0, sigma_prev = 0.0;
        draw_sigmas(draw, sigma_t, sigma_prev);
        const double gamma1 = -2.0 + 10.0 * draw.uniform();
        const double gamma2 =
            gamma1 - (0.2 + 5.8 * draw.uniform()) * (draw.uniform() < 0.5 ? -1.0 : 1.0);
        Rng rng = draw.child(static_cast<uint64_t>(trial));
        const Tensor mu_u = Tensor::randn(shape, rng);
        Tensor diff = Tensor::randn(shape, rng) * 0.5;
        diff += 1.0;
        const MockPredictor mock(mu_u + diff, mu_u);
        const Tensor z = Tensor::randn(shape, rng) * std::sqrt(sigma_t * sigma_t + 1.0);
        const AppendixReport r =
            verify_appendix(z, mock, gamma1, gamma2, sigma_t, sigma_prev, kind);
        all_pass = all_pass && r.pass;
        if (std::isfinite(r.rel_dev)) worst_rel = std::max(worst_rel, r.rel_dev);
      }
    }
    d << "worst relative deviation " << worst_rel
      << " over 500 draws per prediction type (bound 1e-10)";
    return all_pass && worst_rel < 1e-10;
  });
}

TEST_CASE("criterion 3: reference constants") {
  criterion("3/9 reference constants", [](std::ostringstream& d) {
    const SigmaSchedule sched = SigmaSchedule::karras(ScheduleConfig{});
    const double q_dev = std::abs(sched.q() - 700.0007142853499);

    Rng rng(33);
    const Tensor mu_c = Tensor::randn({4, 8, 8}, rng);
    const Tensor mu_u = Tensor::randn({4, 8, 8}, rng);
    const Tensor g0 = combine_cfg(mu_c, mu_u, 0.0);
    bool bitwise = true;
    for (size_t i = 0; i < g0.size(); ++i) bitwise = bitwise && g0[i] == mu_u[i];

    const double lr400 = lr_at_epoch(TrainConfig{}, 400);
    const double lr_dev = std::abs(lr400 - 0.000192);

    d << "schedule q deviation " << q_dev << " (bound 5e-5); zero-guidance output "
      << (bitwise ? "bitwise-equals" : "DIFFERS from") << " the unconditional branch"
      << "; lr at epoch 400 = " << lr400 << " (deviation " << lr_dev << ")";
    return q_dev < 5e-5 && bitwise && lr_dev <= 0.000192 * 1e-12;
  });
}

TEST_CASE("criterion 4: alignment contract") {
  criterion("4/9 alignment contract", [](std::ostringstream& d) {
    Rng rng(44);
    Tensor x = Tensor::randn({4, 16, 16}, rng) * 2.3;
    x += 0.7;
    const Tensor y = align(x, ScalarStats{3.7, 2.5});
    const double dev_mean = std::abs(y.mean() - 3.7);
    const double dev_std = std::abs(y.std_pop() - 2.5);

    const Tensor idem = align(x, ScalarStats{x.mean(), x.std_pop()});
    const double dev_idem = max_abs(idem - x);

    Tensor ab(Shape{2});
    ab[0] = 1.0;
    ab[1] = 3.0;
    const Tensor w = align(ab, ScalarStats{15.0, 5.0});
    const bool example_exact = w[0] == 10.0 && w[1] == 20.0;

    d << "target-stat deviations mean " << dev_mean << " / std " << dev_std
      << " (bound 1e-9); self-alignment deviation " << dev_idem
      << " (bound 1e-12); [1,3] -> [" << w[0] << "," << w[1] << "] (want exactly [10,20])";
    return dev_mean < 1e-9 && dev_std < 1e-9 && dev_idem < 1e-12 && example_exact;
  });
}

TEST_CASE("criterion 5: network gradients") {
  criterion("5/9 network gradient check", [](std::ostringstream& d) {
    EdnConfig cfg;
    cfg.latent = Shape{2, 8, 8};
    cfg.c1 = 8;
    cfg.c2 = 8;
    cfg.c3 = 16;
    EdnModel model(cfg, 21);

    Rng rng(5151);
    Batch x{Tensor::randn({4, 8, 8}, rng), Tensor::randn({4, 8, 8}, rng)};
    const Batch probe = model.forward(x, true);
    Batch w;
    for (const Tensor& t : probe) w.push_back(Tensor::randn(t.shape(), rng));

    std::vector<Parameter*> params = model.params();
    for (Parameter* p : params) p->zero_grad();
    const Batch gin = model.backward(w);

    auto loss = [&]() { return weighted_loss(model.forward(x, true), w); };

    // Deterministic ~1% subsample of parameter scalars plus input scalars.
    std::vector<double*> xs;
    std::vector<double> analytic;
    size_t index = 0;
    for (Parameter* p : params)
      for (size_t j = 0; j < p->value.size(); ++j, ++index)
        if ((index * 0x9E3779B97F4A7C15ull + 21u) % 100 == 0) {
          xs.push_back(&p->value[j]);
          analytic.push_back(p->grad[j]);
        }
    for (size_t j = 0; j < x[0].size(); j += 37) {
      xs.push_back(&x[0][j]);
      analytic.push_back(gin[0][j]);
    }
    const fd::Result r = fd::compare(loss, xs, analytic);
    d << "max relative gradient error " << r.rel() << " over " << xs.size()
      << " probed scalars (bound 1e-5)";
    return xs.size() >= 50 && r.rel() < 1e-5;
  });
}

TEST_CASE("criterion 6: realizable-target training") {
  criterion("6/9 realizable-target training", [](std::ostringstream& d) {
    EdnConfig cfg;
    cfg.latent = Shape{2, 8, 8};
    cfg.c1 = 16;
    cfg.c2 = 16;
    cfg.c3 = 32;
    EdnModel teacher(cfg, 77);

    Rng rng(1234);
    std::vector<NoisePair> data;
    for (int i = 0; i < 64; ++i) {
      NoisePair p;
      p.z_T = Tensor::randn(cfg.latent, rng);
      p.I = Tensor::randn(cfg.latent, rng);
      p.z_tilde_T = p.z_T + teacher.predict(p.z_T, p.I) * 0.5;
      data.push_back(std::move(p));
    }

    EdnModel model(cfg, 9);
    TrainConfig tc;
    tc.epochs = 600;
    tc.seed = 5;
    tc.shuffle = false;
    const TrainResult r = train_edn(model, data, tc);
    const double ratio = r.epoch_loss.back() / r.epoch_loss.front();
    d << "64 pairs, 600 epochs: loss " << r.epoch_loss.front() << " -> "
      << r.epoch_loss.back() << " (" << 100.0 * ratio << "% of initial, bound 1%)";
    return ratio < 0.01;
  });
}

TEST_CASE("criterion 7: end-to-end improvement") {
  criterion("7/9 end-to-end improvement", [](std::ostringstream& d) {
    RunConfig cfg;  // reference schedule: 25 steps, 0.002..700, rho 7
    cfg.world.views = 2;
    cfg.world.latent_shape = Shape{4, 16, 16};
    cfg.collect.seed_begin = 1001;  // training seeds, disjoint from eval 1..200
    cfg.collect.seed_end = 1129;
    cfg.filter_margin = 0.0;
    cfg.edn_c1 = 16;
    cfg.edn_c2 = 16;
    cfg.edn_c3 = 32;
    cfg.seed = 7;
    cfg.workers = 4;

    const ToyWorld world = ToyWorld::make(cfg.world);
    const ToyPredictor pred(world);
    const SigmaSchedule schedule = SigmaSchedule::karras(cfg.schedule);

    CollectOutcome col = collect_batch(world, cfg.collect, schedule, pred, cfg.workers);
    if (!col.failures.empty() || col.pairs.size() != 128) {
      d << "collection failed (" << col.failures.size() << " failures)";
      return false;
    }
    score_pairs(col.pairs, pred, world, schedule, cfg.collect.gamma1, cfg.collect.kind,
                cfg.workers);
    std::vector<NoisePair> kept;
    for (NoisePair& p : col.pairs)
      if (filter_retains(*p.s_rd, *p.s_hq, cfg.filter_margin)) kept.push_back(std::move(p));
    if (kept.empty()) {
      d << "filter retained nothing";
      return false;
    }

    EdnModel model(cfg.edn_config(), cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const TrainResult tr = train_edn(model, kept, tc);

    const int n_eval = 200;
    std::vector<double> s_std(n_eval), s_inv(n_eval), s_edn(n_eval);
    parallel_for(static_cast<size_t>(n_eval), cfg.workers, [&](size_t i) {
      const uint64_t seed = 1 + i;
      s_std[i] = run_infer(seed, InferMode::kStandard, world, cfg.collect, schedule,
                           pred, nullptr)
                     .mean_proxy;
      s_inv[i] = run_infer(seed, InferMode::kInversion, world, cfg.collect, schedule,
                           pred, nullptr)
                     .mean_proxy;
    });
    for (int i = 0; i < n_eval; ++i)
      s_edn[i] = run_infer(1 + static_cast<uint64_t>(i), InferMode::kWithEdn, world,
                           cfg.collect, schedule, pred, &model)
                     .mean_proxy;

    int wins_edn = 0, wins_inv = 0;
    double m_std = 0.0, m_inv = 0.0, m_edn = 0.0;
    for (int i = 0; i < n_eval; ++i) {
      if (s_edn[i] < s_std[i]) ++wins_edn;  // ties count as losses
      if (s_inv[i] < s_std[i]) ++wins_inv;
      m_std += s_std[i];
      m_inv += s_inv[i];
      m_edn += s_edn[i];
    }
    m_std /= n_eval;
    m_inv /= n_eval;
    m_edn /= n_eval;
    const double p_edn = sign_test_p(wins_edn, n_eval);

    d << std::setprecision(8) << "mean proxy over 200 paired seeds: standard " << m_std
      << " | inversion " << m_inv << " (" << wins_inv
      << " wins, reported only) | with network " << m_edn << " (" << wins_edn
      << " wins, p = " << std::setprecision(3) << p_edn
      << ", need strict mean improvement and p < 0.05); " << kept.size()
      << "/128 pairs kept, training loss " << std::setprecision(4)
      << tr.epoch_loss.front() << " -> " << tr.epoch_loss.back();
    return m_edn < m_std && p_edn < 0.05;
  });
}

TEST_CASE("criterion 8: filter semantics") {
  criterion("8/9 filter semantics", [](std::ostringstream& d) {
    const bool tie_drops = !filter_retains(0.5, 0.5, 0.0);
    const bool strict_keeps = filter_retains(std::nextafter(0.5, 1.0), 0.5, 0.0);
    const bool margin_eq_drops = !filter_retains(0.75, 0.5, 0.25);  // 0.5+0.25 exact
    const bool margin_above_keeps = filter_retains(std::nextafter(0.75, 1.0), 0.5, 0.25);
    const std::string rate = format_rate(filtering_rate(359, 1765));

    d << "tie drops: " << (tie_drops ? "yes" : "NO") << "; one-ulp win keeps: "
      << (strict_keeps ? "yes" : "NO") << "; margin boundary drops: "
      << (margin_eq_drops ? "yes" : "NO") << "; above margin keeps: "
      << (margin_above_keeps ? "yes" : "NO") << "; 359/1765 formats to \"" << rate
      << "\" (want \"20.34\")";
    return tie_drops && strict_keeps && margin_eq_drops && margin_above_keeps &&
           rate == "20.34";
  });
}

TEST_CASE("criterion 9: determinism") {
  criterion("9/9 determinism", [](std::ostringstream& d) {
    RunConfig cfg;
    cfg.schedule = ScheduleConfig{6, 0.05, 12.0, 7.0};
    cfg.world.latent_shape = Shape{2, 16, 16};
    cfg.world.views = 3;
    cfg.world.pattern_seed = 17;
    cfg.collect.n = 4;
    cfg.collect.gamma1 = CfgSchedule::triangular(4.0, 1.5);
    cfg.collect.seed_begin = 1;
    cfg.collect.seed_end = 9;
    cfg.train.epochs = 6;
    cfg.train.batch = 4;
    cfg.edn_c1 = 4;
    cfg.edn_c2 = 4;
    cfg.edn_c3 = 8;
    cfg.seed = 5;
    cfg.workers = 1;

    TempFile p1("det_1.ednp"), p2("det_2.ednp"), p4("det_4.ednp");
    std::ostringstream log;
    cmd_collect(cfg, p1.path, log);
    cmd_collect(cfg, p2.path, log);
    RunConfig par = cfg;
    par.workers = 4;
    cmd_collect(par, p4.path, log);
    const bool pairs_rerun = slurp(p1.path) == slurp(p2.path);
    const bool pairs_parallel = slurp(p1.path) == slurp(p4.path);

    TempFile ck1("det_1.ednm"), ck2("det_2.ednm"), csv1("det_1.csv"), csv2("det_2.csv");
    cmd_train(cfg, p1.path, ck1.path, csv1.path, log);
    cmd_train(cfg, p1.path, ck2.path, csv2.path, log);
    const bool csv_rerun = slurp(csv1.path) == slurp(csv2.path);
    const bool ckpt_rerun = slurp(ck1.path) == slurp(ck2.path);

    d << "pair file rerun " << (pairs_rerun ? "identical" : "DIFFERS")
      << ", serial vs 4 workers " << (pairs_parallel ? "identical" : "DIFFERS")
      << "; training CSV rerun " << (csv_rerun ? "identical" : "DIFFERS")
      << ", checkpoint rerun " << (ckpt_rerun ? "identical" : "DIFFERS");
    return pairs_rerun && pairs_parallel && csv_rerun && ckpt_rerun;
  });
}
