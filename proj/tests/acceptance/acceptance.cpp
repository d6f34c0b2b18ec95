// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cdl/app.hpp"
#include "cdl/checkpoint.hpp"
#include "cdl/config.hpp"
#include "cdl/coupling.hpp"
#include "cdl/linalg.hpp"
#include "cdl/ranking.hpp"
#include "cdl/trainer.hpp"
#include "test_support.hpp"

using namespace cdl;
using cdl::testing::numeric_gradient;
using cdl::testing::random_matrix;
using cdl::testing::rel_error;
using cdl::testing::uniform_int;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CoupledHeads random_heads(int m, int c, Rng& rng, double lambda, double mu) {
  CoupledHeads h;
  h.w_n = random_matrix(m, c, rng, 1.0 / std::sqrt(double(m)));
  h.w_v = random_matrix(m, c, rng, 1.0 / std::sqrt(double(m)));
  h.params.lambda = lambda;
  h.params.mu = mu;
  refresh_gamma(h);
  return h;
}

// Random SPD matrix, eigenvalues in [0.5, 2.5].
Matrix random_spd(int m, Rng& rng) {
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(m, m, rng)).householderQ();
  Vector d(m);
  for (int i = 0; i < m; ++i) d(i) = 0.5 + 2.0 * std::uniform_real_distribution<double>()(rng);
  return q * d.asDiagonal() * q.transpose();
}

// 1. trace_norm(M) against 1/2 tr(M^T G^-1 M) + 1/2 tr(G) with G = psd_sqrt(M M^T, 0).
Outcome variational_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst = 0.0;
  int checked = 0;
  while (checked < 200) {
    // rows <= cols keeps M M^T invertible for full-rank M.
    const int rows = uniform_int(rng, 1, 10);
    const int cols = uniform_int(rng, rows, 10);
    const Matrix m = random_matrix(rows, cols, rng);
    if (Eigen::FullPivLU<Matrix>(m).rank() < rows) continue;
    const double tn = trace_norm(m);
    const Matrix g = psd_sqrt(m * m.transpose(), 0.0);
    const double bound = 0.5 * (m.transpose() * spd_inverse(g) * m).trace() + 0.5 * g.trace();
    worst = std::max(worst, std::abs(tn - bound) / std::max(1.0, tn));
    ++checked;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 5.0,
          fmt("200 matrices, worst |tn - bound| / max(1, tn) = %.3g (tol 1e-6), %.2f s", worst, secs)};
}

// 2. Central differences against every analytic gradient.
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1002);
  constexpr int kInstances = 20;
  double worst_softmax = 0, worst_r1 = 0, worst_r2 = 0, worst_triplet = 0, worst_combined = 0;
  int triplet_instances = 0, combined_instances = 0;

  for (int i = 0; i < kInstances; ++i) {
    const int m = uniform_int(rng, 2, 6), c = uniform_int(rng, 2, 5);
    CoupledHeads h = random_heads(m, c, rng, 0.3, 1e-3);
    const cdl::testing::ToyBatch b = cdl::testing::toy_batch(std::min(c, 3), 2, m, c, rng);
    Matrix emb = b.x;
    auto soft = [&] { return softmax_loss(h, emb, b.labels, b.modalities).loss; };
    const SoftmaxResult s = softmax_loss(h, emb, b.labels, b.modalities);
    worst_softmax = std::max({worst_softmax, rel_error(s.d_w_n, numeric_gradient(soft, h.w_n)),
                              rel_error(s.d_w_v, numeric_gradient(soft, h.w_v)),
                              rel_error(s.d_embeddings, numeric_gradient(soft, emb))});

    h.gamma = random_spd(m, rng);
    const HeadGrads r1 = r1_grads(h);
    auto r1f = [&] { return r1_value(h); };
    worst_r1 = std::max({worst_r1, rel_error(r1.d_w_n, numeric_gradient(r1f, h.w_n)),
                         rel_error(r1.d_w_v, numeric_gradient(r1f, h.w_v))});

    const R2Result r2 = r2_value_and_grads(h);
    auto r2f = [&] { return r2_value_and_grads(h).value; };
    worst_r2 = std::max({worst_r2, rel_error(r2.d_w_n, numeric_gradient(r2f, h.w_n)),
                         rel_error(r2.d_w_v, numeric_gradient(r2f, h.w_v))});
  }

  // Triplet loss: instances with at least one triplet, and no hinge within
  // 1e-3 of its kink so central differences stay on one side.
  while (triplet_instances < kInstances) {
    const cdl::testing::ToyBatch b = cdl::testing::toy_batch(3, 2, 4, 6, rng);
    Matrix emb = normalize_rows(b.x);
    const std::vector<Triplet> ts = mine_triplets(emb, b.labels, b.modalities, {0.8, 4});
    bool near_kink = false;
    for (const Triplet& t : ts) {
      const double hinge = 0.8 + squared_distance(emb, t.anchor, t.positive) -
                           squared_distance(emb, t.anchor, t.negative);
      near_kink |= std::abs(hinge) < 1e-3;
    }
    if (ts.empty() || near_kink) continue;
    auto f = [&] { return triplet_loss(emb, ts, 0.8).loss; };
    const TripletLossResult r = triplet_loss(emb, ts, 0.8);
    worst_triplet = std::max(worst_triplet, rel_error(r.d_embeddings, numeric_gradient(f, emb)));
    ++triplet_instances;
  }

  // Full objective at a mid-ramp iteration, mining inside every evaluation.
  const std::vector<LayerSpec> specs{{8, 12, Activation::max_feature_map},
                                     {6, 10, Activation::rectifier},
                                     {10, 5, Activation::identity}};
  while (combined_instances < kInstances) {
    TrainConfig c;
    c.iterations = 10;
    c.heads.lambda = 0.2;
    c.heads.mu = 1e-3;
    c.heads.alpha2 = 0.05;
    c.ranking.margin = 1.0;
    c.seed = 5000 + std::uint64_t(combined_instances);
    TrainState s = init_state(specs, 8, c);
    s.iteration = 5;
    refresh_gamma(s.heads);
    const Batch batch = cdl::testing::to_batch(cdl::testing::toy_batch(3, 2, 8, 8, rng));
    const ObjectiveWeights w{c.lambda1, schedule(s.iteration, c).lambda2};
    const ObjectiveEval g = evaluate_objective(s.net, s.heads, batch, w, c.ranking, true);
    if (g.triplets.empty()) continue;
    auto f = [&] { return combined_loss(s, batch, c).total; };
    Vector analytic(0), numeric(0);
    auto append = [](Vector& v, const Matrix& m) {
      v.conservativeResize(v.size() + m.size());
      v.tail(m.size()) = m.reshaped();
    };
    for (std::size_t k = 0; k < s.net.layers.size(); ++k) {
      append(analytic, g.d_net.layers[k].d_weight);
      append(numeric, numeric_gradient(f, s.net.layers[k].weight));
      append(analytic, g.d_net.layers[k].d_bias);
      append(numeric, numeric_gradient(f, s.net.layers[k].bias));
    }
    append(analytic, g.d_w_n);
    append(numeric, numeric_gradient(f, s.heads.w_n));
    append(analytic, g.d_w_v);
    append(numeric, numeric_gradient(f, s.heads.w_v));
    worst_combined = std::max(worst_combined, rel_error(analytic, numeric));
    ++combined_instances;
  }

  const double secs = seconds_since(t0);
  const double worst =
      std::max({worst_softmax, worst_r1, worst_r2, worst_triplet, worst_combined});
  return {worst <= 1e-4 && secs < 60.0,
          fmt("20 instances each, worst rel err softmax %.2g r1 %.2g r2 %.2g triplet %.2g "
              "combined %.2g (tol 1e-4), %.2f s",
              worst_softmax, worst_r1, worst_r2, worst_triplet, worst_combined, secs)};
}

// 3. Gamma^2 against W_N W_N^T + W_V W_V^T + mu I.
Outcome gamma_update() {
  Rng rng(1003);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int m = uniform_int(rng, 1, 32), c = uniform_int(rng, 1, 40);
    const double mu = std::pow(10.0, std::uniform_real_distribution<double>(-8, -1)(rng));
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2, 1)(rng));
    CoupledHeads h;
    h.w_n = random_matrix(m, c, rng, scale);
    h.w_v = random_matrix(m, c, rng, scale);
    h.params.mu = mu;
    const Matrix g = update_gamma(h);
    const Matrix rhs = h.w_n * h.w_n.transpose() + h.w_v * h.w_v.transpose() +
                       mu * Matrix::Identity(m, m);
    worst = std::max(worst, (g * g - rhs).norm() / rhs.norm());
  }
  return {worst <= 1e-8, fmt("100 heads, worst relative residual %.3g (tol 1e-8)", worst)};
}

// 4. Mined set against brute force plus the per-anchor cap.
Outcome mining_soundness() {
  Rng rng(1004);
  int mismatches = 0, violations = 0;
  std::size_t total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int p = uniform_int(rng, 2, 6), k = uniform_int(rng, 1, 3), dim = uniform_int(rng, 2, 8);
    const cdl::testing::ToyBatch b = cdl::testing::toy_batch(p, k, dim, 10, rng);
    const Matrix emb = normalize_rows(b.x);
    const RankingConfig cfg{std::uniform_real_distribution<double>(0.1, 1.5)(rng),
                            std::size_t(uniform_int(rng, 1, 6))};
    const std::vector<Triplet> mined = mine_triplets(emb, b.labels, b.modalities, cfg);
    const auto n = std::size_t(emb.rows());
    auto d = [&](std::size_t i, std::size_t j) { return (emb.row(i) - emb.row(j)).squaredNorm(); };

    std::vector<Triplet> expected;
    for (std::size_t a = 0; a < n; ++a) {
      struct Cand {
        double slack;
        int neg_label;
        Triplet t;
      };
      std::vector<Cand> cands;
      for (std::size_t pos = 0; pos < n; ++pos) {
        for (std::size_t neg = 0; neg < n; ++neg) {
          const bool cross = b.modalities[pos] != b.modalities[a] &&
                             b.modalities[neg] == b.modalities[a];
          const bool ids = b.labels[pos] == b.labels[a] && b.labels[neg] != b.labels[a];
          const double dap = d(a, pos), dan = d(a, neg);
          if (cross && ids && dap < dan && dan < dap + cfg.margin) {
            cands.push_back({dan - dap, b.labels[neg], {a, pos, neg}});
          }
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.slack != y.slack) return x.slack < y.slack;
        if (x.neg_label != y.neg_label) return x.neg_label < y.neg_label;
        if (x.t.negative != y.t.negative) return x.t.negative < y.t.negative;
        return x.t.positive < y.t.positive;
      });
      for (std::size_t i = 0; i < std::min(cands.size(), cfg.max_triplets_per_anchor); ++i) {
        expected.push_back(cands[i].t);
      }
    }
    std::vector<Triplet> sorted_mined = mined, sorted_expected = expected;
    std::sort(sorted_mined.begin(), sorted_mined.end());
    std::sort(sorted_expected.begin(), sorted_expected.end());
    mismatches += sorted_mined != sorted_expected;
    for (const Triplet& t : mined) {
      const double dap = d(t.anchor, t.positive), dan = d(t.anchor, t.negative);
      violations += !(b.modalities[t.positive] != b.modalities[t.anchor] &&
                      b.modalities[t.negative] == b.modalities[t.anchor] &&
                      b.labels[t.positive] == b.labels[t.anchor] &&
                      b.labels[t.negative] != b.labels[t.anchor] && dap < dan &&
                      dan < dap + cfg.margin);
    }
    total += mined.size();
  }
  return {mismatches == 0 && violations == 0 && total > 0,
          fmt("50 batches, %zu triplets, %d set mismatches, %d constraint violations", total,
              mismatches, violations)};
}

// 5. Repeated train_step on one frozen batch. Plain gradient steps as in the
// alternating algorithm; heavy-ball momentum is not a descent method, so the
// default-momentum run is reported alongside without deciding the outcome.
struct DescentTrace {
  std::vector<double> losses;
  std::size_t min_triplets = SIZE_MAX;
  int increases = 0;
  double largest_rise = -INFINITY;
};

DescentTrace frozen_batch_descent(double momentum) {
  Config cfg;
  const SyntheticData data = generate(cfg.synth_spec());
  TrainConfig c = cfg.train_config();
  c.iterations = 100;
  c.lr_start = c.lr_end = 1e-3;
  c.lambda2_start = c.lambda2_end = 1.0;
  c.momentum = momentum;
  TrainState s = init_state(cfg.layer_specs(data.train.input_dim()), data.train.identity_count(), c);
  Rng batch_rng = make_rng(cfg.seed, "acceptance.frozen");
  const Batch batch = sample_batch(data.train, c.identities_per_batch, c.samples_per_modality,
                                   batch_rng, false);
  DescentTrace tr;
  for (int t = 0; t < 100; ++t) {
    const LogRecord rec = train_step(s, batch, schedule(s.iteration, c), c);
    tr.losses.push_back(rec.parts.total);
    tr.min_triplets = std::min(tr.min_triplets, rec.parts.triplets);
  }
  tr.losses.push_back(combined_loss(s, batch, c).total);
  for (std::size_t t = 1; t < tr.losses.size(); ++t) {
    const double rise = tr.losses[t] - tr.losses[t - 1];
    tr.largest_rise = std::max(tr.largest_rise, rise);
    tr.increases += rise > 1e-9;
  }
  return tr;
}

Outcome alternating_descent() {
  const DescentTrace plain = frozen_batch_descent(0.0);
  const DescentTrace heavy = frozen_batch_descent(TrainConfig{}.momentum);
  return {plain.increases == 0,
          fmt("100 steps, loss %.4f -> %.4f, %d rises above 1e-9 (largest change %+.3g), "
              ">= %zu triplets per step; with momentum 0.9: %d rises, largest %+.3g",
              plain.losses.front(), plain.losses.back(), plain.increases, plain.largest_rise,
              plain.min_triplets, heavy.increases, heavy.largest_rise)};
}

// 6. R2 alone pulls both heads to orthonormal columns.
Outcome orthogonality_pull() {
  constexpr int kM = 32, kC = 16, kMaxSteps = 2000;
  SynthSpec spec;
  spec.train_identities = kC;
  spec.test_identities = 1;
  spec.samples_per_identity = 2;
  const Dataset train = generate(spec).train;
  TrainConfig c;
  c.iterations = kMaxSteps;
  c.lambda1 = 1.0;
  c.lambda2_start = c.lambda2_end = 0.0;
  c.lr_start = c.lr_end = 0.05;
  c.weight_decay = 0.0;
  c.heads.softmax_weight = 0.0;
  c.heads.lambda = 0.0;
  c.heads.alpha1 = 0.0;
  c.heads.alpha2 = 1.0;
  c.seed = 1006;
  TrainState s = init_state({{spec.input_dim, kM, Activation::identity}}, kC, c);
  const BatchSampler sampler(train, false);
  auto residual = [&] {
    const Matrix i = Matrix::Identity(kC, kC);
    return std::max((s.heads.w_n.transpose() * s.heads.w_n - i).norm(),
                    (s.heads.w_v.transpose() * s.heads.w_v - i).norm());
  };
  const double start = residual();
  int steps = 0;
  while (steps < kMaxSteps && residual() >= 1e-3) {
    train_step(s, sampler.sample(c.identities_per_batch, c.samples_per_modality, s.batch_rng),
               schedule(s.iteration, c), c);
    ++steps;
  }
  const double end = residual();
  return {end < 1e-3, fmt("m = 32, C = 16: max_i |W_i^T W_i - I|_F %.3g -> %.3g after %d steps "
                          "(target < 1e-3 within 2000)",
                          start, end, steps)};
}

struct RunResult {
  EvalReport report;
  GenerationOracle oracle;
  double init_cross_block = 0.0;
  std::string log;
  std::string checkpoint;
  double seconds = 0.0;
};

RunResult end_to_end(const Config& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticData data = generate(cfg.synth_spec());
  const std::vector<LayerSpec> specs = cfg.layer_specs(data.train.input_dim());
  const TrainConfig tc = cfg.train_config();
  RunResult r;
  r.oracle = data.oracle;
  r.init_cross_block = cross_block_mean(
      correlation_matrix(init_state(specs, data.train.identity_count(), tc).heads));
  const FitResult fit_result = fit(data.train, specs, tc);
  r.report = evaluate_model(fit_result.state.net, fit_result.state.heads, data.gallery, data.probe,
                            cfg.eval);
  r.log = format_log(fit_result.log);
  r.checkpoint = serialize_checkpoint(fit_result.state);
  r.seconds = seconds_since(t0);
  return r;
}

double vr_at(const EvalReport& r, double far) {
  for (const VrAtFar& v : r.roc.at_far) {
    if (std::abs(v.far_target - far) < 1e-12) return v.vr;
  }
  return std::nan("");
}

Config softmax_only(Config c) {
  c.trainer.heads.lambda = 0.0;
  c.trainer.heads.alpha1 = 0.0;
  c.trainer.heads.alpha2 = 0.0;
  c.trainer.lambda2_start = c.trainer.lambda2_end = 0.0;
  return c;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %d %-22s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("threw: ") + e.what()};
    }
  };

  report(1, "variational-identity", guarded(variational_identity));
  report(2, "gradient-suite", guarded(gradient_suite));
  report(3, "gamma-update", guarded(gamma_update));
  report(4, "mining-soundness", guarded(mining_soundness));
  report(5, "alternating-descent", guarded(alternating_descent));
  report(6, "orthogonality-pull", guarded(orthogonality_pull));

  const Config cdl_cfg;
  RunResult cdl_run, soft_run, repeat_run;
  std::string run_error;
  try {
    cdl_run = end_to_end(cdl_cfg);
    soft_run = end_to_end(softmax_only(cdl_cfg));
    repeat_run = end_to_end(cdl_cfg);
  } catch (const std::exception& e) {
    run_error = std::string("threw: ") + e.what();
  }
  if (!run_error.empty()) {
    for (int id : {7, 8, 9}) report(id, "end-to-end", {false, run_error});
    return 1;
  }

  {
    const double vr_cdl = vr_at(cdl_run.report, 0.01), vr_soft = vr_at(soft_run.report, 0.01);
    const bool gap = cdl_run.oracle.raw_rank1 < 0.9 && cdl_run.oracle.latent_rank1 >= 0.95;
    const bool pass = gap && cdl_cfg.trainer.iterations <= 20000 && cdl_run.report.rank1 >= 0.95 &&
                      vr_cdl - vr_soft >= 0.02 && cdl_run.seconds + soft_run.seconds < 600.0;
    report(7, "end-to-end", {pass, fmt("oracle raw %.3f latent %.3f; rank1 %.4f (>= 0.95); "
                                       "VR@1%% CDL %.4f vs softmax %.4f (gap >= 0.02); "
                                       "%d iterations, %.1f s + %.1f s",
                                       cdl_run.oracle.raw_rank1, cdl_run.oracle.latent_rank1,
                                       cdl_run.report.rank1, vr_cdl, vr_soft,
                                       cdl_cfg.trainer.iterations, cdl_run.seconds,
                                       soft_run.seconds)});
  }
  {
    const VarianceStats& a = cdl_run.report.sigma_full;
    const VarianceStats& b = soft_run.report.sigma_full;
    const double intra_ratio = a.intra / b.intra, inter_ratio = a.inter / b.inter;
    const bool pass = a.intra < b.intra && inter_ratio > intra_ratio &&
                      cdl_run.report.correlation_cross_block > cdl_run.init_cross_block;
    report(8, "diagnostics-direction",
           {pass, fmt("sigma_intra %.4g vs %.4g (ratio %.3f); sigma_inter %.4g vs %.4g "
                      "(ratio %.3f); cross-block corr %.4f vs init %.4f",
                      a.intra, b.intra, intra_ratio, a.inter, b.inter, inter_ratio,
                      cdl_run.report.correlation_cross_block, cdl_run.init_cross_block)});
  }
  {
    const bool same_log = cdl_run.log == repeat_run.log;
    const bool same_ckpt = cdl_run.checkpoint == repeat_run.checkpoint;
    report(9, "determinism", {same_log && same_ckpt,
                              fmt("log %s (%zu bytes), checkpoint %s (%zu bytes)",
                                  same_log ? "identical" : "differs", cdl_run.log.size(),
                                  same_ckpt ? "identical" : "differs", cdl_run.checkpoint.size())});
  }
  return failures == 0 ? 0 : 1;
}
