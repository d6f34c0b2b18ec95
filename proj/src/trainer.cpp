#include "cdl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "cdl/error.hpp"
#include "cdl/text.hpp"

namespace cdl {

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("trainer." + msg); };
  auto non_negative = [&](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be finite and >= 0");
  };
  non_negative(c.lambda1, "lambda1");
  non_negative(c.lambda2_start, "lambda2_start");
  non_negative(c.lambda2_end, "lambda2_end");
  non_negative(c.weight_decay, "weight_decay");
  if (!(c.lr_start > 0.0) || !(c.lr_end > 0.0) || !std::isfinite(c.lr_start)) {
    fail("lr_start and lr_end must be positive");
  }
  if (c.lr_end > c.lr_start) fail("lr_end must not exceed lr_start");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (c.identities_per_batch <= 0) fail("identities_per_batch must be positive");
  if (c.samples_per_modality <= 0) fail("samples_per_modality must be positive");
  if (c.iterations < 0) fail("iterations must be >= 0");
  if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (!(c.ranking.margin > 0.0)) throw std::invalid_argument("ranking.margin must be positive");
  if (c.ranking.max_triplets_per_anchor == 0) {
    throw std::invalid_argument("ranking.max_triplets_per_anchor must be positive");
  }
  const HeadsParams& h = c.heads;
  if (!(h.lambda >= 0.0) || !(h.alpha1 >= 0.0) || !(h.alpha2 >= 0.0) ||
      !(h.softmax_weight >= 0.0)) {
    throw std::invalid_argument("heads.lambda, alpha1, alpha2, softmax_weight must be >= 0");
  }
  if (!(h.mu > 0.0)) throw std::invalid_argument("heads.mu must be positive");
}

Schedule schedule(std::int64_t iteration, const TrainConfig& c) {
  double f = 0.0;
  if (c.iterations > 1) {
    f = std::clamp(static_cast<double>(iteration) / static_cast<double>(c.iterations - 1), 0.0, 1.0);
  }
  Schedule s;
  s.lr = f >= 1.0 ? c.lr_end : c.lr_start * std::pow(c.lr_end / c.lr_start, f);
  s.lambda2 = f >= 1.0 ? c.lambda2_end : c.lambda2_start + (c.lambda2_end - c.lambda2_start) * f;
  return s;
}

TrainState init_state(const std::vector<LayerSpec>& specs, int class_count,
                      const TrainConfig& config) {
  TrainState s;
  s.net = init_net(specs, fork_seed(config.seed, "trainer.net"));
  s.heads = init_heads(s.net.embedding_dim(), class_count, config.heads, config.heads_init_std,
                       fork_seed(config.seed, "trainer.heads"));
  s.velocity.net = NetGrads::zeros_like(s.net);
  s.velocity.w_n = Matrix::Zero(s.heads.w_n.rows(), s.heads.w_n.cols());
  s.velocity.w_v = Matrix::Zero(s.heads.w_v.rows(), s.heads.w_v.cols());
  s.batch_rng = make_rng(config.seed, "trainer.batches");
  return s;
}

ObjectiveEval evaluate_objective(const EmbeddingNet& net, const CoupledHeads& heads,
                                 const Batch& batch, const ObjectiveWeights& w,
                                 const RankingConfig& ranking, bool with_gradients,
                                 const std::vector<Triplet>* fixed_triplets) {
  ObjectiveEval out;
  const ForwardResult fwd = forward(net, batch.features);
  const Matrix& emb = fwd.embeddings;

  RelevanceGrads rel = relevance_loss(heads, emb, batch.labels, batch.modalities);
  out.parts.relevance = rel.loss_value;
  out.parts.softmax = rel.softmax;
  out.parts.r1 = rel.r1;
  out.parts.r2 = rel.r2;

  Matrix d_emb = w.lambda1 * rel.d_embeddings;
  out.parts.single_modality = !batch.has_both_modalities();
  if (w.lambda2 > 0.0 || fixed_triplets) {
    if (!out.parts.single_modality) {
      const Matrix unit = normalize_rows(emb);
      out.triplets = fixed_triplets ? *fixed_triplets
                                    : mine_triplets(unit, batch.labels, batch.modalities, ranking);
      TripletLossResult tl = triplet_loss(unit, out.triplets, ranking.margin);
      out.parts.ranking = tl.loss;
      if (with_gradients && w.lambda2 != 0.0 && !out.triplets.empty()) {
        d_emb += w.lambda2 * normalize_rows_backward(emb, tl.d_embeddings);
      }
    }
  }
  out.parts.triplets = out.triplets.size();
  out.parts.total = w.lambda1 * out.parts.relevance + w.lambda2 * out.parts.ranking;

  if (with_gradients) {
    out.d_net = backward(net, fwd.tape, d_emb).grads;
    out.d_w_n = w.lambda1 * rel.d_w_n;
    out.d_w_v = w.lambda1 * rel.d_w_v;
  }
  return out;
}

LossParts combined_loss(const TrainState& state, const Batch& batch, const TrainConfig& config) {
  const Schedule s = schedule(state.iteration, config);
  return evaluate_objective(state.net, state.heads, batch, {config.lambda1, s.lambda2},
                            config.ranking, false)
      .parts;
}

namespace {

void momentum_update(Matrix& param, Matrix& velocity, const Matrix& grad, double lr,
                     double momentum, double decay) {
  velocity = momentum * velocity - lr * (grad + decay * param);
  param += velocity;
}

void momentum_update(Vector& param, Vector& velocity, const Vector& grad, double lr,
                     double momentum, double decay) {
  velocity = momentum * velocity - lr * (grad + decay * param);
  param += velocity;
}

std::string describe(const LossParts& p) {
  return "loss=" + format_double(p.total) + " relevance=" + format_double(p.relevance) +
         " softmax=" + format_double(p.softmax) + " r1=" + format_double(p.r1) +
         " r2=" + format_double(p.r2) + " ranking=" + format_double(p.ranking);
}

}  // namespace

LogRecord train_step(TrainState& state, const Batch& batch, const Schedule& sched,
                     const TrainConfig& config, std::vector<StepEvent>* trace) {
  auto mark = [&](StepEvent e) {
    if (trace) trace->push_back(e);
  };
  const ObjectiveWeights weights{config.lambda1, sched.lambda2};

  // Loss at the incoming parameters and gamma; mines this step's triplets.
  ObjectiveEval before =
      evaluate_objective(state.net, state.heads, batch, weights, config.ranking, false);
  mark(StepEvent::forward);
  const LossParts& parts = before.parts;
  if (!std::isfinite(parts.total) || !std::isfinite(parts.relevance) ||
      !std::isfinite(parts.ranking)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(state.iteration) + ": " +
                       describe(parts));
  }

  refresh_gamma(state.heads);
  mark(StepEvent::gamma_refresh);

  ObjectiveEval eval = evaluate_objective(state.net, state.heads, batch, weights, config.ranking,
                                          true, &before.triplets);
  mark(StepEvent::gradients);

  const double lr = sched.lr;
  const double mom = config.momentum;
  const double decay = config.weight_decay;
  for (std::size_t k = 0; k < state.net.layers.size(); ++k) {
    Layer& layer = state.net.layers[k];
    LayerGrad& vel = state.velocity.net.layers[k];
    momentum_update(layer.weight, vel.d_weight, eval.d_net.layers[k].d_weight, lr, mom, decay);
    momentum_update(layer.bias, vel.d_bias, eval.d_net.layers[k].d_bias, lr, mom, decay);
  }
  mark(StepEvent::theta_update);

  momentum_update(state.heads.w_n, state.velocity.w_n, eval.d_w_n, lr, mom, decay);
  momentum_update(state.heads.w_v, state.velocity.w_v, eval.d_w_v, lr, mom, decay);
  mark(StepEvent::heads_update);

  LogRecord rec{state.iteration, parts, sched.lr, sched.lambda2};
  ++state.iteration;
  return rec;
}

FitResult fit(const Dataset& train, const std::vector<LayerSpec>& specs,
              const TrainConfig& config, std::optional<TrainState> resume,
              const CheckpointHook& on_checkpoint) {
  validate(config);
  if (train.empty()) throw DataError("fit: training set is empty");
  if (specs.front().input_dim != train.input_dim()) {
    throw DataError("fit: network expects input width " + std::to_string(specs.front().input_dim) +
                    ", training data has " + std::to_string(train.input_dim()));
  }
  FitResult out{resume ? std::move(*resume) : init_state(specs, train.identity_count(), config),
                {}};
  TrainState& state = out.state;
  if (state.net.specs() != specs) throw DataError("fit: resumed network does not match the layer specs");
  if (state.heads.class_count() < train.identity_count()) {
    throw DataError("fit: heads have " + std::to_string(state.heads.class_count()) +
                    " classes, training data has labels up to " +
                    std::to_string(train.identity_count() - 1));
  }
  if (state.iteration > config.iterations) {
    throw std::invalid_argument("fit: state is at iteration " + std::to_string(state.iteration) +
                                ", beyond trainer.iterations = " +
                                std::to_string(config.iterations));
  }

  const BatchSampler sampler(train, !config.include_unpaired);
  bool warned = false;
  out.log.reserve(static_cast<std::size_t>(config.iterations - state.iteration));
  while (state.iteration < config.iterations) {
    const Batch batch =
        sampler.sample(config.identities_per_batch, config.samples_per_modality, state.batch_rng);
    const Schedule sched = schedule(state.iteration, config);
    LogRecord rec = train_step(state, batch, sched, config);
    if (rec.parts.single_modality && sched.lambda2 > 0.0 && !warned) {
      std::cerr << "warning: batch at iteration " << rec.iteration
                << " holds a single modality; ranking term skipped\n";
      warned = true;
    }
    out.log.push_back(rec);
    if (on_checkpoint && config.checkpoint_every > 0 &&
        state.iteration % config.checkpoint_every == 0) {
      on_checkpoint(state);
    }
  }
  return out;
}

std::string log_header() {
  return "iteration\tloss\trelevance\tsoftmax\tr1\tr2\tranking\ttriplets\tlr\tlambda2\n";
}

std::string format_log_record(const LogRecord& r) {
  std::string s = std::to_string(r.iteration);
  for (double v : {r.parts.total, r.parts.relevance, r.parts.softmax, r.parts.r1, r.parts.r2,
                   r.parts.ranking}) {
    s += '\t';
    append_double(s, v);
  }
  s += '\t';
  s += std::to_string(r.parts.triplets);
  s += '\t';
  append_double(s, r.lr);
  s += '\t';
  append_double(s, r.lambda2);
  s += '\n';
  return s;
}

std::string format_log(const std::vector<LogRecord>& log) {
  std::string s = log_header();
  for (const LogRecord& r : log) s += format_log_record(r);
  return s;
}

}  // namespace cdl
