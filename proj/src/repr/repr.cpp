#include "tavi/repr/repr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "tavi/env/sim.hpp"
#include "tavi/errors.hpp"
#include "tavi/numerics/checkpoint.hpp"

namespace tavi::repr {

namespace {

constexpr double kLambdaFloor = 1e-3;
constexpr double kLambdaCeil = 1e3;

// One (t, t+gap) sample with everything both loss terms need.
struct Pair {
  Tensor pooled_now;   // [kPooledDim]
  Tensor pooled_next;
  Tensor tactile_now;  // [kTactileDim]
  Tensor tactile_next;
  std::vector<double> state_now;
  std::vector<double> state_next;
};

std::vector<Pair> collect_pairs(const std::vector<env::Trajectory>& demos, int gap) {
  if (gap < 1) throw ConfigError("temporal gap must be at least 1");
  if (demos.empty()) throw DataError("no demos to train on");
  std::vector<Pair> pairs;
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const env::Trajectory& traj = demos[d];
    if (traj.steps.size() < static_cast<std::size_t>(gap) + 1) {
      throw DataError("demo " + std::to_string(d) + " has " +
                      std::to_string(traj.steps.size()) + " steps, too short for gap " +
                      std::to_string(gap));
    }
    for (std::size_t t = 0; t + gap < traj.steps.size(); ++t) {
      const env::TrajStep& a = traj.steps[t];
      const env::TrajStep& b = traj.steps[t + gap];
      Pair p;
      p.pooled_now = pool_raster(a.obs);
      p.pooled_next = pool_raster(b.obs);
      p.tactile_now = Tensor::vector({a.tactile.values.begin(), a.tactile.values.end()});
      p.tactile_next = Tensor::vector({b.tactile.values.begin(), b.tactile.values.end()});
      p.state_now = env::state_vector(a.state);
      p.state_next = env::state_vector(b.state);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

Tensor stack_rows(const std::vector<Pair>& pairs, const std::vector<std::size_t>& idx,
                  const Tensor Pair::*field) {
  const std::size_t dim = (pairs[idx[0]].*field).numel();
  Tensor out({idx.size(), dim});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Tensor& row = pairs[idx[r]].*field;
    std::copy(row.values().begin(), row.values().end(), out.values().begin() + r * dim);
  }
  return out;
}

Tensor stack_states(const std::vector<Pair>& pairs, const std::vector<std::size_t>& idx,
                    const std::vector<double> Pair::*field) {
  const std::size_t dim = (pairs[idx[0]].*field).size();
  Tensor out({idx.size(), dim});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::vector<double>& row = pairs[idx[r]].*field;
    std::copy(row.begin(), row.end(), out.values().begin() + r * dim);
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

// Encoder forward inside the tape: dense stack then row normalization.
Var encode_node(Graph& g, ParamSet& params, const MlpArch& arch, Var input) {
  return row_l2_normalize(forward_mlp(g, params, arch, "", input));
}

Tensor normalize_rows(Tensor t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) sq += t.at(r, c) * t.at(r, c);
    double norm = std::sqrt(sq);
    if (norm == 0.0) throw NumericError("cannot normalize an all-zero latent");
    for (std::size_t c = 0; c < t.cols(); ++c) t.at(r, c) /= norm;
  }
  return t;
}

void offset_final_bias(ParamSet& params, const MlpArch& arch, RngStream rng) {
  Tensor& b = params.value("b" + std::to_string(arch.layers.size() - 1));
  for (double& v : b.values()) v = rng.uniform(-0.1, 0.1);
}

}  // namespace

LossVariant variant_from_name(std::string_view name) {
  if (name == "combined") return LossVariant::combined;
  if (name == "contrastive_only") return LossVariant::contrastive_only;
  if (name == "joint_difference") return LossVariant::joint_difference;
  throw ConfigError("unknown loss variant: " + std::string(name));
}

std::string variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::combined: return "combined";
    case LossVariant::contrastive_only: return "contrastive_only";
    case LossVariant::joint_difference: return "joint_difference";
  }
  throw ConfigError("unknown loss variant value");
}

EncoderParams init_encoder_params(const RngStream& rng) {
  EncoderParams p;
  p.visual_arch.input_dim = kPooledDim;
  p.visual_arch.layers = {{64, numerics::Activation::relu},
                          {kVisualLatentDim, numerics::Activation::linear}};
  p.tactile_arch.input_dim = env::kTactileDim;
  p.tactile_arch.layers = {{32, numerics::Activation::relu},
                           {kTactileLatentDim, numerics::Activation::linear}};
  p.delta_arch.input_dim = 2 * kVisualLatentDim;
  p.delta_arch.layers = {{64, numerics::Activation::relu},
                         {env::kRobotStateDim, numerics::Activation::linear}};

  RngStream vis_rng = rng.derive("init.visual");
  RngStream tac_rng = rng.derive("init.tactile");
  RngStream delta_rng = rng.derive("init.delta");
  numerics::init_mlp(p.visual, p.visual_arch, "", vis_rng);
  numerics::init_mlp(p.tactile, p.tactile_arch, "", tac_rng);
  numerics::init_mlp(p.delta, p.delta_arch, "", delta_rng);
  offset_final_bias(p.visual, p.visual_arch, rng.derive("init.visual.bias"));
  offset_final_bias(p.tactile, p.tactile_arch, rng.derive("init.tactile.bias"));
  return p;
}

void save_encoder_params(const std::string& path, const EncoderParams& params) {
  numerics::Checkpoint ckpt;
  ckpt.sections["visual"] = params.visual;
  ckpt.sections["tactile"] = params.tactile;
  ckpt.sections["delta"] = params.delta;
  ckpt.meta["kind"] = "encoder";
  ckpt.meta["visual_trained"] = params.visual_trained;
  ckpt.meta["tactile_trained"] = params.tactile_trained;
  ckpt.meta["visual_arch"] = numerics::arch_to_json(params.visual_arch);
  ckpt.meta["tactile_arch"] = numerics::arch_to_json(params.tactile_arch);
  ckpt.meta["delta_arch"] = numerics::arch_to_json(params.delta_arch);
  numerics::save_checkpoint(path, ckpt);
}

EncoderParams load_encoder_params(const std::string& path) {
  numerics::Checkpoint ckpt = numerics::load_checkpoint(path);
  if (!ckpt.meta.contains("kind") || ckpt.meta["kind"] != "encoder") {
    throw DataError(path + " is not an encoder checkpoint");
  }
  EncoderParams p;
  p.visual = ckpt.sections.at("visual");
  p.tactile = ckpt.sections.at("tactile");
  p.delta = ckpt.sections.at("delta");
  p.visual_arch = numerics::arch_from_json(ckpt.meta["visual_arch"]);
  p.tactile_arch = numerics::arch_from_json(ckpt.meta["tactile_arch"]);
  p.delta_arch = numerics::arch_from_json(ckpt.meta["delta_arch"]);
  p.visual_trained = ckpt.meta.value("visual_trained", false);
  p.tactile_trained = ckpt.meta.value("tactile_trained", false);
  return p;
}

Tensor pool_raster(const env::VisualObs& obs) {
  if (obs.h != env::kRasterSize || obs.w != env::kRasterSize) {
    throw ShapeError("pool_raster expects a " + std::to_string(env::kRasterSize) + "x" +
                     std::to_string(env::kRasterSize) + " raster");
  }
  const int half = env::kRasterSize / 2;
  Tensor out({kPooledDim});
  for (int r = 0; r < half; ++r) {
    for (int c = 0; c < half; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) {
          acc += obs.pix[(2 * r + dr) * obs.w + (2 * c + dc)];
        }
      }
      out[r * half + c] = acc / (4.0 * 255.0);
    }
  }
  return out;
}

Tensor pool_rasters(const std::vector<env::VisualObs>& obs) {
  Tensor out({obs.size(), kPooledDim});
  for (std::size_t r = 0; r < obs.size(); ++r) {
    Tensor row = pool_raster(obs[r]);
    std::copy(row.values().begin(), row.values().end(), out.values().begin() + r * kPooledDim);
  }
  return out;
}

Tensor encode_visual_batch(const EncoderParams& params, const Tensor& pooled) {
  return normalize_rows(numerics::forward_mlp_inference(params.visual, params.visual_arch, "",
                                                        pooled));
}

Tensor encode_visual(const EncoderParams& params, const env::VisualObs& obs) {
  Tensor pooled = pool_raster(obs);
  Tensor batch({1, kPooledDim}, pooled.values());
  Tensor out = encode_visual_batch(params, batch);
  return Tensor::vector(out.values());
}

Tensor encode_tactile_batch(const EncoderParams& params, const Tensor& readings) {
  return normalize_rows(numerics::forward_mlp_inference(params.tactile, params.tactile_arch, "",
                                                        readings));
}

Tensor encode_tactile(const EncoderParams& params, const env::TactileReading& reading) {
  Tensor batch({1, env::kTactileDim}, {reading.values.begin(), reading.values.end()});
  Tensor out = encode_tactile_batch(params, batch);
  return Tensor::vector(out.values());
}

Var infonce_node(Graph&, Var anchors, Var positives, Var negatives) {
  if (negatives.value().rank() != 2 || negatives.value().rows() == 0) {
    throw ConfigError("contrastive loss needs at least one negative");
  }
  if (anchors.value().cols() != negatives.value().cols()) {
    throw ShapeError("negative latent dim " + std::to_string(negatives.value().cols()) +
                     " does not match anchor dim " + std::to_string(anchors.value().cols()));
  }
  Var pos = row_dot(anchors, positives);  // [m]
  Var neg = matmul_nt(anchors, negatives);  // [m, n]
  Var scores = concat_cols(reshape(pos, {pos.value().numel(), 1}), neg);
  Var lse = logsumexp_rows(scores);  // [m]
  return mean(sub(lse, pos));
}

double infonce_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives) {
  Graph g;
  return infonce_node(g, g.input(anchors), g.input(positives), g.input(negatives)).value()[0];
}

Var infonce_inbatch_node(Graph&, Var anchors, Var positives) {
  if (anchors.value().rows() < 2) {
    throw ConfigError("in-batch contrastive loss needs at least two pairs");
  }
  Var scores = matmul_nt(anchors, positives);  // [m, m]
  return mean(sub(logsumexp_rows(scores), diag(scores)));
}

Var delta_node(Graph& g, EncoderParams& params, Var s_now, Var s_next, Var z_now, Var z_next) {
  Var pred = forward_mlp(g, params.delta, params.delta_arch, "", concat_cols(z_now, z_next));
  Var target = sub(s_next, s_now);
  return mean(row_l2_norm(sub(target, pred)));
}

double delta_loss(const EncoderParams& params, const Tensor& s_now, const Tensor& s_next,
                  const Tensor& z_now, const Tensor& z_next) {
  if (z_now.rows() != z_next.rows() || s_now.rows() != s_next.rows() ||
      s_now.rows() != z_now.rows()) {
    throw ShapeError("state and latent batches must pair up row for row");
  }
  Tensor joint({z_now.rows(), z_now.cols() + z_next.cols()});
  for (std::size_t r = 0; r < z_now.rows(); ++r) {
    for (std::size_t c = 0; c < z_now.cols(); ++c) joint.at(r, c) = z_now.at(r, c);
    for (std::size_t c = 0; c < z_next.cols(); ++c) joint.at(r, z_now.cols() + c) = z_next.at(r, c);
  }
  Tensor pred = numerics::forward_mlp_inference(params.delta, params.delta_arch, "", joint);
  if (pred.cols() != s_now.cols()) {
    throw ShapeError("state dim " + std::to_string(s_now.cols()) +
                     " does not match head output dim " + std::to_string(pred.cols()));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      double d = (s_next.at(r, c) - s_now.at(r, c)) - pred.at(r, c);
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / pred.rows();
}

double calibrate_lambda(double l_nce, double l_delta) {
  if (l_delta == 0.0) {
    std::cerr << "warning: state-change loss is exactly zero at init; lambda fixed to 1\n";
    return 1.0;
  }
  return std::clamp(l_nce / l_delta, kLambdaFloor, kLambdaCeil);
}

void write_train_csv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "epoch,l_nce,l_delta,lambda\n";
  for (const TrainEpoch& e : log.epochs) {
    out << e.epoch << "," << numerics::format_double(e.l_nce) << ","
        << numerics::format_double(e.l_delta) << "," << numerics::format_double(e.lambda)
        << "\n";
  }
}

namespace {

// Core loop shared by the visual and tactile trainers. `build_loss` gets the
// drawn indices and must return the scalar loss node; `param_sets` are the
// sets stepped by Adam. Epoch averages of the two loss components are read
// back through out-parameters set by build_loss.
struct BatchLoss {
  Var loss;
  double l_nce = std::numeric_limits<double>::quiet_NaN();
  double l_delta = std::numeric_limits<double>::quiet_NaN();
};

template <typename BuildLoss>
void train_loop(const std::vector<Pair>& pairs, const ReprTrainConfig& cfg, const RngStream& rng,
                std::vector<ParamSet*> param_sets, double lambda, BuildLoss&& build_loss,
                TrainLog* log) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
  if (cfg.batch < 2) throw ConfigError("batch must hold at least two pairs");
  if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream shuffle_rng = rng.derive("shuffle");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double sum_nce = 0.0, sum_delta = 0.0;
    std::size_t n_nce = 0, n_delta = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch) {
      std::size_t stop = std::min(start + cfg.batch, order.size());
      if (stop - start < 2) break;
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      if (log && cfg.log_batches) log->batch_indices.push_back(idx);

      Graph g;
      BatchLoss bl = build_loss(g, idx);
      g.backward(bl.loss);
      for (ParamSet* ps : param_sets) {
        numerics::adam_step(*ps, cfg.lr);
        ps->zero_grads();
      }
      if (!std::isnan(bl.l_nce)) {
        sum_nce += bl.l_nce;
        ++n_nce;
      }
      if (!std::isnan(bl.l_delta)) {
        sum_delta += bl.l_delta;
        ++n_delta;
      }
    }
    if (log) {
      TrainEpoch row;
      row.epoch = epoch;
      row.l_nce = n_nce ? sum_nce / n_nce : std::numeric_limits<double>::quiet_NaN();
      row.l_delta = n_delta ? sum_delta / n_delta : std::numeric_limits<double>::quiet_NaN();
      row.lambda = lambda;
      log->epochs.push_back(row);
    }
  }
}

// First shuffled batch of the epoch-0 order, used to calibrate lambda
// without advancing the training shuffle stream.
std::vector<std::size_t> warmup_batch(const std::vector<Pair>& pairs, const ReprTrainConfig& cfg,
                                      const RngStream& rng) {
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream shuffle_rng = rng.derive("shuffle");
  shuffle_indices(order, shuffle_rng);
  order.resize(std::min<std::size_t>(cfg.batch, order.size()));
  return order;
}

}  // namespace

EncoderParams train_visual_encoder(const std::vector<env::Trajectory>& demos,
                                   const ReprTrainConfig& cfg, const RngStream& rng,
                                   TrainLog* log) {
  if (cfg.lambda_weight < 0.0) throw ConfigError("lambda must be nonnegative");
  std::vector<Pair> pairs = collect_pairs(demos, cfg.gap);
  EncoderParams params = init_encoder_params(rng);

  const bool use_nce = cfg.variant != LossVariant::joint_difference;
  const bool use_delta = cfg.variant != LossVariant::contrastive_only;

  double lambda = cfg.lambda_weight;
  if (cfg.variant == LossVariant::combined && cfg.auto_lambda) {
    std::vector<std::size_t> idx = warmup_batch(pairs, cfg, rng);
    Tensor now = stack_rows(pairs, idx, &Pair::pooled_now);
    Tensor next = stack_rows(pairs, idx, &Pair::pooled_next);
    Graph g;
    Var z_now = encode_node(g, params.visual, params.visual_arch, g.input(now));
    Var z_next = encode_node(g, params.visual, params.visual_arch, g.input(next));
    double l_nce = infonce_inbatch_node(g, z_now, z_next).value()[0];
    double l_delta = delta_node(g, params, g.input(stack_states(pairs, idx, &Pair::state_now)),
                                g.input(stack_states(pairs, idx, &Pair::state_next)), z_now,
                                z_next)
                         .value()[0];
    lambda = calibrate_lambda(l_nce, l_delta);
  } else if (cfg.variant != LossVariant::combined) {
    lambda = 1.0;
  }

  std::vector<ParamSet*> stepped = {&params.visual};
  if (use_delta) stepped.push_back(&params.delta);

  train_loop(
      pairs, cfg, rng, stepped, lambda,
      [&](Graph& g, const std::vector<std::size_t>& idx) {
        Var z_now =
            encode_node(g, params.visual, params.visual_arch,
                        g.input(stack_rows(pairs, idx, &Pair::pooled_now)));
        Var z_next =
            encode_node(g, params.visual, params.visual_arch,
                        g.input(stack_rows(pairs, idx, &Pair::pooled_next)));
        BatchLoss bl;
        if (use_nce && use_delta) {
          Var nce = infonce_inbatch_node(g, z_now, z_next);
          Var delta = delta_node(g, params,
                                 g.input(stack_states(pairs, idx, &Pair::state_now)),
                                 g.input(stack_states(pairs, idx, &Pair::state_next)), z_now,
                                 z_next);
          bl.loss = add(nce, scale(delta, lambda));
          bl.l_nce = nce.value()[0];
          bl.l_delta = delta.value()[0];
        } else if (use_nce) {
          Var nce = infonce_inbatch_node(g, z_now, z_next);
          bl.loss = nce;
          bl.l_nce = nce.value()[0];
        } else {
          Var delta = delta_node(g, params,
                                 g.input(stack_states(pairs, idx, &Pair::state_now)),
                                 g.input(stack_states(pairs, idx, &Pair::state_next)), z_now,
                                 z_next);
          bl.loss = delta;
          bl.l_delta = delta.value()[0];
        }
        return bl;
      },
      log);
  params.visual_trained = true;
  return params;
}

EncoderParams train_tactile_encoder(EncoderParams params,
                                    const std::vector<env::Trajectory>& demos,
                                    const ReprTrainConfig& cfg, const RngStream& rng,
                                    TrainLog* log) {
  std::vector<Pair> pairs = collect_pairs(demos, cfg.gap);
  train_loop(
      pairs, cfg, rng, {&params.tactile}, 1.0,
      [&](Graph& g, const std::vector<std::size_t>& idx) {
        Var z_now =
            encode_node(g, params.tactile, params.tactile_arch,
                        g.input(stack_rows(pairs, idx, &Pair::tactile_now)));
        Var z_next =
            encode_node(g, params.tactile, params.tactile_arch,
                        g.input(stack_rows(pairs, idx, &Pair::tactile_next)));
        BatchLoss bl;
        Var nce = infonce_inbatch_node(g, z_now, z_next);
        bl.loss = nce;
        bl.l_nce = nce.value()[0];
        return bl;
      },
      log);
  params.tactile_trained = true;
  return params;
}

}  // namespace tavi::repr
