#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "tavi/env/expert.hpp"
#include "tavi/env/render.hpp"
#include "tavi/env/sim.hpp"
#include "tavi/env/trajectory.hpp"
#include "tavi/errors.hpp"
#include "tavi/numerics/checkpoint.hpp"
#include "tavi/repr/repr.hpp"

using namespace tavi;
using namespace tavi::repr;
using tavi::numerics::Graph;
using tavi::numerics::RngStream;
using tavi::numerics::Tensor;
using tavi::numerics::Var;

namespace {

Tensor random_latents(std::size_t m, std::size_t d, RngStream& rng, double scale = 0.7) {
  Tensor t({m, d});
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1e-8, std::abs(want));
}

// Independent in-batch contrastive evaluation: plain loops, no graph.
double inbatch_reference(const Tensor& anchors, const Tensor& positives) {
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.rows(); ++i) {
    double self = 0.0;
    double denom = 0.0;
    for (std::size_t j = 0; j < positives.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < anchors.cols(); ++c) dot += anchors.at(i, c) * positives.at(j, c);
      denom += std::exp(dot);
      if (i == j) self = dot;
    }
    total += std::log(denom) - self;
  }
  return total / anchors.rows();
}

// Synthetic demo: one bright object sweeps along x at constant speed while
// three dimmer distractor blocks and the whole hand teleport uniformly at
// random every frame. Object x is the only temporally coherent factor, so a
// temporal-pair objective has to suppress the distractor pixels to solve it.
env::Trajectory make_sweep_demo(double x0, double v, int frames, std::uint64_t seed) {
  env::TaskSpec task = env::make_task(env::TaskId::pinch_lift);
  env::SimState base = env::reset_task(task);
  base.objects[0].half = 0.03;
  base.objects[0].shade = 0.9;
  base.objects[0].y = 0.5;
  for (int d = 0; d < 3; ++d) {
    env::ObjectState distractor = base.objects[0];
    distractor.half = 0.02;
    distractor.shade = 0.5;
    base.objects.push_back(distractor);
  }

  RngStream rng(seed);
  env::Trajectory traj;
  traj.task = "sweep";
  traj.seed = seed;
  traj.success = true;
  traj.hz = 10.0;
  for (int t = 0; t < frames; ++t) {
    env::SimState s = base;
    s.objects[0].x = x0 + v * t;
    for (int d = 1; d <= 3; ++d) {
      s.objects[d].x = rng.uniform(0.35, 0.65);
      s.objects[d].y = rng.uniform(0.35, 0.65);
    }
    s.arm_x = rng.uniform(0.35, 0.65);
    s.arm_y = rng.uniform(0.35, 0.65);
    env::TrajStep step;
    step.t = t / traj.hz;
    step.state = s;
    step.obs = env::render_visual(s);
    traj.steps.push_back(step);
  }
  return traj;
}

// Fraction of frames in `a` whose nearest latent neighbor in `b` sits within
// one frame step of the true nearest neighbor by object x position, averaged
// over both retrieval directions.
double alignment_accuracy(const EncoderParams& params, const env::Trajectory& a,
                          const env::Trajectory& b) {
  std::vector<env::VisualObs> oa, ob;
  for (const auto& s : a.steps) oa.push_back(s.obs);
  for (const auto& s : b.steps) ob.push_back(s.obs);
  Tensor za = encode_visual_batch(params, pool_rasters(oa));
  Tensor zb = encode_visual_batch(params, pool_rasters(ob));

  auto one_way = [](const Tensor& zq, const env::Trajectory& q, const Tensor& zr,
                    const env::Trajectory& r) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < zq.rows(); ++i) {
      std::size_t best_latent = 0;
      double best_dot = -2.0, best_dist = 1e9;
      for (std::size_t j = 0; j < zr.rows(); ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < zq.cols(); ++c) dot += zq.at(i, c) * zr.at(j, c);
        if (dot > best_dot) {
          best_dot = dot;
          best_latent = j;
        }
        best_dist = std::min(
            best_dist, std::abs(q.steps[i].state.objects[0].x - r.steps[j].state.objects[0].x));
      }
      double step = std::abs(r.steps[1].state.objects[0].x - r.steps[0].state.objects[0].x);
      double got = std::abs(q.steps[i].state.objects[0].x -
                            r.steps[best_latent].state.objects[0].x);
      if (got <= best_dist + step) ++hits;
    }
    return static_cast<double>(hits) / zq.rows();
  };
  return 0.5 * (one_way(za, a, zb, b) + one_way(zb, b, za, a));
}

bool param_sets_equal(const numerics::ParamSet& a, const numerics::ParamSet& b) {
  if (a.names() != b.names()) return false;
  for (const std::string& name : a.names()) {
    if (a.value(name).values() != b.value(name).values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("contrastive loss closed forms") {
  Tensor unit = Tensor::matrix(3, 4, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
  // All latents identical: uniform softmax over n+1 entries.
  for (std::size_t n : {1u, 4u, 9u}) {
    Tensor negs({n, 4});
    for (std::size_t r = 0; r < n; ++r) negs.at(r, 0) = 1.0;
    double loss = infonce_loss(unit, unit, negs);
    CHECK(rel_err(loss, std::log(n + 1.0)) < 1e-12);
  }
  // Anchor and positive on e1, single orthogonal negative.
  Tensor anchor = Tensor::matrix(1, 4, {1, 0, 0, 0});
  Tensor neg = Tensor::matrix(1, 4, {0, 1, 0, 0});
  double loss = infonce_loss(anchor, anchor, neg);
  CHECK(rel_err(loss, std::log1p(std::exp(-1.0))) < 1e-12);
  CHECK(std::abs(loss - 0.31326) < 5e-6);
}

TEST_CASE("contrastive loss rejects an empty negative set") {
  Tensor a = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
  CHECK_THROWS_AS(infonce_loss(a, a, Tensor({0, 3})), ConfigError);
}

TEST_CASE("contrastive loss is nonnegative and obeys the similarity-spread bound") {
  RngStream rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 1 + rng.uniform_index(4);
    std::size_t n = 1 + rng.uniform_index(5);
    std::size_t d = 2 + rng.uniform_index(4);
    Tensor anchors = random_latents(m, d, rng);
    Tensor positives = random_latents(m, d, rng);
    Tensor negatives = random_latents(n, d, rng);
    double loss = infonce_loss(anchors, positives, negatives);
    CHECK(loss >= 0.0);

    double max_sim = -1e18, min_sim = 1e18;
    auto dot = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += x.at(i, c) * y.at(j, c);
      return s;
    };
    for (std::size_t i = 0; i < m; ++i) {
      max_sim = std::max(max_sim, dot(anchors, i, positives, i));
      min_sim = std::min(min_sim, dot(anchors, i, positives, i));
      for (std::size_t j = 0; j < n; ++j) {
        max_sim = std::max(max_sim, dot(anchors, i, negatives, j));
        min_sim = std::min(min_sim, dot(anchors, i, negatives, j));
      }
    }
    CHECK(loss <= std::log(n + 1.0) + (max_sim - min_sim) + 1e-12);
  }
}

TEST_CASE("in-batch contrastive loss matches a plain-loop reference") {
  RngStream rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 2 + rng.uniform_index(6);
    Tensor anchors = random_latents(m, 5, rng);
    Tensor positives = random_latents(m, 5, rng);
    Graph g;
    double got = infonce_inbatch_node(g, g.input(anchors), g.input(positives)).value()[0];
    CHECK(rel_err(got, inbatch_reference(anchors, positives)) < 1e-12);
  }
}

TEST_CASE("contrastive gradients match finite differences") {
  RngStream rng(41);
  Tensor anchors = random_latents(3, 4, rng);
  Tensor positives = random_latents(3, 4, rng);
  Tensor negatives = random_latents(5, 4, rng);

  Graph g;
  Var va = g.leaf(anchors), vp = g.leaf(positives), vn = g.leaf(negatives);
  g.backward(infonce_node(g, va, vp, vn));

  const double h = 1e-5;
  auto check_leaf = [&](Var leaf, Tensor base) {
    const Tensor& grad = leaf.graph->grad(leaf.id);
    for (std::size_t i = 0; i < base.numel(); ++i) {
      Tensor hi = base, lo = base;
      hi[i] += h;
      lo[i] -= h;
      const Tensor& a = (leaf.id == va.id) ? hi : anchors;
      const Tensor& p = (leaf.id == vp.id) ? hi : positives;
      const Tensor& n = (leaf.id == vn.id) ? hi : negatives;
      double up = infonce_loss(a, p, n);
      const Tensor& a2 = (leaf.id == va.id) ? lo : anchors;
      const Tensor& p2 = (leaf.id == vp.id) ? lo : positives;
      const Tensor& n2 = (leaf.id == vn.id) ? lo : negatives;
      double down = infonce_loss(a2, p2, n2);
      double fd = (up - down) / (2 * h);
      CHECK(rel_err(grad[i], fd) < 1e-4);
    }
  };
  check_leaf(va, anchors);
  check_leaf(vp, positives);
  check_leaf(vn, negatives);
}

TEST_CASE("state-change loss exact values") {
  RngStream rng(43);
  EncoderParams params = init_encoder_params(rng);

  Tensor s_now({1, env::kRobotStateDim});
  Tensor s_next({1, env::kRobotStateDim});
  for (std::size_t c = 0; c < env::kRobotStateDim; ++c) s_next.at(0, c) = 0.1 * (c + 1);
  Tensor z_now = random_latents(1, kVisualLatentDim, rng);
  Tensor z_next = random_latents(1, kVisualLatentDim, rng);

  // All-zero head: the loss is the norm of the state change itself.
  for (const std::string& name : params.delta.names()) params.delta.value(name).fill(0.0);
  double norm = 0.0;
  for (std::size_t c = 0; c < env::kRobotStateDim; ++c) {
    norm += s_next.at(0, c) * s_next.at(0, c);
  }
  norm = std::sqrt(norm);
  CHECK(delta_loss(params, s_now, s_next, z_now, z_next) == doctest::Approx(norm).epsilon(1e-12));

  // Head output pinned to the exact state change through the final bias.
  Tensor& b1 = params.delta.value("b1");
  for (std::size_t c = 0; c < env::kRobotStateDim; ++c) b1[c] = s_next.at(0, c);
  CHECK(delta_loss(params, s_now, s_next, z_now, z_next) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("state-change loss rejects mismatched state dims") {
  RngStream rng(47);
  EncoderParams params = init_encoder_params(rng);
  Tensor bad_state({1, 4});
  Tensor z = random_latents(1, kVisualLatentDim, rng);
  CHECK_THROWS_AS(delta_loss(params, bad_state, bad_state, z, z), ShapeError);
}

TEST_CASE("state-change gradient through the head matches finite differences") {
  RngStream rng(53);
  EncoderParams params = init_encoder_params(rng);
  Tensor s_now = random_latents(4, env::kRobotStateDim, rng, 0.3);
  Tensor s_next = random_latents(4, env::kRobotStateDim, rng, 0.3);
  Tensor z_now = random_latents(4, kVisualLatentDim, rng);
  Tensor z_next = random_latents(4, kVisualLatentDim, rng);

  Graph g;
  g.backward(delta_node(g, params, g.input(s_now), g.input(s_next), g.input(z_now),
                        g.input(z_next)));

  const double h = 1e-5;
  RngStream pick(59);
  for (const std::string& name : params.delta.names()) {
    const Tensor& grad = params.delta.grad(name);
    Tensor& value = params.delta.value(name);
    for (int probe = 0; probe < 8; ++probe) {
      std::size_t i = pick.uniform_index(value.numel());
      double keep = value[i];
      value[i] = keep + h;
      double up = delta_loss(params, s_now, s_next, z_now, z_next);
      value[i] = keep - h;
      double down = delta_loss(params, s_now, s_next, z_now, z_next);
      value[i] = keep;
      CHECK(rel_err(grad[i], (up - down) / (2 * h)) < 1e-4);
    }
  }
}

TEST_CASE("combined gradient is the sum of component gradients") {
  RngStream rng(61);
  const double lambda = 2.5;
  Tensor pooled_now = random_latents(6, kPooledDim, rng, 0.5);
  Tensor pooled_next = random_latents(6, kPooledDim, rng, 0.5);
  Tensor s_now = random_latents(6, env::kRobotStateDim, rng, 0.3);
  Tensor s_next = random_latents(6, env::kRobotStateDim, rng, 0.3);

  auto forward = [&](EncoderParams& p, Graph& g) {
    Var z_now = row_l2_normalize(forward_mlp(g, p.visual, p.visual_arch, "", g.input(pooled_now)));
    Var z_next =
        row_l2_normalize(forward_mlp(g, p.visual, p.visual_arch, "", g.input(pooled_next)));
    Var nce = infonce_inbatch_node(g, z_now, z_next);
    Var delta = delta_node(g, p, g.input(s_now), g.input(s_next), z_now, z_next);
    return std::pair{nce, delta};
  };

  EncoderParams combined = init_encoder_params(RngStream(7));
  {
    Graph g;
    auto [nce, delta] = forward(combined, g);
    g.backward(add(nce, scale(delta, lambda)));
  }
  EncoderParams split = init_encoder_params(RngStream(7));
  {
    Graph g;
    auto [nce, delta] = forward(split, g);
    g.backward(nce);
  }
  {
    Graph g;
    auto [nce, delta] = forward(split, g);
    g.backward(scale(delta, lambda));
  }

  // Split gradients accumulate across the two backward passes.
  for (const std::string& name : combined.visual.names()) {
    const Tensor& a = combined.visual.grad(name);
    const Tensor& b = split.visual.grad(name);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
  for (const std::string& name : combined.delta.names()) {
    const Tensor& a = combined.delta.grad(name);
    const Tensor& b = split.delta.grad(name);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("combined gradient matches finite differences end to end") {
  RngStream rng(67);
  const double lambda = 1.7;
  Tensor pooled_now = random_latents(5, kPooledDim, rng, 0.5);
  Tensor pooled_next = random_latents(5, kPooledDim, rng, 0.5);
  Tensor s_now = random_latents(5, env::kRobotStateDim, rng, 0.3);
  Tensor s_next = random_latents(5, env::kRobotStateDim, rng, 0.3);

  EncoderParams params = init_encoder_params(RngStream(11));
  auto evaluate = [&]() {
    Tensor z_now = encode_visual_batch(params, pooled_now);
    Tensor z_next = encode_visual_batch(params, pooled_next);
    return inbatch_reference(z_now, z_next) +
           lambda * delta_loss(params, s_now, s_next, z_now, z_next);
  };

  Graph g;
  Var z_now =
      row_l2_normalize(forward_mlp(g, params.visual, params.visual_arch, "", g.input(pooled_now)));
  Var z_next = row_l2_normalize(
      forward_mlp(g, params.visual, params.visual_arch, "", g.input(pooled_next)));
  Var loss = add(infonce_inbatch_node(g, z_now, z_next),
                 scale(delta_node(g, params, g.input(s_now), g.input(s_next), z_now, z_next),
                       lambda));
  g.backward(loss);

  const double h = 1e-5;
  RngStream pick(71);
  auto probe_set = [&](numerics::ParamSet& ps) {
    for (const std::string& name : ps.names()) {
      const Tensor& grad = ps.grad(name);
      Tensor& value = ps.value(name);
      for (int probe = 0; probe < 5; ++probe) {
        std::size_t i = pick.uniform_index(value.numel());
        double keep = value[i];
        value[i] = keep + h;
        double up = evaluate();
        value[i] = keep - h;
        double down = evaluate();
        value[i] = keep;
        CHECK(rel_err(grad[i], (up - down) / (2 * h)) < 1e-4);
      }
    }
  };
  probe_set(params.visual);
  probe_set(params.delta);
}

TEST_CASE("lambda calibration ratio and clamps") {
  CHECK(calibrate_lambda(1.0, 1.0) == 1.0);
  CHECK(calibrate_lambda(2.0, 0.5) == 4.0);
  CHECK(calibrate_lambda(1.0, 1e-9) == 1e3);
  CHECK(calibrate_lambda(1e-9, 1.0) == 1e-3);
  CHECK(calibrate_lambda(1.0, 0.0) == 1.0);
}

TEST_CASE("encoded latents are unit norm and deterministic") {
  RngStream rng(73);
  EncoderParams params = init_encoder_params(rng);

  env::TaskSpec task = env::make_task(env::TaskId::unstack);
  env::SimState s = env::reset_task(task);
  env::VisualObs obs = env::render_visual(s);
  Tensor z1 = encode_visual(params, obs);
  Tensor z2 = encode_visual(params, obs);
  CHECK(z1.values() == z2.values());
  double norm = 0.0;
  for (double v : z1.values()) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);

  // The all-black raster and all-zero tactile frame still land on the
  // sphere thanks to the off-zero final bias.
  env::VisualObs black;
  black.h = env::kRasterSize;
  black.w = env::kRasterSize;
  black.pix.assign(env::kRasterSize * env::kRasterSize, 0);
  Tensor zb = encode_visual(params, black);
  norm = 0.0;
  for (double v : zb.values()) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);

  env::TactileReading zero{};
  Tensor zt = encode_tactile(params, zero);
  CHECK(zt.numel() == kTactileLatentDim);
  norm = 0.0;
  for (double v : zt.values()) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);
}

TEST_CASE("training rejects demos shorter than the temporal gap") {
  env::Trajectory tiny = make_sweep_demo(0.4, 0.005, 4, 1);
  ReprTrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_visual_encoder({tiny}, cfg, RngStream(1)), DataError);
}

TEST_CASE("trained encoder aligns held-out sweeps better than its initialization") {
  std::vector<env::Trajectory> train_demos;
  std::uint64_t seed = 100;
  for (double x0 : {0.31, 0.32, 0.33, 0.34, 0.35, 0.36, 0.37, 0.38}) {
    for (double v : {0.009, 0.0095, 0.0105, 0.011, 0.0115, 0.012}) {
      train_demos.push_back(make_sweep_demo(x0, v, 30, seed++));
    }
  }
  env::Trajectory held_a = make_sweep_demo(0.32, 0.0095, 30, 900);
  env::Trajectory held_b = make_sweep_demo(0.34, 0.011, 30, 901);

  // Ten epochs sits inside the window where the temporal objective has
  // organized the latents by object position but has not yet started keying
  // on per-frame distractor placements to separate in-batch negatives; much
  // longer training degrades held-out retrieval again.
  ReprTrainConfig cfg;
  cfg.variant = LossVariant::contrastive_only;
  cfg.epochs = 10;
  cfg.batch = 64;
  cfg.lr = 5e-4;

  RngStream rng(77);
  EncoderParams before = init_encoder_params(rng);
  TrainLog log;
  EncoderParams after = train_visual_encoder(train_demos, cfg, rng, &log);

  double acc_before = alignment_accuracy(before, held_a, held_b);
  double acc_after = alignment_accuracy(after, held_a, held_b);
  INFO("alignment before ", acc_before, " after ", acc_after);
  CHECK(acc_after > acc_before);

  // The contrastive loss itself must have come down over training.
  REQUIRE(log.epochs.size() == 10);
  CHECK(log.epochs.back().l_nce < log.epochs.front().l_nce);
  // And the trained encoder separates rasters that differ only in object
  // position.
  env::SimState sa = held_a.steps[0].state;
  env::SimState sb = sa;
  sb.objects[0].x += 0.05;
  Tensor za = encode_visual(after, env::render_visual(sa));
  Tensor zb = encode_visual(after, env::render_visual(sb));
  double dot = 0.0;
  for (std::size_t i = 0; i < za.numel(); ++i) dot += za[i] * zb[i];
  CHECK(1.0 - dot > 1e-6);
}

TEST_CASE("loss variants share the data pipeline and touch only their params") {
  std::vector<env::Trajectory> demos;
  for (int d = 0; d < 2; ++d) demos.push_back(make_sweep_demo(0.35 + 0.01 * d, 0.007, 25, 70 + d));

  ReprTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 16;
  cfg.log_batches = true;

  TrainLog log_combined, log_contrastive, log_delta;
  cfg.variant = LossVariant::combined;
  EncoderParams p_combined = train_visual_encoder(demos, cfg, RngStream(5), &log_combined);
  cfg.variant = LossVariant::contrastive_only;
  EncoderParams p_contrastive = train_visual_encoder(demos, cfg, RngStream(5), &log_contrastive);
  cfg.variant = LossVariant::joint_difference;
  EncoderParams p_delta = train_visual_encoder(demos, cfg, RngStream(5), &log_delta);

  // Identical batch draws regardless of variant.
  REQUIRE(log_combined.batch_indices.size() == log_contrastive.batch_indices.size());
  REQUIRE(log_combined.batch_indices.size() == log_delta.batch_indices.size());
  for (std::size_t b = 0; b < log_combined.batch_indices.size(); ++b) {
    CHECK(log_combined.batch_indices[b] == log_contrastive.batch_indices[b]);
    CHECK(log_combined.batch_indices[b] == log_delta.batch_indices[b]);
  }

  // contrastive_only never computes the state-change term and leaves the
  // head exactly at initialization.
  EncoderParams fresh = init_encoder_params(RngStream(5));
  CHECK(param_sets_equal(p_contrastive.delta, fresh.delta));
  CHECK_FALSE(param_sets_equal(p_contrastive.visual, fresh.visual));
  for (const TrainEpoch& e : log_contrastive.epochs) {
    CHECK(std::isnan(e.l_delta));
    CHECK(std::isfinite(e.l_nce));
  }
  // joint_difference never computes the contrastive term.
  for (const TrainEpoch& e : log_delta.epochs) {
    CHECK(std::isnan(e.l_nce));
    CHECK(std::isfinite(e.l_delta));
  }
  // combined records both and a calibrated weight.
  for (const TrainEpoch& e : log_combined.epochs) {
    CHECK(std::isfinite(e.l_nce));
    CHECK(std::isfinite(e.l_delta));
    CHECK(e.lambda >= 1e-3);
    CHECK(e.lambda <= 1e3);
  }
  CHECK_FALSE(param_sets_equal(p_delta.delta, fresh.delta));
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  std::vector<env::Trajectory> demos;
  for (int d = 0; d < 2; ++d) demos.push_back(make_sweep_demo(0.36, 0.006, 20, 80 + d));

  ReprTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 16;
  EncoderParams a = train_visual_encoder(demos, cfg, RngStream(17));
  EncoderParams b = train_visual_encoder(demos, cfg, RngStream(17));
  CHECK(param_sets_equal(a.visual, b.visual));
  CHECK(param_sets_equal(a.delta, b.delta));

  a = train_tactile_encoder(std::move(a), demos, cfg, RngStream(19));
  b = train_tactile_encoder(std::move(b), demos, cfg, RngStream(19));
  CHECK(param_sets_equal(a.tactile, b.tactile));
}

TEST_CASE("combined training on a real demo keeps both loss terms finite") {
  env::TaskSpec task = env::make_task(env::TaskId::pinch_lift);
  env::SimState start = env::reset_task(task);
  env::Trajectory demo = env::preprocess_demo(
      env::record_demo_trajectory(task, start, env::scripted_expert(task, start), 21));

  ReprTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 16;
  TrainLog log;
  EncoderParams params = train_visual_encoder({demo}, cfg, RngStream(23), &log);
  REQUIRE(log.epochs.size() == 4);
  for (const TrainEpoch& e : log.epochs) {
    CHECK(std::isfinite(e.l_nce));
    CHECK(std::isfinite(e.l_delta));
  }

  params = train_tactile_encoder(std::move(params), {demo}, cfg, RngStream(29));
  Tensor z = encode_tactile(params, demo.steps.front().tactile);
  double norm = 0.0;
  for (double v : z.values()) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);
}

TEST_CASE("encoder checkpoints round-trip bit-exactly") {
  RngStream rng(83);
  EncoderParams params = init_encoder_params(rng);
  save_encoder_params("enc_test.ckpt", params);
  EncoderParams back = load_encoder_params("enc_test.ckpt");
  CHECK(param_sets_equal(params.visual, back.visual));
  CHECK(param_sets_equal(params.tactile, back.tactile));
  CHECK(param_sets_equal(params.delta, back.delta));

  env::TaskSpec task = env::make_task(env::TaskId::pinch_lift);
  env::VisualObs obs = env::render_visual(env::reset_task(task));
  CHECK(encode_visual(params, obs).values() == encode_visual(back, obs).values());
  std::remove("enc_test.ckpt");

  numerics::Checkpoint other;
  other.meta["kind"] = "policy";
  numerics::save_checkpoint("other_test.ckpt", other);
  CHECK_THROWS_AS(load_encoder_params("other_test.ckpt"), DataError);
  std::remove("other_test.ckpt");
}

TEST_CASE("training curve csv is written with one row per epoch") {
  TrainLog log;
  for (int e = 0; e < 3; ++e) {
    TrainEpoch row;
    row.epoch = e;
    row.l_nce = 1.5 - 0.25 * e;
    row.l_delta = 0.5;
    row.lambda = 3.0;
    log.epochs.push_back(row);
  }
  write_train_csv("curve_test.csv", log);
  std::ifstream in("curve_test.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,l_nce,l_delta,lambda");
  std::getline(in, line);
  CHECK(line == "0,1.5,0.5,3");
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
  std::remove("curve_test.csv");
}
