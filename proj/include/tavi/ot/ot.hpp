#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tavi::ot {

using Latent = std::vector<double>;
using LatentSeq = std::vector<Latent>;

enum class CostMetric { cosine, euclidean };

CostMetric metric_from_name(const std::string& name);
std::string metric_name(CostMetric metric);

// Pairwise frame cost matrix. Rows index robot frames, columns expert frames.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;  // row-major

  double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return entries[r * cols + c]; }
};

// Coupling with uniform marginals (1/rows on each row, 1/cols on each column).
struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> mass;  // row-major
  bool converged = false;
  std::size_t iterations = 0;
  // Solver objective after each outer iteration (negated dual, a
  // minimization objective); nonincreasing in exact arithmetic.
  std::vector<double> objective_history;

  double at(std::size_t r, std::size_t c) const { return mass[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return mass[r * cols + c]; }
  double transport_cost(const CostMatrix& cost) const;
};

// Cosine distance (1 - cosine similarity, range [0,2]) or Euclidean distance
// between every robot/expert latent pair. Cosine on a zero-norm latent is a
// DataError since the direction is undefined.
CostMatrix pairwise_cost(const LatentSeq& robot, const LatentSeq& expert,
                         CostMetric metric = CostMetric::cosine);

struct SinkhornConfig {
  double epsilon = 0.05;       // entropic regularizer, must be > 0
  std::size_t max_iters = 500;
  double tolerance = 1e-6;     // max-abs marginal violation target
};

// Entropic OT between uniform marginals, solved in the log domain with the
// regularizer annealed down to its target (peaked kernels stall otherwise).
// `iterations` and `objective_history` cover the sweeps at the target
// regularizer; the annealing warmup is not reported. The returned coupling
// is rounded onto the transport polytope, so marginals hold to float
// precision even when the flag reports non-convergence. Non-positive
// epsilon is a ConfigError. Single-row and single-column instances
// short-circuit to the (unique) feasible plan.
TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornConfig& cfg = {});

// Unregularized optimum for instances small enough to enumerate: square
// matrices up to 6x6 (permutation enumeration; ties broken towards the
// lexicographically smallest permutation) and single-row/column instances
// where the plan is forced. Anything else is a ConfigError.
TransportPlan exact_ot_oracle(const CostMatrix& cost);

// Frame-matching window. Counts are clamped to the available frames.
struct FrameMatchConfig {
  std::size_t episode_frames = 10;  // trailing robot frames entering the match
  std::size_t expert_frames = 1;    // trailing expert frames entering the match
};

struct TrajectoryReward {
  std::vector<double> per_frame;  // one entry per robot frame, 0 outside the window
  double total = 0.0;
  CostMatrix window_cost;         // cost over the matched window only
  TransportPlan plan;
};

// Per-frame reward r[t] = -sum_j C[t][j] * plan[t][j] over the windowed
// subproblem; frames outside the window receive exactly 0. Rewards are never
// positive.
TrajectoryReward trajectory_reward(const LatentSeq& robot, const LatentSeq& expert,
                                   const FrameMatchConfig& frames = {},
                                   CostMetric metric = CostMetric::cosine,
                                   const SinkhornConfig& solver = {});

// CSV export, one row per robot frame, one column per expert frame.
void write_cost_csv(const std::string& path, const CostMatrix& cost);
void write_plan_csv(const std::string& path, const TransportPlan& plan);

}  // namespace tavi::ot
