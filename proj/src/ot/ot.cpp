#include "tavi/ot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tavi/errors.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::ot {

namespace {

void check_cost(const CostMatrix& cost, const char* where) {
  if (cost.rows == 0 || cost.cols == 0) {
    throw ConfigError(std::string(where) + ": empty cost matrix");
  }
  if (cost.entries.size() != cost.rows * cost.cols) {
    throw ConfigError(std::string(where) + ": cost entry count mismatch");
  }
  for (double c : cost.entries) {
    if (!std::isfinite(c)) throw NumericError(std::string(where) + ": non-finite cost");
  }
}

// The only feasible coupling when one side has a single frame.
TransportPlan forced_plan(std::size_t rows, std::size_t cols) {
  TransportPlan plan;
  plan.rows = rows;
  plan.cols = cols;
  plan.mass.assign(rows * cols, 1.0 / static_cast<double>(rows) / static_cast<double>(cols));
  plan.converged = true;
  plan.iterations = 0;
  return plan;
}

double logsumexp(const std::vector<double>& terms) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : terms) mx = std::max(mx, t);
  if (!std::isfinite(mx)) throw NumericError("sinkhorn: degenerate logsumexp");
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

}  // namespace

CostMetric metric_from_name(const std::string& name) {
  if (name == "cosine") return CostMetric::cosine;
  if (name == "euclidean") return CostMetric::euclidean;
  throw ConfigError("unknown cost metric: " + name);
}

std::string metric_name(CostMetric metric) {
  return metric == CostMetric::cosine ? "cosine" : "euclidean";
}

double TransportPlan::transport_cost(const CostMatrix& cost) const {
  if (cost.rows != rows || cost.cols != cols) {
    throw ConfigError("transport_cost: plan and cost shapes differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) acc += mass[i] * cost.entries[i];
  return acc;
}

CostMatrix pairwise_cost(const LatentSeq& robot, const LatentSeq& expert, CostMetric metric) {
  if (robot.empty() || expert.empty()) throw DataError("pairwise_cost: empty latent sequence");
  const std::size_t dim = robot.front().size();
  for (const auto& z : robot) {
    if (z.size() != dim) throw ShapeError("pairwise_cost: ragged robot latents");
  }
  for (const auto& z : expert) {
    if (z.size() != dim) throw ShapeError("pairwise_cost: robot/expert latent dims differ");
  }

  CostMatrix cost;
  cost.rows = robot.size();
  cost.cols = expert.size();
  cost.entries.resize(cost.rows * cost.cols);

  if (metric == CostMetric::cosine) {
    auto norm = [](const Latent& z) {
      double acc = 0.0;
      for (double v : z) acc += v * v;
      return std::sqrt(acc);
    };
    std::vector<double> rn(cost.rows), en(cost.cols);
    for (std::size_t i = 0; i < cost.rows; ++i) {
      rn[i] = norm(robot[i]);
      if (rn[i] == 0.0) throw DataError("pairwise_cost: zero-norm latent has no cosine direction");
    }
    for (std::size_t j = 0; j < cost.cols; ++j) {
      en[j] = norm(expert[j]);
      if (en[j] == 0.0) throw DataError("pairwise_cost: zero-norm latent has no cosine direction");
    }
    for (std::size_t i = 0; i < cost.rows; ++i) {
      for (std::size_t j = 0; j < cost.cols; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) dot += robot[i][d] * expert[j][d];
        // Clamp away the ulp of rounding so costs are never negative.
        cost.at(i, j) = std::max(0.0, 1.0 - dot / (rn[i] * en[j]));
      }
    }
  } else {
    for (std::size_t i = 0; i < cost.rows; ++i) {
      for (std::size_t j = 0; j < cost.cols; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          double diff = robot[i][d] - expert[j][d];
          acc += diff * diff;
        }
        cost.at(i, j) = std::sqrt(acc);
      }
    }
  }
  check_cost(cost, "pairwise_cost");
  return cost;
}

TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornConfig& cfg) {
  check_cost(cost, "sinkhorn");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("sinkhorn: epsilon must be positive");
  if (cost.rows == 1 || cost.cols == 1) return forced_plan(cost.rows, cost.cols);

  const std::size_t R = cost.rows, C = cost.cols;
  const double la = std::log(1.0 / static_cast<double>(R));
  const double lb = std::log(1.0 / static_cast<double>(C));

  // Scaled potentials phi = f/eps, gamma = g/eps. When the regularizer
  // changes between annealing stages, f = eps*phi is carried over and
  // rescaled so the warm start stays meaningful.
  std::vector<double> phi(R, 0.0), gamma(C, 0.0);
  std::vector<double> terms(std::max(R, C));
  TransportPlan plan;
  plan.rows = R;
  plan.cols = C;
  plan.mass.assign(R * C, 0.0);

  // One full (gamma, phi) sweep at the given regularizer. Returns the
  // column-marginal violation; rows are exact after the phi update.
  auto sweep = [&](double eps) {
    const double inv_eps = 1.0 / eps;
    for (std::size_t j = 0; j < C; ++j) {
      terms.resize(R);
      for (std::size_t i = 0; i < R; ++i) terms[i] = phi[i] - cost.at(i, j) * inv_eps;
      gamma[j] = lb - logsumexp(terms);
    }
    for (std::size_t i = 0; i < R; ++i) {
      terms.resize(C);
      for (std::size_t j = 0; j < C; ++j) terms[j] = gamma[j] - cost.at(i, j) * inv_eps;
      phi[i] = la - logsumexp(terms);
    }
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) {
        plan.at(i, j) = std::exp(phi[i] + gamma[j] - cost.at(i, j) * inv_eps);
      }
    }
    double violation = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < R; ++i) col += plan.at(i, j);
      violation = std::max(violation, std::abs(col - 1.0 / static_cast<double>(C)));
    }
    return violation;
  };

  // Direct iteration stalls when the kernel exp(-C/eps) is very peaked, so
  // anneal the regularizer down to its target, warm-starting each stage.
  double max_cost = *std::max_element(cost.entries.begin(), cost.entries.end());
  double stage_eps = std::max(cfg.epsilon, max_cost);
  while (stage_eps > cfg.epsilon) {
    for (int k = 0; k < 50; ++k) {
      if (sweep(stage_eps) <= 1e-3) break;
    }
    double next_eps = std::max(cfg.epsilon, 0.5 * stage_eps);
    double rescale = stage_eps / next_eps;
    for (auto& v : phi) v *= rescale;
    for (auto& v : gamma) v *= rescale;
    stage_eps = next_eps;
  }

  // Final stage at the target regularizer; only these iterations are
  // reported and only they feed the objective history.
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    double violation = sweep(cfg.epsilon);

    // Negated soft dual; block-coordinate ascent makes it nonincreasing.
    double mass_total = 0.0;
    for (double p : plan.mass) mass_total += p;
    double dual = 0.0;
    for (std::size_t i = 0; i < R; ++i) dual += phi[i] * std::exp(la);
    for (std::size_t j = 0; j < C; ++j) dual += gamma[j] * std::exp(lb);
    dual = cfg.epsilon * (dual - mass_total);
    plan.objective_history.push_back(-dual);
    plan.iterations = iter;

    if (violation <= cfg.tolerance) {
      plan.converged = true;
      break;
    }
  }

  // Round onto the transport polytope: shrink overfull rows, then overfull
  // columns, then spread the missing mass as a rank-one correction. Entries
  // stay nonnegative and the cost shift is bounded by the residual
  // violation, so feasibility holds even when the sweep budget ran out.
  const double a = 1.0 / static_cast<double>(R);
  const double b = 1.0 / static_cast<double>(C);
  for (std::size_t i = 0; i < R; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < C; ++j) row += plan.at(i, j);
    if (row > a) {
      double scale = a / row;
      for (std::size_t j = 0; j < C; ++j) plan.at(i, j) *= scale;
    }
  }
  for (std::size_t j = 0; j < C; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < R; ++i) col += plan.at(i, j);
    if (col > b) {
      double scale = b / col;
      for (std::size_t i = 0; i < R; ++i) plan.at(i, j) *= scale;
    }
  }
  std::vector<double> row_deficit(R, 0.0), col_deficit(C, 0.0);
  double missing = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < C; ++j) row += plan.at(i, j);
    row_deficit[i] = std::max(0.0, a - row);
    missing += row_deficit[i];
  }
  for (std::size_t j = 0; j < C; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < R; ++i) col += plan.at(i, j);
    col_deficit[j] = std::max(0.0, b - col);
  }
  if (missing > 0.0) {
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) {
        plan.at(i, j) += row_deficit[i] * col_deficit[j] / missing;
      }
    }
  }
  return plan;
}

TransportPlan exact_ot_oracle(const CostMatrix& cost) {
  check_cost(cost, "exact_ot_oracle");
  if (cost.rows == 1 || cost.cols == 1) return forced_plan(cost.rows, cost.cols);
  if (cost.rows != cost.cols) {
    throw ConfigError("exact_ot_oracle: only square or single-row/column instances");
  }
  const std::size_t n = cost.rows;
  if (n > 6) throw ConfigError("exact_ot_oracle: instance too large to enumerate");

  // With uniform marginals the optimum of the linear program sits on a
  // permutation (Birkhoff); enumerate all of them.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost.at(i, perm[i]);
    if (s < best_sum) {
      best_sum = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  TransportPlan plan;
  plan.rows = n;
  plan.cols = n;
  plan.mass.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) plan.at(i, best[i]) = 1.0 / static_cast<double>(n);
  plan.converged = true;
  plan.objective_history = {best_sum / static_cast<double>(n)};
  return plan;
}

TrajectoryReward trajectory_reward(const LatentSeq& robot, const LatentSeq& expert,
                                   const FrameMatchConfig& frames, CostMetric metric,
                                   const SinkhornConfig& solver) {
  if (robot.empty() || expert.empty()) throw DataError("trajectory_reward: empty trajectory");
  if (frames.episode_frames == 0 || frames.expert_frames == 0) {
    throw ConfigError("trajectory_reward: frame-match counts must be positive");
  }
  const std::size_t T_r = robot.size();
  const std::size_t T_e = expert.size();
  const std::size_t k_r = std::min(frames.episode_frames, T_r);
  const std::size_t k_e = std::min(frames.expert_frames, T_e);

  LatentSeq robot_window(robot.end() - static_cast<std::ptrdiff_t>(k_r), robot.end());
  LatentSeq expert_window(expert.end() - static_cast<std::ptrdiff_t>(k_e), expert.end());

  TrajectoryReward out;
  out.window_cost = pairwise_cost(robot_window, expert_window, metric);
  out.plan = sinkhorn(out.window_cost, solver);
  out.per_frame.assign(T_r, 0.0);
  const std::size_t offset = T_r - k_r;
  for (std::size_t i = 0; i < k_r; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < k_e; ++j) {
      r -= out.window_cost.at(i, j) * out.plan.at(i, j);
    }
    out.per_frame[offset + i] = r;
    out.total += r;
  }
  return out;
}

namespace {

void write_matrix_csv(const std::string& path, std::size_t rows, std::size_t cols,
                      const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("csv export: cannot open " + path);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out << ",";
      out << numerics::format_double(data[i * cols + j]);
    }
    out << "\n";
  }
  if (!out) throw DataError("csv export: write failed " + path);
}

}  // namespace

void write_cost_csv(const std::string& path, const CostMatrix& cost) {
  write_matrix_csv(path, cost.rows, cost.cols, cost.entries);
}

void write_plan_csv(const std::string& path, const TransportPlan& plan) {
  write_matrix_csv(path, plan.rows, plan.cols, plan.mass);
}

}  // namespace tavi::ot
