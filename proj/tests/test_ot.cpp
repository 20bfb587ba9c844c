#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tavi/errors.hpp"
#include "tavi/numerics/rng.hpp"
#include "tavi/ot/ot.hpp"

using namespace tavi;
using namespace tavi::ot;
using tavi::numerics::RngStream;

namespace {

LatentSeq random_latents(RngStream& rng, std::size_t count, std::size_t dim) {
  LatentSeq out(count, Latent(dim));
  for (auto& z : out) {
    for (auto& v : z) v = rng.normal();
  }
  return out;
}

CostMatrix random_cost(RngStream& rng, std::size_t rows, std::size_t cols, double hi = 2.0) {
  CostMatrix c;
  c.rows = rows;
  c.cols = cols;
  c.entries.resize(rows * cols);
  for (auto& v : c.entries) v = rng.uniform(0.0, hi);
  return c;
}

// Independent brute-force optimum: enumerate permutations directly here so
// the module's own oracle is cross-checked by a second route.
double brute_force_square_cost(const CostMatrix& c) {
  std::vector<std::size_t> perm(c.rows);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i) s += c.at(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(c.rows);
}

void check_marginals(const TransportPlan& plan, double tol) {
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) row += plan.at(i, j);
    CHECK(std::abs(row - 1.0 / static_cast<double>(plan.rows)) <= tol);
  }
  for (std::size_t j = 0; j < plan.cols; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) col += plan.at(i, j);
    CHECK(std::abs(col - 1.0 / static_cast<double>(plan.cols)) <= tol);
  }
}

}  // namespace

TEST_CASE("pairwise_cost: cosine endpoints") {
  Latent x = {1.0, 0.0};
  Latent y = {0.0, 1.0};
  Latent nx = {-2.0, 0.0};
  CostMatrix c = pairwise_cost({x}, {x});
  CHECK(c.at(0, 0) == 0.0);
  c = pairwise_cost({x}, {y});
  CHECK(std::abs(c.at(0, 0) - 1.0) <= 1e-15);
  c = pairwise_cost({x}, {nx});
  CHECK(std::abs(c.at(0, 0) - 2.0) <= 1e-15);
}

TEST_CASE("pairwise_cost: zero-norm latent is rejected for cosine") {
  CHECK_THROWS_AS(pairwise_cost({{0.0, 0.0}}, {{1.0, 0.0}}), DataError);
  // Euclidean has no direction requirement.
  CostMatrix c = pairwise_cost({{0.0, 0.0}}, {{3.0, 4.0}}, CostMetric::euclidean);
  CHECK(std::abs(c.at(0, 0) - 5.0) <= 1e-15);
}

TEST_CASE("sinkhorn: 1x1 instance returns the trivial plan") {
  CostMatrix c{1, 1, {0.7}};
  TransportPlan p = sinkhorn(c);
  CHECK(p.converged);
  CHECK(p.at(0, 0) == 1.0);
}

TEST_CASE("sinkhorn: distinct pair concentrates on the diagonal") {
  CostMatrix c{2, 2, {0.0, 1.0, 1.0, 0.0}};
  SinkhornConfig cfg;
  cfg.epsilon = 0.01;
  TransportPlan p = sinkhorn(c, cfg);
  CHECK(p.converged);
  CHECK(std::abs(p.at(0, 0) - 0.5) <= 1e-6);
  CHECK(std::abs(p.at(1, 1) - 0.5) <= 1e-6);
  CHECK(p.transport_cost(c) <= 1e-6);
}

TEST_CASE("sinkhorn: invalid epsilon is a config error") {
  CostMatrix c{2, 2, {0.0, 1.0, 1.0, 0.0}};
  SinkhornConfig cfg;
  cfg.epsilon = -0.5;
  CHECK_THROWS_AS(sinkhorn(c, cfg), ConfigError);
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(sinkhorn(c, cfg), ConfigError);
}

TEST_CASE("sinkhorn: marginals feasible and objective nonincreasing on random instances") {
  RngStream rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t rows = 2 + rng.uniform_index(5);
    std::size_t cols = 2 + rng.uniform_index(5);
    CostMatrix c = random_cost(rng, rows, cols);
    // Default solver settings; feasibility must hold whether or not the
    // convergence flag is set.
    TransportPlan p = sinkhorn(c);
    check_marginals(p, 1e-9);
    for (double m : p.mass) CHECK(m >= 0.0);
    for (std::size_t k = 1; k < p.objective_history.size(); ++k) {
      CHECK(p.objective_history[k] <= p.objective_history[k - 1] + 1e-9);
    }
  }
}

TEST_CASE("sinkhorn: tame regularizer converges within the default budget") {
  RngStream rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    CostMatrix c = random_cost(rng, 4, 6);
    SinkhornConfig cfg;
    cfg.epsilon = 0.5;
    TransportPlan p = sinkhorn(c, cfg);
    CHECK(p.converged);
    CHECK(p.iterations < cfg.max_iters);
    check_marginals(p, 1e-9);
  }
}

TEST_CASE("sinkhorn agrees with the enumeration oracle on small square instances") {
  RngStream rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t n = 2 + rng.uniform_index(4);  // 2..5
    CostMatrix c = random_cost(rng, n, n);
    SinkhornConfig cfg;
    cfg.epsilon = 0.01;
    cfg.max_iters = 4000;
    TransportPlan approx = sinkhorn(c, cfg);
    TransportPlan exact = exact_ot_oracle(c);
    CHECK(std::abs(approx.transport_cost(c) - exact.transport_cost(c)) <= 1e-3);
  }
}

TEST_CASE("exact_ot_oracle: forced single-column and single-row plans") {
  CostMatrix col{4, 1, {0.5, 0.25, 1.0, 0.125}};
  TransportPlan p = exact_ot_oracle(col);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(i, 0) == 0.25);
  CostMatrix row{1, 3, {0.5, 0.25, 1.0}};
  p = exact_ot_oracle(row);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(p.at(0, j) - 1.0 / 3.0) <= 1e-15);
}

TEST_CASE("exact_ot_oracle: diagonal-favoring matrix selects the diagonal") {
  CostMatrix c{3, 3, {0.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 0.0}};
  TransportPlan p = exact_ot_oracle(c);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p.at(i, i) - 1.0 / 3.0) <= 1e-15);
  CHECK(p.transport_cost(c) == 0.0);
}

TEST_CASE("exact_ot_oracle: never beaten by any enumerated permutation") {
  RngStream rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 2 + rng.uniform_index(4);
    CostMatrix c = random_cost(rng, n, n);
    TransportPlan p = exact_ot_oracle(c);
    CHECK(std::abs(p.transport_cost(c) - brute_force_square_cost(c)) <= 1e-12);
  }
}

TEST_CASE("exact_ot_oracle: oversized or rectangular instances are rejected") {
  RngStream rng(5);
  CostMatrix big = random_cost(rng, 7, 7);
  CHECK_THROWS_AS(exact_ot_oracle(big), ConfigError);
  CostMatrix rect = random_cost(rng, 3, 4);
  CHECK_THROWS_AS(exact_ot_oracle(rect), ConfigError);
}

TEST_CASE("trajectory_reward: identical final frames give zero reward") {
  RngStream rng(17);
  LatentSeq expert = random_latents(rng, 6, 8);
  LatentSeq robot = expert;
  FrameMatchConfig frames{1, 1};
  TrajectoryReward r = trajectory_reward(robot, expert, frames);
  CHECK(r.total == 0.0);
  CHECK(r.per_frame.back() == 0.0);
  for (std::size_t t = 0; t + 1 < r.per_frame.size(); ++t) CHECK(r.per_frame[t] == 0.0);
}

TEST_CASE("trajectory_reward: single expert frame forces the plan and the closed form") {
  RngStream rng(19);
  LatentSeq expert = random_latents(rng, 9, 8);
  LatentSeq robot = random_latents(rng, 25, 8);
  FrameMatchConfig frames{10, 1};
  TrajectoryReward r = trajectory_reward(robot, expert, frames);
  CostMatrix window = pairwise_cost(LatentSeq(robot.end() - 10, robot.end()),
                                    LatentSeq(expert.end() - 1, expert.end()));
  for (std::size_t i = 0; i < 10; ++i) {
    double expected = -window.at(i, 0) / 10.0;
    CHECK(std::abs(r.per_frame[15 + i] - expected) <= 1e-12);
  }
  for (std::size_t t = 0; t < 15; ++t) CHECK(r.per_frame[t] == 0.0);
}

TEST_CASE("trajectory_reward: rewards are never positive and window clamps") {
  RngStream rng(29);
  LatentSeq expert = random_latents(rng, 4, 8);
  LatentSeq robot = random_latents(rng, 5, 8);
  FrameMatchConfig frames{10, 2};  // clamps to all 5 robot frames
  TrajectoryReward r = trajectory_reward(robot, expert, frames);
  for (double v : r.per_frame) CHECK(v <= 0.0);
  CHECK(r.plan.rows == 5);
  CHECK(r.plan.cols == 2);
}

TEST_CASE("trajectory_reward: self-match with all frames included is zero-cost") {
  RngStream rng(37);
  LatentSeq expert = random_latents(rng, 12, 8);
  FrameMatchConfig frames{12, 12};
  SinkhornConfig solver;
  solver.epsilon = 0.01;
  solver.max_iters = 5000;
  TrajectoryReward r = trajectory_reward(expert, expert, frames, CostMetric::cosine, solver);
  // Identity matching is feasible and zero-cost; the entropic smoothing may
  // leave a small epsilon-scale residue.
  double tol = solver.epsilon * std::log(12.0 + 1.0);
  CHECK(std::abs(r.total) <= tol);
}

TEST_CASE("total reward is invariant under a shared permutation of both frame sets") {
  RngStream rng(41);
  LatentSeq frames_a = random_latents(rng, 5, 8);
  LatentSeq frames_b = random_latents(rng, 5, 8);
  CostMatrix c = pairwise_cost(frames_a, frames_b);
  SinkhornConfig cfg;
  cfg.epsilon = 0.05;
  cfg.max_iters = 5000;
  double base = sinkhorn(c, cfg).transport_cost(c);

  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  LatentSeq pa(5), pb(5);
  for (std::size_t i = 0; i < 5; ++i) {
    pa[i] = frames_a[perm[i]];
    pb[i] = frames_b[perm[i]];
  }
  CostMatrix cp = pairwise_cost(pa, pb);
  double permuted = sinkhorn(cp, cfg).transport_cost(cp);
  CHECK(std::abs(base - permuted) <= 1e-6);
}

TEST_CASE("delayed copy scores strictly better than a constant trajectory") {
  RngStream rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    LatentSeq expert = random_latents(rng, 6, 8);
    LatentSeq delayed;
    delayed.push_back(expert[0]);
    for (std::size_t t = 0; t + 1 < expert.size(); ++t) delayed.push_back(expert[t]);
    LatentSeq constant(expert.size(), expert[0]);

    CostMatrix c_delayed = pairwise_cost(delayed, expert);
    CostMatrix c_constant = pairwise_cost(constant, expert);
    double delayed_total = -exact_ot_oracle(c_delayed).transport_cost(c_delayed);
    double constant_total = -exact_ot_oracle(c_constant).transport_cost(c_constant);
    CHECK(delayed_total > constant_total);
  }
}

TEST_CASE("csv export writes one row per robot frame") {
  CostMatrix c{2, 3, {0.5, 1.0, 1.5, 0.25, 0.75, 1.25}};
  std::string path = "ot_cost_test.csv";
  write_cost_csv(path, c);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "0.5,1,1.5");
  std::getline(in, line);
  CHECK(line == "0.25,0.75,1.25");
  CHECK(!std::getline(in, line));
  std::remove(path.c_str());
}
