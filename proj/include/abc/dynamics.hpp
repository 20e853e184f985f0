#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "abc/attention.hpp"
#include "abc/checkpoint.hpp"
#include "abc/tensor.hpp"

namespace abc::dynamics {

struct Trajectory {
  std::vector<Tensor> states;        // X_0 … X_T
  std::vector<double> weight_floor;  // min_{i,j} w_{i,j,t} for t < T
};

// Queries and keys are X·wq and X·wk; empty projections mean identity.
struct AttentionSystem {
  CompatKind compat;
  Tensor wq, wk;
};

// x_{i,t+1} = Σ_j w_{i,j,t} x_{j,t} with softmax weights of the compatibility.
Trajectory simulate_attention(const Tensor& x0, std::size_t steps, const AttentionSystem& sys);
Tensor attention_step_weights(const Tensor& x, const AttentionSystem& sys);

double diameter(const Tensor& x);
// 2-D only: maximum distance between vertices of the convex hull.
double diameter_hull_2d(const Tensor& x);

struct HullReport {
  bool passed = true;
  // Largest amount by which a projected interval of next leaves that of prev.
  double worst_excess = 0.0;
};

// Projects both sets on random unit directions and checks that each interval
// of next stays within that of prev, up to 1e-10.
HullReport check_hull_containment(const Tensor& prev, const Tensor& next, std::size_t directions, std::uint64_t seed);

struct Lemma2Step {
  std::size_t t = 0;
  double diam = 0.0, diam_next = 0.0, floor = 0.0;
  double bound = 0.0;           // (1 − 2δ_t) diam_t
  double margin = 0.0;          // bound + 1e-9 − diam_{t+1}
  double external_margin = 0.0; // (1 − n δ_t / 4) diam_t − diam_{t+1}, recorded only
};

struct Lemma2Report {
  std::vector<Lemma2Step> steps;
  std::size_t violations = 0;
  double worst_margin = 0.0;
};

Lemma2Report check_lemma2(const Trajectory& traj);

// ---- two-cluster recurrence ---------------------------------------------------

struct Weights {
  double alpha = 0.0;  // within the first cluster
  double beta = 0.0;   // within the second cluster
  double gamma = 0.0;  // across clusters
  double delta = 0.0;  // self
};

struct WeightSchedule {
  std::size_t n = 1, m = 1;
  std::vector<Weights> steps;

  // Largest |row sum − 1| over both row types at step t.
  double residual(std::size_t t) const;
  // Throws ConfigError for non-positive weights or a residual above 1e-12.
  void validate() const;
  // (n + m) × (n + m) matrix: first n rows are the first cluster.
  Tensor matrix(std::size_t t) const;
};

enum class Regime {
  Any,
  // δ > max(α, β) and γ < min(α, β)
  Separating,
  AlphaAboveGamma,
  AlphaBelowGamma,
};

// Samples α, γ and solves the row-sum constraints for δ and β, redrawing
// when any value is non-positive or the regime is not met. When a cluster has
// a single element its within weight is irrelevant and set to γ.
Weights sample_weights(std::size_t n, std::size_t m, Regime regime, Rng& rng);
WeightSchedule random_schedule(std::size_t n, std::size_t m, std::size_t steps, Regime regime, std::uint64_t seed);
// Solves for δ, β from (n, m, α, γ). Returns false when infeasible.
bool solve_weights(std::size_t n, std::size_t m, double alpha, double gamma, Weights& out);

// With skip connections: X_{t+1} = X_t + W_t X_t.
Trajectory simulate_two_clusters(const Tensor& x0, const WeightSchedule& s, std::size_t steps);
// Without them: X_{t+1} = W_t X_t.
Trajectory simulate_no_skip(const Tensor& x0, const WeightSchedule& s, std::size_t steps);

struct Rates {
  double within_first = 0.0;   // 1 + δ − α
  double within_second = 0.0;  // 1 + δ − β
  double centroid = 0.0;       // 2 − (n + m) γ
  double ratio = 0.0;          // (2 − nα − mγ) / (2 − nγ − mγ)
  double ratio_second = 0.0;   // (2 − mβ − nγ) / (2 − nγ − mγ)
};

Rates rates(const WeightSchedule& s, std::size_t t);

struct IdentityReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_error = 0.0;  // scaled error, tolerance 1e-10
};

// Checks the within-cluster and centroid identities of every step, using
// the skip rates, or the same rates minus one when skip is false.
IdentityReport check_prop2(const Trajectory& traj, const WeightSchedule& s, bool skip = true);

Tensor centroid(const Tensor& x, std::size_t begin, std::size_t count);

// ---- suites -----------------------------------------------------------------

struct SuiteReport {
  std::string name;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_margin = 0.0;

  Json to_json() const;
};

SuiteReport lemma2_suite(std::size_t trials, std::uint64_t seed, std::size_t steps = 5);
SuiteReport hull_suite(std::size_t trials, std::uint64_t seed, std::size_t directions = 1000, std::size_t steps = 5);
SuiteReport prop2_suite(std::size_t trials, std::uint64_t seed, std::size_t steps = 5);
// Grid over sizes 1..6 and α, γ values.
SuiteReport corollary_suite(std::size_t grid = 12);
SuiteReport noskip_suite(std::size_t trials, std::uint64_t seed, std::size_t steps = 5);

std::string trajectory_to_csv(const Trajectory& traj);

}  // namespace abc::dynamics
