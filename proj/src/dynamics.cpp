#include "abc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "abc/errors.hpp"
#include "abc/io.hpp"
#include "abc/rng.hpp"

namespace abc::dynamics {

Tensor attention_step_weights(const Tensor& x, const AttentionSystem& sys) {
  const Tensor q = sys.wq.empty() ? x : matmul(x, sys.wq);
  const Tensor k = sys.wk.empty() ? x : matmul(x, sys.wk);
  return attention_weights(q, k, sys.compat);
}

Trajectory simulate_attention(const Tensor& x0, std::size_t steps, const AttentionSystem& sys) {
  if (x0.rows() < 2) throw DataError("simulate_attention needs at least two points");
  Trajectory tr;
  tr.states.push_back(x0);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor& x = tr.states.back();
    const Tensor w = attention_step_weights(x, sys);
    double floor = std::numeric_limits<double>::infinity();
    for (double v : w.values()) floor = std::min(floor, v);
    tr.weight_floor.push_back(floor);
    tr.states.push_back(matmul(w, x));
  }
  return tr;
}

double diameter(const Tensor& x) {
  double best = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - x(j, c);
        s += d * d;
      }
      best = std::max(best, s);
    }
  return std::sqrt(best);
}

double diameter_hull_2d(const Tensor& x) {
  if (x.cols() != 2) throw ShapeError("diameter_hull_2d needs 2-D points, got " + x.shape_string());
  using P = std::pair<double, double>;
  std::vector<P> pts;
  for (std::size_t i = 0; i < x.rows(); ++i) pts.emplace_back(x(i, 0), x(i, 1));
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) {
    Tensor t(pts.size(), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) t(i, 0) = pts[i].first, t(i, 1) = pts[i].second;
    return diameter(t);
  }
  auto cross = [](const P& o, const P& a, const P& b) {
    return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
  };
  // Andrew's monotone chain.
  std::vector<P> hull(2 * pts.size());
  std::size_t k = 0;
  for (const P& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, low = k + 1; i-- > 0;) {
    while (k >= low && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  Tensor h(hull.size(), 2);
  for (std::size_t i = 0; i < hull.size(); ++i) h(i, 0) = hull[i].first, h(i, 1) = hull[i].second;
  return diameter(h);
}

HullReport check_hull_containment(const Tensor& prev, const Tensor& next, std::size_t directions, std::uint64_t seed) {
  if (prev.cols() != next.cols())
    throw ShapeError("hull check: dimensions differ, " + prev.shape_string() + " vs " + next.shape_string());
  Rng rng(seed);
  const std::size_t d = prev.cols();
  HullReport r;
  std::vector<double> u(d);
  for (std::size_t k = 0; k < directions; ++k) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
    auto interval = [&](const Tensor& x) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double p = 0.0;
        for (std::size_t c = 0; c < d; ++c) p += x(i, c) * u[c];
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      return std::pair{lo, hi};
    };
    const auto [plo, phi] = interval(prev);
    const auto [nlo, nhi] = interval(next);
    r.worst_excess = std::max({r.worst_excess, plo - nlo, nhi - phi});
  }
  r.passed = r.worst_excess <= 1e-10;
  return r;
}

Lemma2Report check_lemma2(const Trajectory& traj) {
  if (traj.weight_floor.size() + 1 != traj.states.size())
    throw DataError("trajectory lacks weight floors for its steps");
  Lemma2Report r;
  r.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < traj.weight_floor.size(); ++t) {
    Lemma2Step s;
    s.t = t;
    s.diam = diameter(traj.states[t]);
    s.diam_next = diameter(traj.states[t + 1]);
    s.floor = traj.weight_floor[t];
    s.bound = (1.0 - 2.0 * s.floor) * s.diam;
    s.margin = s.bound + 1e-9 - s.diam_next;
    const double n = static_cast<double>(traj.states[t].rows());
    s.external_margin = (1.0 - n * s.floor / 4.0) * s.diam - s.diam_next;
    if (s.margin < 0.0) ++r.violations;
    r.worst_margin = std::min(r.worst_margin, s.margin);
    r.steps.push_back(s);
  }
  return r;
}

// ---- two-cluster recurrence ---------------------------------------------------------

double WeightSchedule::residual(std::size_t t) const {
  const Weights& w = steps.at(t);
  const double r1 = w.delta + static_cast<double>(n - 1) * w.alpha + static_cast<double>(m) * w.gamma - 1.0;
  const double r2 = w.delta + static_cast<double>(m - 1) * w.beta + static_cast<double>(n) * w.gamma - 1.0;
  return std::max(std::abs(r1), std::abs(r2));
}

void WeightSchedule::validate() const {
  if (n == 0 || m == 0) throw ConfigError("both clusters need at least one element");
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Weights& w = steps[t];
    if (!(w.alpha > 0.0 && w.beta > 0.0 && w.gamma > 0.0 && w.delta > 0.0))
      throw ConfigError("weights at step " + std::to_string(t) + " must all be positive");
    if (residual(t) > 1e-12)
      throw ConfigError("weights at step " + std::to_string(t) + " violate the row-sum constraints by " +
                        format_double(residual(t)));
  }
}

Tensor WeightSchedule::matrix(std::size_t t) const {
  const Weights& w = steps.at(t);
  const std::size_t total = n + m;
  Tensor out(total, total);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = 0; j < total; ++j) {
      const bool fi = i < n, fj = j < n;
      out(i, j) = i == j ? w.delta : (fi != fj ? w.gamma : (fi ? w.alpha : w.beta));
    }
  return out;
}

bool solve_weights(std::size_t n, std::size_t m, double alpha, double gamma, Weights& out) {
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  if (n == 1) alpha = gamma;
  const double delta = 1.0 - (dn - 1.0) * alpha - dm * gamma;
  double beta = gamma;
  if (m > 1) {
    beta = (1.0 - delta - dn * gamma) / (dm - 1.0);
  } else if (std::abs(1.0 - delta - dn * gamma) > 1e-12) {
    return false;
  }
  out = {alpha, beta, gamma, delta};
  return alpha > 0.0 && beta > 0.0 && gamma > 0.0 && delta > 0.0;
}

namespace {

bool regime_met(const Weights& w, Regime regime) {
  switch (regime) {
    case Regime::Any:
      return true;
    case Regime::Separating:
      return w.delta > std::max(w.alpha, w.beta) && w.gamma < std::min(w.alpha, w.beta);
    case Regime::AlphaAboveGamma:
      return w.alpha > w.gamma;
    case Regime::AlphaBelowGamma:
      return w.alpha < w.gamma;
  }
  return false;
}

}  // namespace

Weights sample_weights(std::size_t n, std::size_t m, Regime regime, Rng& rng) {
  if (n == 0 || m == 0) throw ConfigError("both clusters need at least one element");
  if ((n == 1 || m == 1) && (regime == Regime::AlphaAboveGamma || regime == Regime::AlphaBelowGamma))
    throw ConfigError("a singleton cluster forces α = γ");
  if ((n == 1 || m == 1) && regime == Regime::Separating)
    throw ConfigError("a singleton cluster forces α = β = γ, so γ < min(α, β) cannot hold");
  const double total = static_cast<double>(n + m);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double gamma = rng.uniform(0.0, 1.0 / total);
    const double alpha = m == 1 ? gamma : rng.uniform(0.0, 1.0 / static_cast<double>(std::max<std::size_t>(n, 2)));
    Weights w;
    if (solve_weights(n, m, alpha, gamma, w) && regime_met(w, regime)) return w;
  }
  throw ConfigError("no feasible weights found for n=" + std::to_string(n) + ", m=" + std::to_string(m));
}

WeightSchedule random_schedule(std::size_t n, std::size_t m, std::size_t steps, Regime regime, std::uint64_t seed) {
  Rng rng(seed);
  WeightSchedule s{n, m, {}};
  for (std::size_t t = 0; t < steps; ++t) s.steps.push_back(sample_weights(n, m, regime, rng));
  s.validate();
  return s;
}

namespace {

Trajectory run_recurrence(const Tensor& x0, const WeightSchedule& s, std::size_t steps, bool skip) {
  s.validate();
  if (x0.rows() != s.n + s.m)
    throw ShapeError("initial points have " + std::to_string(x0.rows()) + " rows, schedule needs " +
                     std::to_string(s.n + s.m));
  if (s.steps.size() < steps) throw ConfigError("schedule shorter than the requested steps");
  Trajectory tr;
  tr.states.push_back(x0);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor next = matmul(s.matrix(t), tr.states.back());
    if (skip) next += tr.states.back();
    tr.states.push_back(std::move(next));
  }
  return tr;
}

}  // namespace

Trajectory simulate_two_clusters(const Tensor& x0, const WeightSchedule& s, std::size_t steps) {
  return run_recurrence(x0, s, steps, true);
}

Trajectory simulate_no_skip(const Tensor& x0, const WeightSchedule& s, std::size_t steps) {
  return run_recurrence(x0, s, steps, false);
}

Rates rates(const WeightSchedule& s, std::size_t t) {
  const Weights& w = s.steps.at(t);
  const double n = static_cast<double>(s.n), m = static_cast<double>(s.m);
  Rates r;
  r.within_first = 1.0 + w.delta - w.alpha;
  r.within_second = 1.0 + w.delta - w.beta;
  r.centroid = 2.0 - (n + m) * w.gamma;
  const double den = 2.0 - n * w.gamma - m * w.gamma;
  r.ratio = (2.0 - n * w.alpha - m * w.gamma) / den;
  r.ratio_second = (2.0 - m * w.beta - n * w.gamma) / den;
  return r;
}

Tensor centroid(const Tensor& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.rows()) throw ShapeError("centroid: row range out of bounds");
  Tensor c(1, x.cols());
  for (std::size_t i = begin; i < begin + count; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) c(0, j) += x(i, j);
  c *= 1.0 / static_cast<double>(count);
  return c;
}

IdentityReport check_prop2(const Trajectory& traj, const WeightSchedule& s, bool skip) {
  IdentityReport r;
  const double shift = skip ? 0.0 : 1.0;
  auto compare = [&](const Tensor& lhs, const Tensor& base, double rate) {
    double err = 0.0, mag = 0.0;
    for (std::size_t c = 0; c < lhs.cols(); ++c) {
      const double want = rate * base(0, c);
      err = std::max(err, std::abs(lhs(0, c) - want));
      mag = std::max(mag, std::abs(want));
    }
    const double scaled = err / std::max(1.0, mag);
    ++r.checks;
    r.worst_error = std::max(r.worst_error, scaled);
    if (scaled > 1e-10) ++r.violations;
  };
  auto diff = [](const Tensor& x, std::size_t i, std::size_t j) {
    Tensor d(1, x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) d(0, c) = x(i, c) - x(j, c);
    return d;
  };
  for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) {
    const Tensor& x = traj.states[t];
    const Tensor& y = traj.states[t + 1];
    const Rates rt = rates(s, t);
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = i + 1; j < s.n; ++j) compare(diff(y, i, j), diff(x, i, j), rt.within_first - shift);
    for (std::size_t i = s.n; i < s.n + s.m; ++i)
      for (std::size_t j = i + 1; j < s.n + s.m; ++j) compare(diff(y, i, j), diff(x, i, j), rt.within_second - shift);
    Tensor cx = centroid(x, 0, s.n), cy = centroid(y, 0, s.n);
    Tensor dx = cx, dy = cy;
    const Tensor cx2 = centroid(x, s.n, s.m), cy2 = centroid(y, s.n, s.m);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dx(0, c) -= cx2(0, c);
      dy(0, c) -= cy2(0, c);
    }
    compare(dy, dx, rt.centroid - shift);
  }
  return r;
}

// ---- suites ----------------------------------------------------------------------------

Json SuiteReport::to_json() const {
  return {{"name", name}, {"trials", trials}, {"violations", violations}, {"worst_margin", worst_margin}};
}

namespace {

Tensor random_points(std::size_t n, std::size_t d, Rng& rng) {
  Tensor x(n, d);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

AttentionSystem random_system(std::size_t d, Rng& rng) {
  AttentionSystem sys;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  sys.wq = random_points(d, d, rng);
  sys.wk = random_points(d, d, rng);
  sys.wq *= s;
  sys.wk *= s;
  if (rng.uniform() < 0.5) {
    sys.compat = CompatKind::multiplicative();
  } else {
    const Activation acts[] = {Activation::Tanh, Activation::Sigmoid, Activation::Relu};
    sys.compat = CompatKind::additive(random_points(1, d, rng), acts[rng.index(3)]);
  }
  return sys;
}

Trajectory random_attention_run(Rng& rng, std::size_t steps) {
  const std::size_t n = 2 + rng.index(9);
  const std::size_t d = 1 + rng.index(4);
  const AttentionSystem sys = random_system(d, rng);
  return simulate_attention(random_points(n, d, rng), steps, sys);
}

}  // namespace

SuiteReport lemma2_suite(std::size_t trials, std::uint64_t seed, std::size_t steps) {
  SuiteReport rep{"lemma2", trials, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, k));
    const Lemma2Report r = check_lemma2(random_attention_run(rng, steps));
    rep.violations += r.violations;
    rep.worst_margin = std::min(rep.worst_margin, r.worst_margin);
  }
  return rep;
}

SuiteReport hull_suite(std::size_t trials, std::uint64_t seed, std::size_t directions, std::size_t steps) {
  SuiteReport rep{"hull", trials, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, k));
    const Trajectory tr = random_attention_run(rng, steps);
    for (std::size_t t = 0; t + 1 < tr.states.size(); ++t) {
      const HullReport h = check_hull_containment(tr.states[t], tr.states[t + 1], directions, rng.next_u64());
      if (!h.passed) ++rep.violations;
      rep.worst_margin = std::min(rep.worst_margin, 1e-10 - h.worst_excess);
    }
  }
  return rep;
}

SuiteReport prop2_suite(std::size_t trials, std::uint64_t seed, std::size_t steps) {
  SuiteReport rep{"prop2", trials, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t n = 1 + rng.index(6), m = 1 + rng.index(6);
    const WeightSchedule s = random_schedule(n, m, steps, Regime::Any, rng.next_u64());
    for (std::size_t t = 0; t < steps; ++t) {
      if (s.residual(t) > 1e-12) ++rep.violations;
      rep.worst_margin = std::min(rep.worst_margin, 1e-12 - s.residual(t));
    }
    const IdentityReport r = check_prop2(simulate_two_clusters(random_points(n + m, 1 + rng.index(4), rng), s, steps), s);
    rep.violations += r.violations;
    rep.worst_margin = std::min(rep.worst_margin, 1e-10 - r.worst_error);
  }
  return rep;
}

constexpr double kBoundaryTol = 1e-12;

SuiteReport corollary_suite(std::size_t grid) {
  SuiteReport rep{"corollary", 0, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t m = 1; m <= 6; ++m) {
      const double unit = 1.0 / static_cast<double>(grid * std::max(n, m));
      for (std::size_t a = 1; a <= grid; ++a)
        for (std::size_t g = 1; g <= grid; ++g) {
          Weights w;
          if (!solve_weights(n, m, static_cast<double>(a) * unit, static_cast<double>(g) * unit, w)) continue;
          const WeightSchedule s{n, m, {w}};
          const Rates r = rates(s, 0);
          ++rep.trials;
          // Solving for β can leave it an ulp away from γ; that is the equality case, where the ratio is 1.
          auto side_ok = [&](double within, double ratio) {
            if (std::abs(within - w.gamma) <= kBoundaryTol) return std::abs(ratio - 1.0) <= kBoundaryTol;
            return (ratio < 1.0) == (within > w.gamma);
          };
          bool ok = side_ok(w.alpha, r.ratio) && side_ok(w.beta, r.ratio_second);
          if (w.alpha != w.gamma) rep.worst_margin = std::min(rep.worst_margin, std::abs(r.ratio - 1.0));
          if (w.delta > std::max(w.alpha, w.beta) + kBoundaryTol && w.alpha > w.gamma + kBoundaryTol) {
            ok = ok && r.within_first > 1.0 && r.centroid > 1.0;
            rep.worst_margin = std::min({rep.worst_margin, r.within_first - 1.0, r.centroid - 1.0});
          }
          if (!ok) ++rep.violations;
        }
    }
  return rep;
}

SuiteReport noskip_suite(std::size_t trials, std::uint64_t seed, std::size_t steps) {
  SuiteReport rep{"noskip", trials, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t n = 2 + rng.index(5), m = 2 + rng.index(5);
    const WeightSchedule s = random_schedule(n, m, steps, Regime::Separating, rng.next_u64());
    const Trajectory tr = simulate_no_skip(random_points(n + m, 1 + rng.index(4), rng), s, steps);
    const IdentityReport id = check_prop2(tr, s, false);
    rep.violations += id.violations;
    for (std::size_t t = 0; t < steps; ++t) {
      const Rates r = rates(s, t);
      const double f1 = r.within_first - 1.0, f2 = r.within_second - 1.0, fc = r.centroid - 1.0;
      bool ok = f1 > 0.0 && f1 < 1.0 && f2 > 0.0 && f2 < 1.0 && fc > 0.0 && fc < 1.0;
      if (s.steps[t].alpha > s.steps[t].gamma) ok = ok && f1 < fc;
      const double shrink = diameter(tr.states[t]) - diameter(tr.states[t + 1]);
      ok = ok && shrink > 0.0;
      rep.worst_margin = std::min({rep.worst_margin, f1, 1.0 - f1, f2, 1.0 - f2, fc, 1.0 - fc, shrink});
      if (!ok) ++rep.violations;
    }
  }
  return rep;
}

std::string trajectory_to_csv(const Trajectory& traj) {
  if (traj.states.empty()) throw DataError("empty trajectory");
  const std::size_t d = traj.states.front().cols();
  std::string out = "t,point_id";
  for (std::size_t c = 0; c < d; ++c) out += ",x" + std::to_string(c);
  out += "\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t)
    for (std::size_t i = 0; i < traj.states[t].rows(); ++i) {
      out += std::to_string(t) + "," + std::to_string(i);
      for (std::size_t c = 0; c < d; ++c) out += "," + format_double(traj.states[t](i, c));
      out += "\n";
    }
  return out;
}

}  // namespace abc::dynamics
