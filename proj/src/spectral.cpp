#include "abc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/io.hpp"
#include "abc/rng.hpp"

namespace abc::spectral {

Tensor validate_kernel(const Tensor& a) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw DataError("kernel matrix must be square and nonempty, got " + a.shape_string());
  if (!a.all_finite()) throw DataError("kernel matrix has non-finite entries");
  const std::size_t n = a.rows();
  Tensor s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) < 0.0)
        throw DataError("kernel entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is negative");
      if (std::abs(a(i, j) - a(j, i)) > 1e-10)
        throw DataError("kernel matrix is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      s(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
  }
  return s;
}

Tensor normalized_laplacian(const Tensor& a_in) {
  const Tensor a = validate_kernel(a_in);
  const std::size_t n = a.rows();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    if (!(deg > 0.0)) throw DataError("element " + std::to_string(i) + " is isolated (zero degree)");
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Tensor l(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = (i == j ? 1.0 : 0.0) - a(i, j) * inv_sqrt[i] * inv_sqrt[j];
      l(i, j) = v;
      l(j, i) = v;
    }
  return l;
}

// ---- Jacobi eigensolver ---------------------------------------------------------

namespace {

double off_norm(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

double frobenius(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eig(const Tensor& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ShapeError("sym_eig needs a square matrix, got " + m.shape_string());
  if (!m.all_finite()) throw NumericalError("sym_eig: non-finite input");
  const std::size_t n = m.rows();
  Tensor a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-10)
        throw DataError("sym_eig: matrix not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      a(i, j) = 0.5 * (m(i, j) + m(j, i));
    }
  const double norm = frobenius(a);
  Tensor v = Tensor::identity(n);

  const double threshold = 1e-12 * std::max(norm, 1.0);
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps && off_norm(a) > threshold; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenDecomposition out;
  out.vectors = Tensor(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values.push_back(a(src, src));
    std::size_t big = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(big, src))) big = r;
    const double sign = v(big, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }

  const double mnorm = frobenius(m);
  double worst = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double mv = 0.0;
      for (std::size_t k = 0; k < n; ++k) mv += m(r, k) * out.vectors(k, c);
      const double d = mv - out.values[c] * out.vectors(r, c);
      sq += d * d;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  if (worst > 1e-8 * std::max(mnorm, 1e-300) && worst > 0.0)
    throw NumericalError("sym_eig did not converge after " + std::to_string(sweep) + " sweeps: residual " +
                         format_double(worst) + ", off-diagonal norm " + format_double(off_norm(a)));
  return out;
}

// ---- eigengap -----------------------------------------------------------------------

std::size_t eigengap(std::span<const double> ascending, const EigengapOptions& opt) {
  const std::size_t n = ascending.size();
  if (n < 2) throw DataError("eigengap needs at least two eigenvalues");
  std::vector<double> lam(ascending.begin(), ascending.end());
  if (opt.literal) std::reverse(lam.begin(), lam.end());
  const std::size_t last = opt.k_max > 0 ? std::min(opt.k_max, n - 1) : n - 1;
  std::size_t best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i <= last; ++i) {
    const double gap = opt.literal ? lam[i - 1] - lam[i] : lam[i] - lam[i - 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return best;
}

std::size_t num_clusters(const Tensor& a, const EigengapOptions& opt) {
  if (a.rows() < 2) throw DataError("num_clusters needs n >= 2");
  const EigenDecomposition e = sym_eig(normalized_laplacian(a));
  return eigengap(e.values, opt);
}

const char* to_string(KSource s) { return s == KSource::Given ? "given" : "eigengap"; }

// ---- clustering -----------------------------------------------------------------------

namespace {

double sq_dist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

std::size_t distinct_rows(const Tensor& x) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < x.rows(); ++i) rows.emplace_back(x.row(i).begin(), x.row(i).end());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

KMeansResult lloyd(const Tensor& x, std::size_t k, Rng& rng, std::size_t max_iter, double tol) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor cent(k, d);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.index(n);
  std::copy(x.row(first).begin(), x.row(first).end(), cent.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], sq_dist(x, i, cent, c - 1));
      total += dist[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i];
        if (target < acc && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), cent.row(c).begin());
  }

  KMeansResult r;
  r.labels.assign(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(x, i, cent, 0);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = sq_dist(x, i, cent, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      r.labels[i] = static_cast<int>(best);
    }
    Tensor next(k, d);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.labels[i]);
      ++count[c];
      for (std::size_t j = 0; j < d; ++j) next(c, j) += x(i, j);
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        std::copy(cent.row(c).begin(), cent.row(c).end(), next.row(c).begin());
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) next(c, j) /= static_cast<double>(count[c]);
      shift = std::max(shift, std::sqrt(sq_dist(next, c, cent, c)));
    }
    cent = std::move(next);
    if (shift < tol) break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double bd = sq_dist(x, i, cent, 0);
    for (std::size_t c = 1; c < k; ++c) {
      const double dd = sq_dist(x, i, cent, c);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    r.labels[i] = static_cast<int>(best);
    r.inertia += bd;
  }
  r.centroids = std::move(cent);
  return r;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iter, double tol) {
  if (k == 0) throw ConfigError("kmeans: k must be positive");
  if (points.rows() < k)
    throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(points.rows()) + " points");
  if (!points.all_finite()) throw NumericalError("kmeans: non-finite points");
  if (restarts == 0) throw ConfigError("kmeans: restarts must be positive");
  Rng rng(seed);
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult cur = lloyd(points, k, rng, max_iter, tol);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  best.degenerate = distinct_rows(points) < k;
  return best;
}

ClusterResult spectral_cluster(const Tensor& a, std::size_t k, std::uint64_t seed) {
  const std::size_t n = a.rows();
  if (k == 0 || k > n)
    throw ConfigError("spectral_cluster: k = " + std::to_string(k) + " must lie in 1.." + std::to_string(n));
  const EigenDecomposition e = sym_eig(normalized_laplacian(a));
  Tensor emb(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) norm += e.vectors(i, c) * e.vectors(i, c);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < k; ++c) emb(i, c) = norm > 0.0 ? e.vectors(i, c) / norm : 0.0;
  }
  KMeansResult km = kmeans(emb, k, seed);
  return {std::move(km.labels), k, KSource::Given, km.degenerate};
}

ClusterResult spectral_cluster_auto(const Tensor& a, std::uint64_t seed, const EigengapOptions& opt) {
  const std::size_t k = a.rows() < 2 ? 1 : num_clusters(a, opt);
  ClusterResult r = spectral_cluster(a, k, seed);
  r.k_source = KSource::Eigengap;
  return r;
}

// ---- scores -------------------------------------------------------------------------------

namespace {

struct Contingency {
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size())
    throw DataError("label vectors differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw DataError("label vectors are empty");
  Contingency t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.cells[{a[i], b[i]}] += 1.0;
    t.rows[a[i]] += 1.0;
    t.cols[b[i]] += 1.0;
  }
  t.n = static_cast<double>(a.size());
  return t;
}

double pairs(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double ari(std::span<const int> a, std::span<const int> b) {
  const Contingency t = contingency(a, b);
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, v] : t.cells) index += pairs(v);
  for (const auto& [_, v] : t.rows) sa += pairs(v);
  for (const auto& [_, v] : t.cols) sb += pairs(v);
  const double total = pairs(t.n);
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double nmi(std::span<const int> a, std::span<const int> b) {
  const Contingency t = contingency(a, b);
  auto entropy = [&](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [_, v] : m) h -= (v / t.n) * std::log(v / t.n);
    return h;
  };
  const double ha = entropy(t.rows), hb = entropy(t.cols);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, v] : t.cells) {
    const double pij = v / t.n;
    mi += pij * std::log(pij / ((t.rows.at(key.first) / t.n) * (t.cols.at(key.second) / t.n)));
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

Tensor gaussian_kernel(const Tensor& x, double sigma) {
  const std::size_t n = x.rows();
  if (n == 0) throw DataError("gaussian_kernel: no points");
  Tensor d2(n, n);
  std::vector<double> dists;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = sq_dist(x, i, x, j);
      d2(i, j) = v;
      d2(j, i) = v;
      dists.push_back(std::sqrt(v));
    }
  if (!(sigma > 0.0)) {
    if (dists.empty()) {
      sigma = 1.0;
    } else {
      std::sort(dists.begin(), dists.end());
      const std::size_t m = dists.size();
      sigma = m % 2 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
      if (!(sigma > 0.0)) sigma = 1.0;
    }
  }
  Tensor k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = std::exp(-d2(i, j) / (2.0 * sigma * sigma));
  return k;
}

std::string labels_to_csv(std::span<const int> labels) {
  std::string out = "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  return out;
}

std::vector<int> labels_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string_view>{"index", "label"})
    throw DataError("labels CSV must start with index,label");
  std::vector<int> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2 || parse_int(f[0]) != static_cast<long long>(out.size()))
      throw DataError("labels CSV row " + std::to_string(out.size()) + " is malformed");
    out.push_back(static_cast<int>(parse_int(f[1])));
  }
  return out;
}

}  // namespace abc::spectral
