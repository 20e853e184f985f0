#include "abc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/io.hpp"
#include "abc/rng.hpp"

namespace abc::data {

Tensor ground_truth_kernel(std::span<const int> labels) {
  if (labels.empty()) throw DataError("ground_truth_kernel: empty label list");
  const std::size_t n = labels.size();
  Tensor g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return g;
}

std::size_t count_distinct(std::span<const int> labels) {
  return std::set<int>(labels.begin(), labels.end()).size();
}

Instance Instance::from_labels(Tensor x, std::vector<int> labels) {
  if (x.rows() != labels.size())
    throw DataError("instance has " + std::to_string(x.rows()) + " points but " + std::to_string(labels.size()) +
                    " labels");
  Instance inst;
  inst.kernel = ground_truth_kernel(labels);
  inst.k_true = count_distinct(labels);
  inst.x = std::move(x);
  inst.labels = std::move(labels);
  return inst;
}

void Instance::validate() const {
  if (labels.empty()) throw DataError("instance is empty");
  if (x.rows() != labels.size()) throw DataError("instance point/label count mismatch");
  if (!x.all_finite()) throw DataError("instance has non-finite coordinates");
  if (!(kernel == ground_truth_kernel(labels))) throw DataError("instance kernel disagrees with labels");
  if (k_true != count_distinct(labels)) throw DataError("instance k_true disagrees with labels");
}

// ---- circles ------------------------------------------------------------------

void CirclesConfig::validate() const {
  if (n_circles == 0) throw ConfigError("circles: need at least one circle");
  if (n_points < n_circles)
    throw ConfigError("circles: " + std::to_string(n_points) + " points cannot cover " +
                      std::to_string(n_circles) + " circles");
  if (!(radius_lo > 0.0) || radius_hi < radius_lo) throw ConfigError("circles: invalid radius range");
  if (center_hi < center_lo) throw ConfigError("circles: invalid center box");
  if (!(noise_sigma >= 0.0)) throw ConfigError("circles: noise_sigma must be non-negative");
}

Circles gen_circles_geometry(const CirclesConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Circles out;
  for (std::size_t c = 0; c < cfg.n_circles; ++c) {
    const double cx = rng.uniform(cfg.center_lo, cfg.center_hi);
    const double cy = rng.uniform(cfg.center_lo, cfg.center_hi);
    out.centers.push_back({cx, cy});
    out.radii.push_back(rng.uniform(cfg.radius_lo, cfg.radius_hi));
  }

  std::vector<std::size_t> counts(cfg.n_circles, cfg.n_points / cfg.n_circles);
  std::vector<std::size_t> order(cfg.n_circles);
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
  rng.shuffle(order);
  for (std::size_t r = 0; r < cfg.n_points % cfg.n_circles; ++r) ++counts[order[r]];

  std::vector<int> labels;
  labels.reserve(cfg.n_points);
  for (std::size_t c = 0; c < cfg.n_circles; ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c));
  rng.shuffle(labels);

  Tensor x(cfg.n_points, 2);
  for (std::size_t i = 0; i < cfg.n_points; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = out.radii[c] + (cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0);
    x(i, 0) = out.centers[c][0] + r * std::cos(angle);
    x(i, 1) = out.centers[c][1] + r * std::sin(angle);
  }
  out.instance = Instance::from_labels(std::move(x), std::move(labels));
  return out;
}

Instance gen_circles(const CirclesConfig& cfg) { return gen_circles_geometry(cfg).instance; }

// ---- pools and the instance sampler -------------------------------------------

std::vector<int> Pool::classes() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

std::vector<std::vector<std::size_t>> Pool::members() const {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [_, idx] : by_class) out.push_back(std::move(idx));
  return out;
}

std::vector<std::size_t> sample_composition(std::size_t total, std::span<const std::size_t> caps,
                                            std::uint64_t seed) {
  const std::size_t k = caps.size();
  if (k == 0) return {};
  // ways[i][s]: compositions of s into parts i..k-1 within caps.
  std::vector<std::vector<long double>> ways(k + 1, std::vector<long double>(total + 1, 0.0L));
  ways[k][0] = 1.0L;
  for (std::size_t i = k; i-- > 0;) {
    for (std::size_t s = 0; s <= total; ++s) {
      long double w = 0.0L;
      for (std::size_t v = 1; v <= std::min(caps[i], s); ++v) w += ways[i + 1][s - v];
      ways[i][s] = w;
    }
  }
  if (ways[0][total] <= 0.0L) return {};

  Rng rng(seed);
  std::vector<std::size_t> parts(k);
  std::size_t remaining = total;
  for (std::size_t i = 0; i < k; ++i) {
    const long double target = static_cast<long double>(rng.uniform()) * ways[i][remaining];
    long double acc = 0.0L;
    std::size_t chosen = 0;
    for (std::size_t v = 1; v <= std::min(caps[i], remaining); ++v) {
      if (ways[i + 1][remaining - v] <= 0.0L) continue;
      chosen = v;
      acc += ways[i + 1][remaining - v];
      if (target < acc) break;
    }
    parts[i] = chosen;
    remaining -= chosen;
  }
  return parts;
}

Instance gen_instance(const Pool& pool, std::size_t length, std::uint64_t seed, std::size_t max_retries) {
  if (length == 0) throw ConfigError("gen_instance: length must be positive");
  if (pool.x.rows() != pool.labels.size()) throw DataError("gen_instance: pool point/label count mismatch");
  const auto members = pool.members();
  const std::vector<int> classes = pool.classes();
  const std::size_t c = classes.size();
  if (c == 0) throw DataError("gen_instance: empty pool");
  if (length > pool.labels.size())
    throw ConfigError("gen_instance: length " + std::to_string(length) + " exceeds pool size " +
                      std::to_string(pool.labels.size()));

  // A k whose largest classes cannot hold `length` examples is redrawn, so k is
  // uniform over the feasible counts. The largest feasible one always exists.
  std::vector<std::size_t> sorted_caps;
  for (const auto& m : members) sorted_caps.push_back(m.size());
  std::sort(sorted_caps.rbegin(), sorted_caps.rend());
  auto feasible = [&](std::size_t k) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < k; ++i) total += sorted_caps[i];
    return total >= length;
  };
  Rng rng(seed);
  std::size_t k = 0;
  do {
    k = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(std::min(c, length))));
  } while (!feasible(k));

  for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
    std::vector<std::size_t> all(c);
    for (std::size_t i = 0; i < c; ++i) all[i] = i;
    // Partial Fisher-Yates: the first k entries are a uniform k-subset in uniform order.
    for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(c - i)]);
    std::vector<std::size_t> chosen(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));

    std::vector<std::size_t> caps;
    for (std::size_t ci : chosen) caps.push_back(members[ci].size());
    auto sizes = sample_composition(length, caps, rng.next_u64());
    if (sizes.empty()) continue;

    Tensor x(length, pool.x.cols());
    std::vector<int> labels;
    labels.reserve(length);
    std::size_t row = 0;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<std::size_t> idx = members[chosen[i]];
      for (std::size_t t = 0; t < sizes[i]; ++t) std::swap(idx[t], idx[t + rng.index(idx.size() - t)]);
      for (std::size_t t = 0; t < sizes[i]; ++t, ++row) {
        auto src = pool.x.row(idx[t]);
        std::copy(src.begin(), src.end(), x.row(row).begin());
        labels.push_back(classes[chosen[i]]);
      }
    }
    return Instance::from_labels(std::move(x), std::move(labels));
  }
  throw DataError("gen_instance: no feasible class selection for length " + std::to_string(length) + " with k=" +
                  std::to_string(k) + " after " + std::to_string(max_retries) + " retries");
}

Pool gen_blob_pool(std::size_t classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed) {
  if (classes == 0 || per_class == 0 || dim == 0) throw ConfigError("gen_blob_pool: counts must be positive");
  if (!(spread >= 0.0)) throw ConfigError("gen_blob_pool: spread must be non-negative");
  Rng rng(seed);
  Pool pool;
  pool.x = Tensor(classes * per_class, dim);
  Tensor centers(classes, dim);
  for (double& v : centers.values()) v = rng.uniform(-1.0, 1.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t d = 0; d < dim; ++d)
        pool.x(row, d) = centers(c, d) + (spread > 0.0 ? spread * rng.normal() : 0.0);
      pool.labels.push_back(static_cast<int>(c));
    }
  }
  return pool;
}

// ---- CSV ------------------------------------------------------------------------

std::string instances_to_csv(std::span<const Instance> instances, std::size_t first_id) {
  if (instances.empty()) throw DataError("instances_to_csv: nothing to write");
  const std::size_t d = instances.front().dim();
  std::string out = "instance_id,point_id";
  for (std::size_t c = 0; c < d; ++c) out += ",x" + std::to_string(c);
  out += ",label\n";
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Instance& inst = instances[k];
    if (inst.dim() != d) throw DataError("instances_to_csv: mixed dimensions");
    for (std::size_t i = 0; i < inst.size(); ++i) {
      out += std::to_string(first_id + k) + "," + std::to_string(i);
      for (std::size_t c = 0; c < d; ++c) out += "," + format_double(inst.x(i, c));
      out += "," + std::to_string(inst.labels[i]) + "\n";
    }
  }
  return out;
}

std::vector<Instance> instances_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("instance CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "instance_id" || header[1] != "point_id" || header.back() != "label")
    throw DataError("instance CSV header must be instance_id,point_id,x0..x{d-1},label");
  const std::size_t d = header.size() - 3;
  for (std::size_t c = 0; c < d; ++c)
    if (header[2 + c] != "x" + std::to_string(c)) throw DataError("instance CSV: bad coordinate column name");

  std::vector<Instance> out;
  long long current = -1;
  std::vector<double> coords;
  std::vector<int> labels;
  auto flush = [&] {
    if (labels.empty()) return;
    const std::size_t n = labels.size();
    out.push_back(Instance::from_labels(Tensor(n, d, std::move(coords)), std::move(labels)));
    coords.clear();
    labels.clear();
  };
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != d + 3) throw DataError("instance CSV line " + std::to_string(line_no) + ": wrong field count");
    const long long id = parse_int(f[0]);
    const long long pid = parse_int(f[1]);
    if (id != current) {
      flush();
      current = id;
    }
    if (pid != static_cast<long long>(labels.size()))
      throw DataError("instance CSV line " + std::to_string(line_no) + ": point ids must count up from 0");
    for (std::size_t c = 0; c < d; ++c) coords.push_back(parse_double(f[2 + c]));
    labels.push_back(static_cast<int>(parse_int(f[d + 2])));
  }
  flush();
  if (out.empty()) throw DataError("instance CSV has no rows");
  return out;
}

void write_instances(const std::filesystem::path& path, std::span<const Instance> instances, std::size_t first_id) {
  write_file_atomic(path, instances_to_csv(instances, first_id));
}

std::vector<Instance> read_instances(const std::filesystem::path& path) {
  try {
    return instances_from_csv(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pool(const std::filesystem::path& path, const Pool& pool) {
  Instance as_instance = Instance::from_labels(pool.x, pool.labels);
  write_instances(path, std::span<const Instance>(&as_instance, 1));
}

Pool read_pool(const std::filesystem::path& path) {
  Pool pool;
  std::vector<double> coords;
  std::size_t d = 0;
  for (const Instance& inst : read_instances(path)) {
    d = inst.dim();
    coords.insert(coords.end(), inst.x.values().begin(), inst.x.values().end());
    pool.labels.insert(pool.labels.end(), inst.labels.begin(), inst.labels.end());
  }
  pool.x = Tensor(pool.labels.size(), d, std::move(coords));
  return pool;
}

std::vector<Instance> read_instance_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Instance> out;
  for (const auto& f : files) {
    auto part = read_instances(f);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (out.empty()) throw DataError("no instance files in " + dir.string());
  return out;
}

}  // namespace abc::data
