#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "abc/tensor.hpp"

namespace abc::data {

// G(i, j) = 1 iff labels[i] == labels[j].
Tensor ground_truth_kernel(std::span<const int> labels);

std::size_t count_distinct(std::span<const int> labels);

// One set of points to be clustered jointly, with its ground truth.
struct Instance {
  Tensor x;                 // n × d
  std::vector<int> labels;  // length n
  Tensor kernel;            // n × n, binary
  std::size_t k_true = 0;

  static Instance from_labels(Tensor x, std::vector<int> labels);
  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return x.cols(); }
  // Throws DataError if the kernel or k_true disagree with the labels.
  void validate() const;
};

struct CirclesConfig {
  std::size_t n_points = 50;
  std::size_t n_circles = 4;
  double center_lo = -1.0;
  double center_hi = 1.0;
  double radius_lo = 0.5;
  double radius_hi = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Circles {
  Instance instance;
  std::vector<std::array<double, 2>> centers;
  std::vector<double> radii;
};

// Points on n_circles random circles: uniform centers in the box, uniform
// radii, counts per circle as equal as possible (every circle nonempty),
// uniform angles and Gaussian radial noise. Point order is shuffled.
Circles gen_circles_geometry(const CirclesConfig& cfg);
Instance gen_circles(const CirclesConfig& cfg);

// Labelled examples to draw instances from.
struct Pool {
  Tensor x;
  std::vector<int> labels;

  // Distinct labels in ascending order with their example indices.
  std::vector<int> classes() const;
  std::vector<std::vector<std::size_t>> members() const;
};

// Instance sampler over a labelled pool:
//   k ~ uniform{1..min(C, L)}; k distinct classes drawn uniformly; cluster
//   sizes uniform over compositions of L with 1 ≤ n_i ≤ available_i; n_i
//   examples of each chosen class drawn without replacement.
// Class draws whose capacity cannot reach L are redrawn, up to max_retries.
Instance gen_instance(const Pool& pool, std::size_t length, std::uint64_t seed, std::size_t max_retries = 1000);

// Uniform draw of (n_1..n_k) with Σ n_i = total and 1 ≤ n_i ≤ caps[i].
// Returns an empty vector if no such composition exists.
std::vector<std::size_t> sample_composition(std::size_t total, std::span<const std::size_t> caps,
                                            std::uint64_t seed);

// Gaussian blobs with centers uniform in [-1, 1]^d.
Pool gen_blob_pool(std::size_t classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed);

// ---- CSV: instance_id,point_id,x0..x{d-1},label ---------------------------

std::string instances_to_csv(std::span<const Instance> instances, std::size_t first_id = 0);
std::vector<Instance> instances_from_csv(const std::string& text);
void write_instances(const std::filesystem::path& path, std::span<const Instance> instances,
                     std::size_t first_id = 0);
std::vector<Instance> read_instances(const std::filesystem::path& path);

void write_pool(const std::filesystem::path& path, const Pool& pool);
// Every row of every instance in the file, instance ids ignored.
Pool read_pool(const std::filesystem::path& path);

// Sorted *.csv files of a directory, concatenated.
std::vector<Instance> read_instance_dir(const std::filesystem::path& dir);

}  // namespace abc::data
