#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "abc/tensor.hpp"

namespace abc::spectral {

// Throws DataError unless a is square, finite, non-negative and symmetric
// within 1e-10. Returns the exactly symmetrized matrix.
Tensor validate_kernel(const Tensor& a);

// L = I − D^{−1/2} A D^{−1/2}. A zero-degree row raises DataError naming it.
Tensor normalized_laplacian(const Tensor& a);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Tensor vectors;              // column i belongs to values[i]
};

// Cyclic Jacobi rotations. Each eigenvector is signed so that its entry of
// largest magnitude (first one on ties) is positive.
EigenDecomposition sym_eig(const Tensor& m);

struct EigengapOptions {
  // Largest count considered; 0 means n − 1.
  std::size_t k_max = 0;
  // Read the gaps on descending eigenvalues of L instead of ascending ones.
  bool literal = false;
};

// argmax over i ∈ {1..n−1} of λ_{i+1} − λ_i on the ascending spectrum of the
// normalized Laplacian; the smallest i wins ties.
std::size_t num_clusters(const Tensor& a, const EigengapOptions& opt = {});
std::size_t eigengap(std::span<const double> ascending, const EigengapOptions& opt = {});

enum class KSource { Given, Eigengap };
const char* to_string(KSource s);

struct ClusterResult {
  std::vector<int> labels;
  std::size_t k_used = 0;
  KSource k_source = KSource::Given;
  // Fewer distinct embedded points than k.
  bool degenerate = false;
};

ClusterResult spectral_cluster(const Tensor& a, std::size_t k, std::uint64_t seed);
ClusterResult spectral_cluster_auto(const Tensor& a, std::uint64_t seed, const EigengapOptions& opt = {});

struct KMeansResult {
  std::vector<int> labels;
  Tensor centroids;
  double inertia = 0.0;
  bool degenerate = false;
};

// k-means++ seeding and Lloyd iterations until the largest centroid shift is
// below tol or max_iter passes, best of `restarts` runs by inertia.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iter = 100, double tol = 1e-8);

// Adjusted Rand index; 1 when the chance-corrected denominator vanishes.
double ari(std::span<const int> a, std::span<const int> b);
// I(a; b) / √(H(a) H(b)).
double nmi(std::span<const int> a, std::span<const int> b);

// exp(−‖x_i − x_j‖² / 2σ²); sigma ≤ 0 selects the median pairwise distance.
Tensor gaussian_kernel(const Tensor& x, double sigma = 0.0);

std::string labels_to_csv(std::span<const int> labels);
std::vector<int> labels_from_csv(const std::string& text);

}  // namespace abc::spectral
