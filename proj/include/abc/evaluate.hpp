#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abc/datasets.hpp"
#include "abc/model.hpp"
#include "abc/spectral.hpp"

namespace abc {

// Where the kernel handed to spectral clustering comes from.
enum class KernelSource {
  Model,     // abc_forward of the checkpoint
  Pairwise,  // pairwise_forward of the checkpoint
  Gaussian,  // raw-distance Gaussian kernel, no model
};

const char* to_string(KernelSource s);
KernelSource kernel_source_from_string(const std::string& s);

Tensor instance_kernel(KernelSource source, const ModelParams* model, const data::Instance& inst);

struct KChoice {
  enum class Mode { Auto, True, Fixed };
  Mode mode = Mode::True;
  std::size_t k = 0;  // Fixed only
  spectral::EigengapOptions eigengap;

  // "auto", "true" or a positive integer.
  static KChoice parse(const std::string& s);
};

struct InstanceScore {
  std::size_t k_true = 0;
  std::size_t k_used = 0;
  spectral::KSource k_source = spectral::KSource::Given;
  bool degenerate = false;
  double ari = 0.0;
  double nmi = 0.0;
  std::vector<int> labels;
};

InstanceScore score_instance(const Tensor& kernel, const data::Instance& inst, const KChoice& k, std::uint64_t seed);

struct ScoreSummary {
  std::size_t count = 0;
  double mean_ari = 0.0, stderr_ari = 0.0;
  double mean_nmi = 0.0, stderr_nmi = 0.0;
};

ScoreSummary summarize(std::span<const InstanceScore> scores);

// Scores every instance; instance i is clustered with derive_seed(seed, i).
std::vector<InstanceScore> score_all(KernelSource source, const ModelParams* model,
                                     std::span<const data::Instance> instances, const KChoice& k,
                                     std::uint64_t seed);

// Points coloured by label; only the first two coordinates are drawn.
std::string scatter_svg(const Tensor& x, std::span<const int> labels, const std::string& title = "");

}  // namespace abc
