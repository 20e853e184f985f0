#include "abc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/io.hpp"
#include "abc/rng.hpp"

namespace abc {

const char* to_string(KernelSource s) {
  switch (s) {
    case KernelSource::Model:
      return "model";
    case KernelSource::Pairwise:
      return "pairwise";
    case KernelSource::Gaussian:
      return "spectral";
  }
  return "?";
}

KernelSource kernel_source_from_string(const std::string& s) {
  if (s == "model") return KernelSource::Model;
  if (s == "pairwise") return KernelSource::Pairwise;
  if (s == "spectral") return KernelSource::Gaussian;
  throw ConfigError("unknown kernel source '" + s + "' (model, pairwise, spectral)");
}

Tensor instance_kernel(KernelSource source, const ModelParams* model, const data::Instance& inst) {
  if (source == KernelSource::Gaussian) return spectral::gaussian_kernel(inst.x);
  if (!model) throw ConfigError(std::string(to_string(source)) + " kernel needs a model");
  return source == KernelSource::Model ? abc_forward(inst.x, *model).entries : pairwise_forward(inst.x, *model).entries;
}

KChoice KChoice::parse(const std::string& s) {
  KChoice c;
  if (s == "auto") {
    c.mode = Mode::Auto;
  } else if (s == "true") {
    c.mode = Mode::True;
  } else {
    long long v = 0;
    try {
      v = parse_int(s);
    } catch (const Error&) {
      throw ConfigError("--k must be auto, true or a positive integer, got '" + s + "'");
    }
    if (v <= 0) throw ConfigError("--k must be positive, got " + s);
    c.mode = Mode::Fixed;
    c.k = static_cast<std::size_t>(v);
  }
  return c;
}

InstanceScore score_instance(const Tensor& kernel, const data::Instance& inst, const KChoice& k, std::uint64_t seed) {
  spectral::ClusterResult r;
  if (k.mode == KChoice::Mode::Auto) {
    if (inst.size() < 2) {
      r = spectral::spectral_cluster(kernel, 1, seed);
      r.k_source = spectral::KSource::Eigengap;
    } else {
      r = spectral::spectral_cluster_auto(kernel, seed, k.eigengap);
    }
  } else {
    const std::size_t want = k.mode == KChoice::Mode::True ? inst.k_true : k.k;
    r = spectral::spectral_cluster(kernel, want, seed);
  }
  InstanceScore s;
  s.k_true = inst.k_true;
  s.k_used = r.k_used;
  s.k_source = r.k_source;
  s.degenerate = r.degenerate;
  s.ari = spectral::ari(r.labels, inst.labels);
  s.nmi = spectral::nmi(r.labels, inst.labels);
  s.labels = std::move(r.labels);
  return s;
}

ScoreSummary summarize(std::span<const InstanceScore> scores) {
  ScoreSummary out;
  out.count = scores.size();
  if (scores.empty()) return out;
  const double n = static_cast<double>(scores.size());
  for (const auto& s : scores) out.mean_ari += s.ari, out.mean_nmi += s.nmi;
  out.mean_ari /= n;
  out.mean_nmi /= n;
  if (scores.size() > 1) {
    double va = 0.0, vn = 0.0;
    for (const auto& s : scores) {
      va += (s.ari - out.mean_ari) * (s.ari - out.mean_ari);
      vn += (s.nmi - out.mean_nmi) * (s.nmi - out.mean_nmi);
    }
    out.stderr_ari = std::sqrt(va / (n - 1.0) / n);
    out.stderr_nmi = std::sqrt(vn / (n - 1.0) / n);
  }
  return out;
}

std::vector<InstanceScore> score_all(KernelSource source, const ModelParams* model,
                                     std::span<const data::Instance> instances, const KChoice& k,
                                     std::uint64_t seed) {
  std::vector<InstanceScore> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    out.push_back(score_instance(instance_kernel(source, model, instances[i]), instances[i], k, derive_seed(seed, i)));
  return out;
}

std::string scatter_svg(const Tensor& x, std::span<const int> labels, const std::string& title) {
  if (x.rows() != labels.size()) throw DataError("scatter_svg: point/label count mismatch");
  if (x.rows() == 0 || x.cols() == 0) throw DataError("scatter_svg: no points");
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double size = 400.0, pad = 20.0;
  auto coord = [&](std::size_t i, std::size_t c) { return c < x.cols() ? x(i, c) : 0.0; };
  double lo[2] = {coord(0, 0), coord(0, 1)}, hi[2] = {lo[0], lo[1]};
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < 2; ++c) lo[c] = std::min(lo[c], coord(i, c)), hi[c] = std::max(hi[c], coord(i, c));
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) out << "<title>" << title << "</title>\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double px = pad + (coord(i, 0) - lo[0]) / span * (size - 2 * pad);
    const double py = size - pad - (coord(i, 1) - lo[1]) / span * (size - 2 * pad);
    const int l = labels[i];
    const char* colour = palette[static_cast<std::size_t>(l < 0 ? -l : l) % 10];
    out << "<circle cx=\"" << format_double(px) << "\" cy=\"" << format_double(py) << "\" r=\"4\" fill=\"" << colour
        << "\" data-label=\"" << l << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace abc
