// abc: data generation, training, clustering, evaluation and dynamics checks.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "abc/checkpoint.hpp"
#include "abc/datasets.hpp"
#include "abc/dynamics.hpp"
#include "abc/errors.hpp"
#include "abc/evaluate.hpp"
#include "abc/io.hpp"
#include "abc/training.hpp"

namespace fs = std::filesystem;
using namespace abc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

// Thrown when a verification suite finds a violation.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

// Collects what a run read and wrote, then writes manifest.json next to the outputs.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  void set_config(Json c) { config_ = std::move(c); }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& f : sorted_files(p)) inputs_.push_back(f);
    } else {
      inputs_.push_back(p);
    }
  }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void write(const fs::path& dir) const {
    Json j;
    j["command"] = command_;
    j["argv"] = argv_;
    j["config"] = config_;
    j["seed"] = seed_;
    j["inputs"] = Json::array();
    for (const auto& p : inputs_) j["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    j["outputs"] = Json::array();
    for (const auto& p : outputs_) j["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json_file(dir / "manifest.json", j);
  }

  static std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  Json config_ = Json::object();
  std::uint64_t seed_ = 0;
  std::vector<fs::path> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

void write_output(Manifest& m, const fs::path& path, const std::string& contents) {
  write_file_atomic(path, contents);
  m.output(path);
}

std::string instance_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "instance_%06zu.csv", i);
  return buf;
}

// A directory means the checkpoint a train run left in it.
fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::is_directory(p)) return p / "checkpoint.json";
  return p;
}

// Training checkpoints carry optimizer state beside the model keys; it is ignored here.
ModelParams load_checkpoint_model(const fs::path& p) { return model_from_json(read_json_file(resolve_checkpoint(p))); }

// ---- options ------------------------------------------------------------------

struct GenOptions {
  fs::path out = "data";
  std::uint64_t seed = 0;
  std::size_t count = 1;
  // circles
  std::size_t points = 50, circles = 4;
  double noise = 0.0;
  // blobs
  std::size_t classes = 10, per_class = 20, dim = 2;
  double spread = 0.1;
  // instances
  fs::path pool;
  std::size_t length = 10;
};

struct TrainOptions {
  fs::path config, data, out = "run", resume;
  std::optional<std::string> compat;
  std::optional<std::size_t> steps, batch, length, sab_count, latent, heads, threads, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
};

struct ClusterOptions {
  fs::path model, data, out = "clusters";
  std::string k = "true", baseline = "none";
  std::size_t k_max = 0;
  bool literal = false;
  std::uint64_t seed = 0;
};

struct DynamicsOptions {
  std::string suite = "all";
  std::size_t trials = 1000, grid = 12, steps = 5, directions = 1000;
  std::uint64_t seed = 0;
  fs::path out = "dynamics";
  bool trajectory = false;
};

struct ReportOptions {
  fs::path sweep, out = "report";
  std::vector<std::size_t> lengths{50};
  std::size_t test_count = 100, circles = 4;
  std::uint64_t seed = 1000;
  bool svg = false;
};

// ---- commands -----------------------------------------------------------------

void cmd_gen(const std::string& kind, const GenOptions& o, Manifest& m) {
  fs::create_directories(o.out);
  m.set_seed(o.seed);
  if (kind == "circles") {
    data::CirclesConfig c;
    c.n_points = o.points;
    c.n_circles = o.circles;
    c.noise_sigma = o.noise;
    c.validate();
    m.set_config({{"points", o.points}, {"circles", o.circles}, {"noise_sigma", o.noise}, {"count", o.count},
                  {"center_box", {c.center_lo, c.center_hi}}, {"radius_range", {c.radius_lo, c.radius_hi}}});
    for (std::size_t i = 0; i < o.count; ++i) {
      c.seed = derive_seed(o.seed, i);
      const data::Instance inst = data::gen_circles(c);
      write_output(m, o.out / instance_file_name(i), data::instances_to_csv(std::span(&inst, 1), i));
    }
  } else if (kind == "blobs") {
    m.set_config({{"classes", o.classes}, {"per_class", o.per_class}, {"dim", o.dim}, {"spread", o.spread}});
    const data::Pool pool = data::gen_blob_pool(o.classes, o.per_class, o.dim, o.spread, o.seed);
    data::write_pool(o.out / "pool.csv", pool);
    m.output(o.out / "pool.csv");
  } else {
    if (o.pool.empty()) throw ConfigError("gen instances needs --pool");
    m.set_config({{"pool", o.pool.string()}, {"length", o.length}, {"count", o.count}});
    m.input(o.pool);
    const data::Pool pool = data::read_pool(o.pool);
    for (std::size_t i = 0; i < o.count; ++i) {
      const data::Instance inst = data::gen_instance(pool, o.length, derive_seed(o.seed, i));
      write_output(m, o.out / instance_file_name(i), data::instances_to_csv(std::span(&inst, 1), i));
    }
  }
  std::cout << "wrote " << o.out.string() << "\n";
}

void cmd_train(const TrainOptions& o, Manifest& m) {
  RunConfig rc;
  if (!o.config.empty()) {
    rc = run_config_from_json(read_json_file(o.config));
    m.input(o.config);
  }
  if (o.compat) rc.model.compat_embed = rc.model.compat_sim = compat_form_from_string(*o.compat);
  if (o.sab_count) rc.model.sab_count = *o.sab_count;
  if (o.latent) rc.model.latent_dim = *o.latent;
  if (o.heads) rc.model.heads = *o.heads;
  if (o.steps) rc.train.steps = *o.steps;
  if (o.batch) rc.train.batch_size = *o.batch;
  if (o.length) rc.train.instance_length = *o.length;
  if (o.threads) rc.train.threads = *o.threads;
  if (o.checkpoint_every) rc.train.checkpoint_every = *o.checkpoint_every;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.lr) rc.train.learning_rate = *o.lr;
  rc.model.validate();
  rc.train.validate();
  m.set_config(run_config_to_json(rc));
  m.set_seed(rc.train.seed);

  InstanceSource source;
  if (!o.data.empty()) {
    m.input(o.data);
    source = list_source(fs::is_directory(o.data) ? data::read_instance_dir(o.data) : data::read_instances(o.data));
  } else {
    data::CirclesConfig c;
    c.n_points = rc.train.instance_length;
    source = circles_source(c, derive_seed(rc.train.seed, 1));
  }

  TrainState state;
  if (!o.resume.empty()) {
    m.input(resolve_checkpoint(o.resume));
    state = train_state_from_json(read_json_file(resolve_checkpoint(o.resume)));
    if (!(state.params.config == rc.model))
      throw ConfigError("checkpoint model config differs from the requested one");
  } else {
    state = fresh_state(rc.model, rc.train.seed);
  }

  fs::create_directories(o.out);
  const fs::path ckpt = o.out / "checkpoint.json";
  train(state, source, rc.train, [&](const TrainState& s) {
    write_json_file(ckpt, train_state_to_json(s));
    write_file_atomic(o.out / "loss.csv", loss_trace_csv(s.loss_trace));
    std::cout << "step " << s.adam.step << " loss " << s.loss_trace.back() << "\n";
  });
  if (state.adam.step == 0 || state.loss_trace.empty()) {
    write_json_file(ckpt, train_state_to_json(state));
    write_file_atomic(o.out / "loss.csv", loss_trace_csv(state.loss_trace));
  }
  m.output(ckpt);
  m.output(o.out / "loss.csv");
}

void cmd_cluster(const ClusterOptions& o, Manifest& m) {
  if (o.data.empty()) throw ConfigError("cluster needs --data");
  KChoice k = KChoice::parse(o.k);
  k.eigengap.k_max = o.k_max;
  k.eigengap.literal = o.literal;
  KernelSource source = KernelSource::Model;
  if (o.baseline == "spectral") source = KernelSource::Gaussian;
  else if (o.baseline == "pairwise") source = KernelSource::Pairwise;
  else if (o.baseline != "none") throw ConfigError("--baseline must be none, spectral or pairwise");

  std::optional<ModelParams> model;
  if (source != KernelSource::Gaussian) {
    if (o.model.empty()) throw ConfigError("cluster needs --model unless --baseline spectral");
    if (!fs::exists(resolve_checkpoint(o.model))) throw DataError("model not found: " + o.model.string());
    m.input(resolve_checkpoint(o.model));
    model = load_checkpoint_model(o.model);
  }
  m.input(o.data);
  m.set_seed(o.seed);
  m.set_config({{"k", o.k}, {"baseline", o.baseline}, {"k_max", o.k_max}, {"literal", o.literal}});
  const auto instances = fs::is_directory(o.data) ? data::read_instance_dir(o.data) : data::read_instances(o.data);
  const auto scores = score_all(source, model ? &*model : nullptr, instances, k, o.seed);

  fs::create_directories(o.out / "labels");
  std::string table = "instance,n,k_true,k_used,k_source,degenerate,ari,nmi\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    write_output(m, o.out / "labels" / instance_file_name(i), spectral::labels_to_csv(s.labels));
    table += std::to_string(i) + "," + std::to_string(s.labels.size()) + "," + std::to_string(s.k_true) + "," +
             std::to_string(s.k_used) + "," + spectral::to_string(s.k_source) + "," + (s.degenerate ? "1" : "0") +
             "," + format_double(s.ari) + "," + format_double(s.nmi) + "\n";
  }
  write_output(m, o.out / "scores.csv", table);
  const ScoreSummary sum = summarize(scores);
  std::cout << "instances " << sum.count << " mean_ari " << sum.mean_ari << " mean_nmi " << sum.mean_nmi << "\n";
}

void cmd_dynamics(const DynamicsOptions& o, Manifest& m) {
  using namespace abc::dynamics;
  m.set_seed(o.seed);
  m.set_config({{"suite", o.suite}, {"trials", o.trials}, {"grid", o.grid}, {"steps", o.steps},
                {"directions", o.directions}});
  static const std::vector<std::string> known{"lemma2", "hull", "prop2", "corollary", "noskip"};
  std::vector<std::string> run;
  if (o.suite == "all") run = known;
  else if (std::find(known.begin(), known.end(), o.suite) != known.end()) run = {o.suite};
  else throw ConfigError("unknown dynamics suite '" + o.suite + "'");

  Json report = Json::array();
  std::size_t violations = 0;
  for (const auto& name : run) {
    SuiteReport r;
    if (name == "lemma2") r = lemma2_suite(o.trials, o.seed, o.steps);
    else if (name == "hull") r = hull_suite(o.trials, o.seed, o.directions, o.steps);
    else if (name == "prop2") r = prop2_suite(o.trials, o.seed, o.steps);
    else if (name == "corollary") r = corollary_suite(o.grid);
    else r = noskip_suite(o.trials, o.seed, o.steps);
    violations += r.violations;
    report.push_back(r.to_json());
    std::cout << r.name << ": trials " << r.trials << " violations " << r.violations << " worst_margin "
              << r.worst_margin << "\n";
  }
  fs::create_directories(o.out);
  write_output(m, o.out / "report.json", report.dump(2) + "\n");
  if (o.trajectory) {
    Rng rng(o.seed);
    Tensor x0(8, 2);
    for (double& v : x0.values()) v = rng.normal();
    const WeightSchedule s = random_schedule(4, 4, o.steps, Regime::Separating, o.seed);
    write_output(m, o.out / "two_clusters.csv", trajectory_to_csv(simulate_two_clusters(x0, s, o.steps)));
    write_output(m, o.out / "no_skip.csv", trajectory_to_csv(simulate_no_skip(x0, s, o.steps)));
  }
  if (violations > 0) throw VerificationFailure(std::to_string(violations) + " violation(s)");
}

const std::vector<std::string>& sweep_methods() {
  static const std::vector<std::string> m{"abc-mul", "abc-add", "pairwise"};
  return m;
}

void cmd_report(const ReportOptions& o, Manifest& m) {
  if (o.sweep.empty()) throw ConfigError("report needs --sweep");
  std::vector<std::string> gaps;
  for (std::size_t len : o.lengths)
    for (const auto& method : sweep_methods()) {
      const fs::path p = o.sweep / method / ("L" + std::to_string(len)) / "checkpoint.json";
      if (!fs::exists(p)) gaps.push_back(p.string());
    }
  if (!gaps.empty()) {
    std::string msg = "missing sweep checkpoints:";
    for (const auto& g : gaps) msg += " " + g;
    throw DataError(msg);
  }
  m.set_seed(o.seed);
  m.set_config({{"lengths", o.lengths}, {"test_count", o.test_count}, {"circles", o.circles}});
  fs::create_directories(o.out);
  std::string csv = "instance_length,method,mean_ari,stderr\n";
  for (std::size_t len : o.lengths) {
    data::CirclesConfig c;
    c.n_points = len;
    c.n_circles = o.circles;
    std::vector<data::Instance> test;
    for (std::size_t i = 0; i < o.test_count; ++i) {
      c.seed = derive_seed(o.seed, i);
      test.push_back(data::gen_circles(c));
    }
    const KChoice k = KChoice::parse("true");
    auto emit = [&](const std::string& method, const std::vector<InstanceScore>& scores) {
      const ScoreSummary s = summarize(scores);
      csv += std::to_string(len) + "," + method + "," + format_double(s.mean_ari) + "," + format_double(s.stderr_ari) +
             "\n";
      std::cout << "L" << len << " " << method << " ari " << s.mean_ari << " +- " << s.stderr_ari << "\n";
    };
    for (const auto& method : sweep_methods()) {
      const fs::path p = o.sweep / method / ("L" + std::to_string(len)) / "checkpoint.json";
      m.input(p);
      const ModelParams model = load_checkpoint_model(p);
      const KernelSource source = method == "pairwise" ? KernelSource::Pairwise : KernelSource::Model;
      const auto scores = score_all(source, &model, test, k, o.seed);
      emit(method, scores);
      if (o.svg && method == "abc-mul" && len == o.lengths.front())
        write_output(m, o.out / "scatter.svg", scatter_svg(test[0].x, scores[0].labels, "abc-mul, L=" + std::to_string(len)));
    }
    emit("spectral", score_all(KernelSource::Gaussian, nullptr, test, k, o.seed));
  }
  write_output(m, o.out / "fig2.csv", csv);
}

std::vector<std::size_t> parse_lengths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const long long v = parse_int(item);
    if (v <= 0) throw ConfigError("lengths must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--lengths is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based clustering: data, training, clustering and dynamics checks"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate datasets");
  g->require_subcommand(1);
  auto add_common_gen = [&](CLI::App* c) {
    c->add_option("--out", gen.out, "Output directory");
    c->add_option("--seed", gen.seed, "Seed");
  };
  auto* g_circles = g->add_subcommand("circles", "Instances of points on overlapping circles");
  add_common_gen(g_circles);
  g_circles->add_option("--points", gen.points, "Points per instance");
  g_circles->add_option("--circles", gen.circles, "Circles per instance");
  g_circles->add_option("--noise", gen.noise, "Radial noise sigma");
  g_circles->add_option("--count", gen.count, "Number of instances");
  auto* g_blobs = g->add_subcommand("blobs", "Labelled pool of Gaussian blobs");
  add_common_gen(g_blobs);
  g_blobs->add_option("--classes", gen.classes, "Classes");
  g_blobs->add_option("--per-class", gen.per_class, "Examples per class");
  g_blobs->add_option("--dim", gen.dim, "Dimension");
  g_blobs->add_option("--spread", gen.spread, "Blob standard deviation");
  auto* g_inst = g->add_subcommand("instances", "Instances sampled from a labelled pool");
  add_common_gen(g_inst);
  g_inst->add_option("--pool", gen.pool, "Pool CSV")->required();
  g_inst->add_option("--length", gen.length, "Instance length");
  g_inst->add_option("--count", gen.count, "Number of instances");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "JSON config with model and training keys")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "Instance CSV file or directory; circles are generated when absent");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--compat", tr.compat, "multiplicative or additive, for both embedding and similarity");
  t->add_option("--steps", tr.steps, "Total optimizer steps");
  t->add_option("--batch-size", tr.batch, "Instances per step");
  t->add_option("--length", tr.length, "Generated instance length");
  t->add_option("--sab-count", tr.sab_count, "Number of SABs; 0 trains the pairwise model");
  t->add_option("--latent-dim", tr.latent, "Latent width");
  t->add_option("--heads", tr.heads, "Attention heads");
  t->add_option("--threads", tr.threads, "Worker threads per batch");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Steps between checkpoints");
  t->add_option("--seed", tr.seed, "Seed");
  t->add_option("--lr", tr.lr, "Learning rate");

  ClusterOptions cl;
  auto* c = app.add_subcommand("cluster", "Cluster instances with a model or a baseline");
  c->add_option("--model", cl.model, "Checkpoint file or training output directory");
  c->add_option("--data", cl.data, "Instance CSV file or directory")->required();
  c->add_option("--out", cl.out, "Output directory");
  c->add_option("--k", cl.k, "auto (eigengap), true (from the instance) or an integer");
  c->add_option("--k-max", cl.k_max, "Largest cluster count for the eigengap, 0 for none");
  c->add_flag("--literal-eigengap", cl.literal, "Read gaps on the descending spectrum");
  c->add_option("--baseline", cl.baseline, "none, spectral or pairwise");
  c->add_option("--seed", cl.seed, "Seed");

  DynamicsOptions dy;
  auto* d = app.add_subcommand("dynamics", "Run the attention dynamics verification suites");
  d->add_option("suite", dy.suite, "lemma2, hull, prop2, corollary, noskip or all");
  d->add_option("--trials", dy.trials, "Random systems per suite");
  d->add_option("--grid", dy.grid, "Grid resolution of the corollary suite");
  d->add_option("--steps", dy.steps, "Steps per simulation");
  d->add_option("--directions", dy.directions, "Projection directions of the hull test");
  d->add_option("--seed", dy.seed, "Seed");
  d->add_option("--out", dy.out, "Output directory");
  d->add_flag("--trajectory", dy.trajectory, "Also write example trajectories as CSV");

  ReportOptions rp;
  std::string lengths = "50";
  auto* r = app.add_subcommand("report", "Score a sweep of trained models on fresh circles");
  r->add_option("--sweep", rp.sweep, "Directory holding <method>/L<length>/checkpoint.json")->required();
  r->add_option("--lengths", lengths, "Comma-separated instance lengths");
  r->add_option("--test-count", rp.test_count, "Test instances per length");
  r->add_option("--circles", rp.circles, "Circles per test instance");
  r->add_option("--seed", rp.seed, "Seed of the test instances");
  r->add_option("--out", rp.out, "Output directory");
  r->add_flag("--svg", rp.svg, "Write a scatter plot of one clustered test instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (g->parsed()) {
      const std::string kind = g_circles->parsed() ? "circles" : g_blobs->parsed() ? "blobs" : "instances";
      Manifest m("gen " + kind, args);
      cmd_gen(kind, gen, m);
      m.write(gen.out);
    } else if (t->parsed()) {
      Manifest m("train", args);
      cmd_train(tr, m);
      m.write(tr.out);
    } else if (c->parsed()) {
      Manifest m("cluster", args);
      cmd_cluster(cl, m);
      m.write(cl.out);
    } else if (d->parsed()) {
      Manifest m("dynamics", args);
      try {
        cmd_dynamics(dy, m);
      } catch (const VerificationFailure&) {
        m.write(dy.out);
        throw;
      }
      m.write(dy.out);
    } else if (r->parsed()) {
      rp.lengths = parse_lengths(lengths);
      Manifest m("report", args);
      cmd_report(rp, m);
      m.write(rp.out);
    }
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
