#include "invot/core.hpp"
#include "invot/embedding.hpp"
#include "invot/invariant_ot.hpp"
#include "invot/synthetic.hpp"
#include "invot/verification.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;
using namespace invot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

// Writes to "<path>.partial" and renames on commit; "-" or "" means stdout.
class OutputFile {
 public:
  explicit OutputFile(std::string path, bool binary = false) : path_(std::move(path)) {
    if (to_stdout()) return;
    tmp_ = path_ + ".partial";
    file_.open(tmp_, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!file_) throw InvalidInput("cannot write " + tmp_);
  }
  ~OutputFile() {
    if (!committed_ && !to_stdout()) {
      file_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }
  std::ostream& stream() { return to_stdout() ? std::cout : static_cast<std::ostream&>(file_); }
  void commit() {
    if (to_stdout()) {
      std::cout.flush();
      committed_ = true;
      return;
    }
    file_.close();
    if (!file_) throw InvalidInput("failed writing " + tmp_);
    std::filesystem::rename(tmp_, path_);
    committed_ = true;
  }

 private:
  bool to_stdout() const { return path_.empty() || path_ == "-"; }
  std::string path_;
  std::string tmp_;
  std::ofstream file_;
  bool committed_ = false;
};

void write_json(const std::string& path, const json& doc) {
  OutputFile out(path);
  out.stream() << doc.dump(2) << '\n';
  out.commit();
}

struct SolverFlags {
  std::string p = "inf";
  std::optional<double> radius;
  double lambda0 = 1.0;
  double decay = 0.95;
  double lambda_min = 1e-3;
  int max_iter = 300;
  double tol = 1e-6;
  int restarts = 1;
  std::uint64_t seed = 0;
  std::string trace;

  void attach(CLI::App* app) {
    app->add_option("--p", p, "Schatten order of the invariance ball: 1, 2, inf or a number")
        ->capture_default_str();
    app->add_option("--radius", radius, "ball radius (default 1 for inf, d^(1/p) otherwise)");
    app->add_option("--lambda0", lambda0, "initial regularization")->capture_default_str();
    app->add_option("--decay", decay, "annealing factor per iteration")->capture_default_str();
    app->add_option("--lambda-min", lambda_min, "regularization floor")->capture_default_str();
    app->add_option("--max-iter", max_iter, "outer iterations")->capture_default_str();
    app->add_option("--tol", tol, "relative objective tolerance at the floor")->capture_default_str();
    app->add_option("--restarts", restarts, "random starts; the lowest final cost wins")
        ->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--trace", trace, "CSV file receiving one row per solver iteration");
  }

  SolverConfig config(Index d) const {
    const NormOrder order = NormOrder::parse(p);
    SolverConfig cfg(radius ? InvarianceBall(order, *radius, d) : InvarianceBall(order, d));
    cfg.lambda0 = lambda0;
    cfg.decay = decay;
    cfg.lambda_min = lambda_min;
    cfg.outer_max_iters = max_iter;
    cfg.outer_tol = tol;
    cfg.restarts = restarts;
    cfg.seed = seed;
    return cfg;
  }

  json echo() const {
    json j;
    j["p"] = NormOrder::parse(p).to_string();
    j["radius"] = radius ? json(*radius) : json(nullptr);
    j["lambda0"] = lambda0;
    j["decay"] = decay;
    j["lambda_min"] = lambda_min;
    j["max_iter"] = max_iter;
    j["tol"] = tol;
    j["restarts"] = restarts;
    j["seed"] = seed;
    return j;
  }
};

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) {
    if (path.empty()) return;
    out_ = std::make_unique<OutputFile>(path);
    out_->stream() << "context,start,iteration,lambda,objective,regularized_objective,delta_map,"
                      "delta_gamma,sinkhorn_iterations,sinkhorn_converged\n";
  }
  explicit operator bool() const { return out_ != nullptr; }
  void write(const std::string& context, const TraceRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", context.c_str(),
                  r.start, r.iteration, r.lambda, r.objective, r.regularized_objective, r.delta_map,
                  r.delta_gamma, r.sinkhorn_iterations, r.sinkhorn_converged ? 1 : 0);
    out_->stream() << buf;
    out_->stream().flush();
  }
  void commit() {
    if (out_) out_->commit();
  }

 private:
  std::unique_ptr<OutputFile> out_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- synth -------------------------------------------------------------------

struct SynthFlags {
  SolverFlags solver;
  Index d = 3;
  Index n = 100;
  std::string family = "inf";
  std::vector<double> sigmas{0.0};
  std::vector<std::string> methods{"invariant"};
  int reps = 5;
  double baseline_lambda = 1e-3;
  std::string out;
  std::string summary;
};

int run_synth(const SynthFlags& f) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepConfig cfg;
  cfg.d = f.d;
  cfg.n = f.n;
  cfg.family = NormOrder::parse(f.family);
  cfg.sigmas = f.sigmas;
  cfg.methods.clear();
  const NormOrder solver_p = NormOrder::parse(f.solver.p);
  for (const auto& m : f.methods) cfg.methods.push_back(Method::parse(m, solver_p));
  cfg.repetitions = f.reps;
  cfg.seed = f.solver.seed;
  cfg.lambda0 = f.solver.lambda0;
  cfg.decay = f.solver.decay;
  cfg.lambda_min = f.solver.lambda_min;
  cfg.outer_max_iters = f.solver.max_iter;
  cfg.outer_tol = f.solver.tol;
  cfg.restarts = f.solver.restarts;
  cfg.radius = f.solver.radius;
  cfg.baseline_lambda = f.baseline_lambda;
  cfg.validate();
  f.solver.config(cfg.d).validate();

  OutputFile csv(f.out);
  write_sweep_csv_header(csv.stream());
  TraceWriter trace(f.solver.trace);
  SweepTraceCallback on_trace;
  if (trace) {
    on_trace = [&trace](const SweepRow& row, const TraceRecord& rec) {
      std::ostringstream ctx;
      ctx << row.method << "/sigma=" << row.sigma << "/rep=" << row.repetition;
      trace.write(ctx.str(), rec);
    };
  }
  const SweepReport report = run_noise_sweep(
      cfg, [&csv](const SweepRow& row) { write_sweep_csv_row(csv.stream(), row); }, on_trace);
  csv.commit();
  trace.commit();

  if (!f.summary.empty()) {
    json doc;
    doc["command"] = "synth";
    json config = f.solver.echo();
    config["d"] = cfg.d;
    config["n"] = cfg.n;
    config["family"] = cfg.family.to_string();
    config["sigmas"] = cfg.sigmas;
    json methods = json::array();
    for (const auto& m : cfg.methods) methods.push_back(m.name());
    config["methods"] = methods;
    config["repetitions"] = cfg.repetitions;
    config["baseline_lambda"] = cfg.baseline_lambda;
    config["source_cloud"] = "iid standard normal";
    config["noise_convention"] = "sigma is the per-entry standard deviation";
    doc["config"] = config;
    json cells = json::array();
    for (const auto& c : report.cells) {
      cells.push_back({{"method", c.method},
                       {"sigma", c.sigma},
                       {"repetitions", c.repetitions},
                       {"accuracy_mean", c.accuracy_mean},
                       {"accuracy_std", c.accuracy_std},
                       {"map_error_mean", c.map_error_mean},
                       {"map_error_std", c.map_error_std}});
    }
    doc["cells"] = cells;
    doc["runtime_s"] = seconds_since(t0);
    write_json(f.summary, doc);
  }
  return kExitOk;
}

// --- align -------------------------------------------------------------------

struct AlignFlags {
  SolverFlags solver;
  std::string src;
  std::string tgt;
  std::string dict;
  Index max_vocab = 200000;
  Index subsample_k = 5000;
  Index stage2_vocab = 20000;
  int stage2_max_iter = 50;
  Index csls_k = 10;
  std::string out;
  std::string map_out;
};

json stage_summary(const AlignmentResult& r, Index size) {
  return {{"size", size},
          {"iterations", r.trace.size()},
          {"converged", r.converged},
          {"final_lambda", r.trace.empty() ? 0.0 : r.trace.back().lambda},
          {"final_objective", r.trace.empty() ? 0.0 : r.trace.back().objective}};
}

int run_align(const AlignFlags& f) {
  const auto t0 = std::chrono::steady_clock::now();
  const EmbeddingTable src = unit_normalize(load_embeddings(f.src, f.max_vocab));
  const EmbeddingTable tgt = unit_normalize(load_embeddings(f.tgt, f.max_vocab));
  if (src.dim() != tgt.dim()) {
    throw InvalidInput("source embeddings have d=" + std::to_string(src.dim()) + ", target d=" +
                       std::to_string(tgt.dim()));
  }
  const BilingualDictionary dict =
      f.dict.empty() ? BilingualDictionary::identity(src.tokens(), tgt.tokens()) : load_dictionary(f.dict);

  const Index vocab = std::min(src.vocab_size(), tgt.vocab_size());
  TwoStageConfig cfg;
  cfg.stage2_vocab = std::min(f.stage2_vocab, vocab);
  cfg.stage1_size = std::min(f.subsample_k, cfg.stage2_vocab);
  cfg.stage2_max_iters = f.stage2_max_iter;
  cfg.base = f.solver.config(src.dim());

  TraceWriter trace(f.solver.trace);
  SolveOptions first, second;
  if (trace) {
    first.on_iteration = [&trace](const TraceRecord& r) { trace.write("stage1", r); };
    second.on_iteration = [&trace](const TraceRecord& r) { trace.write("stage2", r); };
  }
  const TwoStageResult result = align_embeddings(src, tgt, cfg, first, second);
  trace.commit();

  const Matrix& map = result.stage2.map.matrix();
  const PrecisionReport precision = translate_and_evaluate(src, tgt, map, dict, f.csls_k, {1, 5, 10});

  if (!f.map_out.empty()) {
    OutputFile out(f.map_out, true);
    write_map(out.stream(), map);
    out.commit();
  }

  json doc;
  doc["command"] = "align";
  doc["P@1"] = precision.precision.at(1);
  doc["P@5"] = precision.precision.at(5);
  doc["P@10"] = precision.precision.at(10);
  doc["evaluated"] = precision.evaluated;
  doc["skipped"] = precision.skipped;
  doc["duplicates_skipped"] = {{"src", src.duplicates_skipped}, {"tgt", tgt.duplicates_skipped}};
  doc["stage1"] = stage_summary(result.stage1, cfg.stage1_size);
  doc["stage2"] = stage_summary(result.stage2, cfg.stage2_vocab);
  json config = f.solver.echo();
  config["src"] = f.src;
  config["tgt"] = f.tgt;
  config["dict"] = f.dict.empty() ? json("identity over shared tokens") : json(f.dict);
  config["max_vocab"] = f.max_vocab;
  config["src_vocab"] = src.vocab_size();
  config["tgt_vocab"] = tgt.vocab_size();
  config["subsample_k"] = cfg.stage1_size;
  config["stage2_vocab"] = cfg.stage2_vocab;
  config["stage2_max_iter"] = cfg.stage2_max_iters;
  config["csls_k"] = f.csls_k;
  doc["config"] = config;
  doc["runtime_s"] = seconds_since(t0);
  write_json(f.out, doc);
  return kExitOk;
}

// --- check-gw / check-procrustes ----------------------------------------------

int run_check_gw(int trials, std::uint64_t seed, double tol, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const GwSuiteReport r = run_gw_suite(trials, seed, tol);
  std::cerr << "check-gw: " << r.trials << " trials (" << r.quartic_checked
            << " against the quadruple loop), max |diff| = " << r.max_abs_diff << '\n';
  json doc;
  doc["command"] = "check-gw";
  doc["passed"] = r.passed;
  doc["max_abs_diff"] = r.max_abs_diff;
  doc["trials"] = r.trials;
  doc["quartic_checked"] = r.quartic_checked;
  doc["config"] = {{"trials", trials}, {"seed", seed}, {"tol", tol}};
  doc["runtime_s"] = seconds_since(t0);
  write_json(out, doc);
  return r.passed ? kExitOk : kExitVerification;
}

int run_check_procrustes(int instances, int maps, std::uint64_t seed, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProcrustesSuiteReport r = run_procrustes_suite(instances, maps, seed);
  std::cerr << "check-procrustes: " << r.instances << " matrices x 5 orders, max value error "
            << r.max_value_rel_error << ", worst margin " << r.worst_margin << '\n';
  json doc;
  doc["command"] = "check-procrustes";
  doc["passed"] = r.passed;
  doc["max_value_rel_error"] = r.max_value_rel_error;
  doc["max_ball_violation"] = r.max_ball_violation;
  doc["worst_margin"] = r.worst_margin;
  doc["config"] = {{"instances", instances}, {"maps", maps}, {"seed", seed}};
  doc["runtime_s"] = seconds_since(t0);
  write_json(out, doc);
  return r.passed ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal transport with global linear invariances"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "planted-map noise sweep on synthetic clouds");
  synth.solver.attach(synth_cmd);
  synth_cmd->add_option("--d", synth.d, "dimension")->capture_default_str();
  synth_cmd->add_option("--n", synth.n, "points per cloud")->capture_default_str();
  synth_cmd->add_option("--family", synth.family, "order of the planted map family")
      ->capture_default_str();
  synth_cmd->add_option("--sigmas", synth.sigmas, "noise levels")->delimiter(',')->capture_default_str();
  synth_cmd->add_option("--methods", synth.methods, "emd, sinkhorn, oracle, invariant[:p]")
      ->delimiter(',')
      ->capture_default_str();
  synth_cmd->add_option("--reps", synth.reps, "repetitions per noise level")->capture_default_str();
  synth_cmd->add_option("--baseline-lambda", synth.baseline_lambda,
                        "regularization of the sinkhorn and oracle baselines")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "CSV output (stdout when omitted)");
  synth_cmd->add_option("--summary", synth.summary, "JSON summary output");

  AlignFlags align;
  auto* align_cmd = app.add_subcommand("align", "align two embedding tables and evaluate");
  align.solver.attach(align_cmd);
  align_cmd->add_option("--src", align.src, "source embeddings (text)")->required();
  align_cmd->add_option("--tgt", align.tgt, "target embeddings (text)")->required();
  align_cmd->add_option("--dict", align.dict, "evaluation dictionary; identity over shared tokens when omitted");
  align_cmd->add_option("--max-vocab", align.max_vocab, "rows read per table")->capture_default_str();
  align_cmd->add_option("--subsample-k", align.subsample_k, "first-stage vocabulary")->capture_default_str();
  align_cmd->add_option("--stage2-vocab", align.stage2_vocab, "second-stage vocabulary")
      ->capture_default_str();
  align_cmd->add_option("--stage2-max-iter", align.stage2_max_iter, "second-stage outer iterations")
      ->capture_default_str();
  align_cmd->add_option("--csls-k", align.csls_k, "CSLS neighbourhood size")->capture_default_str();
  align_cmd->add_option("--out", align.out, "JSON output (stdout when omitted)");
  align_cmd->add_option("--map-out", align.map_out, "binary dump of the learned map");

  int gw_trials = 100;
  std::uint64_t gw_seed = 0;
  double gw_tol = 1e-9;
  std::string gw_out;
  auto* gw_cmd = app.add_subcommand("check-gw", "randomized GW / Frobenius equivalence suite");
  gw_cmd->add_option("--trials", gw_trials, "random instances")->capture_default_str();
  gw_cmd->add_option("--seed", gw_seed, "random seed")->capture_default_str();
  gw_cmd->add_option("--tol", gw_tol, "allowed absolute difference")->capture_default_str();
  gw_cmd->add_option("--out", gw_out, "JSON output (stdout when omitted)");

  int pr_instances = 200;
  int pr_maps = 1000;
  std::uint64_t pr_seed = 0;
  std::string pr_out;
  auto* pr_cmd = app.add_subcommand("check-procrustes", "closed-form map step against random feasible maps");
  pr_cmd->add_option("--instances", pr_instances, "random matrices")->capture_default_str();
  pr_cmd->add_option("--maps", pr_maps, "random feasible maps per matrix and order")->capture_default_str();
  pr_cmd->add_option("--seed", pr_seed, "random seed")->capture_default_str();
  pr_cmd->add_option("--out", pr_out, "JSON output (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*align_cmd) return run_align(align);
    if (*gw_cmd) return run_check_gw(gw_trials, gw_seed, gw_tol, gw_out);
    if (*pr_cmd) return run_check_procrustes(pr_instances, pr_maps, pr_seed, pr_out);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
