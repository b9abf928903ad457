// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.h"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/errors.h"
#include "prefix_forest/forest_io.h"
#include "prefix_forest/packer_exact.h"
#include "prefix_forest/packer_heuristic.h"
#include "prefix_forest/packing_oracle.h"
#include "prefix_forest/refmodel/verify.h"
#include "prefix_forest/synthetic.h"

namespace prefix_forest::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Tokens processed per trajectory set are the only quantity modelled here.
constexpr const char* kBenchNote =
    "token-processing ratio only; GPU wall-clock speedups are NOT measured by this tool";

struct CommonOptions {
  std::string input;
  std::string kind = "trajectories";
  std::string out;
  std::uint64_t seed = 7;
};

struct PackOptions {
  std::optional<Tokens> capacity;
  std::string packer = "multi";
  bool oracle = false;
  size_t max_items = ExactLimits{}.max_items;
  size_t max_states = ExactLimits{}.max_states;
};

struct AnalyzeOptions {
  std::optional<double> synthetic_por;
  std::string curves;
};

struct EmitOptions {
  std::string plan;
};

struct VerifyCliOptions {
  std::optional<double> tolerance;
  bool disable_scaler = false;
  bool plain_causal_mask = false;
  std::string precision = "f64";
  refmodel::ModelConfig model;
};

struct BenchOptions {
  std::vector<Tokens> capacities;
};

InputKind parse_kind(const std::string& kind) {
  return kind == "tree" ? InputKind::kTree : InputKind::kTrajectories;
}

void emit_report(const Json& report, const std::string& out) {
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    spdlog::info("wrote {}", out);
  }
}

Tokens max_leaf_length(const TrajectoryTree& tree, const TreeAnnotations& ann) {
  Tokens best = 0;
  for (const Leaf& l : tree.leaves()) best = std::max(best, ann.depth(l.node));
  return best;
}

PackPlan run_packer(const TrajectoryTree& tree, const TreeAnnotations& ann, const PackOptions& o, Tokens capacity) {
  const Capacity cap{capacity};
  if (o.packer == "single") return reconstruct_plan(single_path_dp(tree, ann, cap), tree);
  if (o.packer == "heuristic") return heuristic_pack(tree, ann, cap);
  try {
    return multi_path_dp(tree, ann, cap, ExactLimits{o.max_items, o.max_states, true});
  } catch (const ExactModeLimitExceeded& e) {
    throw ExactModeLimitExceeded(std::string(e.what()) + " (hint: use --packer heuristic)");
  }
}

void require_valid(const TrajectoryTree& tree, const PackPlan& plan, Tokens capacity) {
  const std::vector<Violation> violations = validate_plan(tree, plan, Capacity{capacity});
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "packer produced an invalid plan:";
  for (const Violation& v : violations) msg << " [" << to_string(v.kind) << " t=" << v.traversal << " " << v.detail << "]";
  throw std::logic_error(msg.str());
}

Json plan_stats(const TrajectoryTree& tree, const PackPlan& plan) {
  const double err = effective_reuse_ratio(plan, tree);
  Json s;
  s["packer"] = plan.method;
  s["capacity"] = plan.capacity;
  s["traversals"] = plan.traversals.size();
  s["linear_tokens"] = linear_token_total(tree);
  s["tree_tokens"] = tree_token_total(tree);
  s["total_cost"] = plan.total_cost;
  s["savings"] = plan.savings;
  s["por"] = por(tree);
  s["err"] = err;
  return s;
}

// ---- analyze ----------------------------------------------------------------

int cmd_analyze(const CommonOptions& c, const AnalyzeOptions& a) {
  Json report;
  std::optional<TrajectoryTree> tree;
  if (a.synthetic_por) {
    PorDatasetParams params;
    params.seed = c.seed;
    const PorDataset ds = por_target_dataset(*a.synthetic_por, params);
    tree = build_forest(ds.trajectories);
    report["input"] = nullptr;
    report["generator"] = {{"kind", "por_target"},
                           {"target", ds.target},
                           {"leaves", params.leaves},
                           {"total_tokens", params.total_tokens},
                           {"vocab", params.vocab},
                           {"seed", params.seed},
                           {"shared_prefix", ds.shared_prefix}};
  } else {
    if (c.input.empty()) throw InputError("analyze: --input or --synthetic-por is required");
    tree = load_tree(c.input, parse_kind(c.kind));
    report["input"] = c.input;
    report["kind"] = c.kind;
  }
  const TreeAnnotations ann = annotate(*tree);
  report["nodes"] = tree->node_count();
  report["leaves"] = tree->leaf_count();
  report["linear_tokens"] = linear_token_total(*tree);
  report["tree_tokens"] = tree_token_total(*tree);
  report["por"] = por(*tree);

  std::map<Tokens, size_t> hist;
  for (const Leaf& l : tree->leaves()) ++hist[ann.depth(l.node)];
  Json depth = Json::array();
  for (const auto& [len, count] : hist) depth.push_back({{"depth", len}, {"leaves", count}});
  report["depth_histogram"] = depth;

  const std::vector<CurvePoint> curve = active_trajectory_curve(*tree);
  Tokens baseline_area = 0;
  Tokens tree_area = 0;
  std::ostringstream csv;
  csv << "position,baseline_active,tree_active\n";
  for (const CurvePoint& p : curve) {
    baseline_area += p.baseline_active;
    tree_area += p.tree_active;
    csv << p.position << ',' << p.baseline_active << ',' << p.tree_active << '\n';
  }
  report["curve_areas"] = {{"baseline_active", baseline_area}, {"tree_active", tree_area}};

  std::string curves = a.curves;
  if (curves.empty() && !c.out.empty()) curves = fs::path(c.out).replace_extension(".curves.csv").string();
  if (!curves.empty()) {
    write_file_atomic(curves, csv.str());
    report["curves_csv"] = curves;
  } else {
    report["curves_csv"] = nullptr;
  }
  emit_report(report, c.out);
  return kExitOk;
}

// ---- pack ---------------------------------------------------------------------

int cmd_pack(const CommonOptions& c, const PackOptions& p, const std::string& stats_path) {
  if (c.input.empty()) throw InputError("pack: --input is required");
  if (c.out.empty()) throw InputError("pack: --out is required");
  if (!p.capacity) throw InputError("pack: --capacity is required");
  const TrajectoryTree tree = load_tree(c.input, parse_kind(c.kind));
  const TreeAnnotations ann = annotate(tree);

  const auto start = std::chrono::steady_clock::now();
  const PackPlan plan = run_packer(tree, ann, p, *p.capacity);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("{} packer: {} nodes, {} traversals in {:.3f} ms", plan.method, tree.node_count(),
               plan.traversals.size(), ms);

  require_valid(tree, plan, *p.capacity);
  write_file_atomic(c.out, plan_to_json(tree, plan));

  Json stats = plan_stats(tree, plan);
  stats["plan"] = c.out;
  if (p.oracle) {
    if (tree.leaf_count() > kOracleMaxLeaves) {
      stats["oracle"] = {{"skipped", "more than " + std::to_string(kOracleMaxLeaves) + " leaves"}};
    } else {
      const OracleResult opt = brute_force_optimal(tree, Capacity{*p.capacity});
      stats["oracle"] = {{"cost", opt.cost},
                         {"gap", plan.total_cost - opt.cost},
                         {"relative_gap", static_cast<double>(plan.total_cost - opt.cost) / static_cast<double>(opt.cost)}};
    }
  }
  emit_report(stats, stats_path);
  return kExitOk;
}

// ---- emit -----------------------------------------------------------------------

int cmd_emit(const CommonOptions& c, const EmitOptions& e) {
  if (c.input.empty()) throw InputError("emit: --input is required");
  if (e.plan.empty()) throw InputError("emit: --plan is required");
  if (c.out.empty()) throw InputError("emit: --out directory is required");
  const TrajectoryTree tree = load_tree(c.input, parse_kind(c.kind));
  const PackPlan plan = parse_plan_json(tree, read_text_file(e.plan));
  fs::create_directories(c.out);

  Json summary;
  Json files = Json::array();
  for (size_t i = 0; i < plan.traversals.size(); ++i) {
    const PackedBatch batch = emit(tree, plan.traversals[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "batch_%03zu.json", i);
    const fs::path path = fs::path(c.out) / name;
    write_file_atomic(path, batch_to_json(tree, batch));
    files.push_back({{"file", path.string()},
                     {"num_tokens", batch.size()},
                     {"traversal_cost", plan.traversals[i].cost}});
  }
  summary["batches"] = files;
  emit_report(summary, "");
  return kExitOk;
}

// ---- verify ---------------------------------------------------------------------

Json grad_json(const refmodel::GradReport& g) {
  return {{"max_abs_err", g.max_abs_err}, {"max_rel_err", g.max_rel_err},
          {"argmax", {{"param", g.param}, {"index", g.index}}},
          {"tolerance", g.tolerance}, {"pass", g.pass}};
}

Json control_json(const refmodel::ControlResult& r) {
  return {{"applicable", r.applicable}, {"detected", r.detected}, {"error", r.error}};
}

int cmd_verify(const CommonOptions& c, const PackOptions& p, const VerifyCliOptions& v) {
  std::mt19937_64 rng(c.seed);
  const TrajectoryTree tree = c.input.empty() ? verification_tree(rng) : load_tree(c.input, parse_kind(c.kind));
  const TreeAnnotations ann = annotate(tree);
  const Tokens max_len = max_leaf_length(tree, ann);
  const Tokens capacity = p.capacity.value_or(std::max(max_len, (tree_token_total(tree) + 1) / 2));
  const PackPlan plan = run_packer(tree, ann, p, capacity);
  require_valid(tree, plan, capacity);
  v.model.validate();

  const bool f32 = v.precision == "f32";
  refmodel::VerifyOptions opts;
  if (f32) {
    opts.tolerance = 1e-4;
    opts.loss_tolerance = 1e-4;
  }
  if (v.tolerance) opts.tolerance = *v.tolerance;
  opts.run.scaler = v.disable_scaler ? refmodel::ScalerMode::kDisabled : refmodel::ScalerMode::kLossWeight;
  opts.run.mask = v.plain_causal_mask ? refmodel::MaskMode::kPlainCausal : refmodel::MaskMode::kSharedPrefix;

  const auto params = refmodel::init_model<double>(v.model, c.seed);
  const refmodel::VerifyReport r = f32 ? refmodel::verify(tree, plan, refmodel::cast_params<float>(params), opts)
                                       : refmodel::verify(tree, plan, params, opts);

  Json report;
  report["input"] = c.input.empty() ? Json(nullptr) : Json(c.input);
  report["seed"] = c.seed;
  report["precision"] = v.precision;
  report["model"] = {{"vocab", v.model.vocab}, {"d_model", v.model.d_model}, {"n_heads", v.model.n_heads},
                     {"n_layers", v.model.n_layers}, {"d_ff", v.model.d_ff}, {"rope_base", v.model.rope_base}};
  report["tree"] = {{"nodes", tree.node_count()}, {"leaves", tree.leaf_count()},
                    {"linear_tokens", linear_token_total(tree)}, {"tree_tokens", tree_token_total(tree)}};
  report["plan"] = plan_stats(tree, plan);
  report["run"] = {{"scaler", v.disable_scaler ? "disabled" : "loss_weight"},
                   {"mask", v.plain_causal_mask ? "plain_causal" : "shared_prefix"}};
  report["gradients"] = grad_json(r.grads);
  report["loss"] = {{"baseline", r.baseline_loss}, {"tree", r.tree_loss}, {"rel_err", r.loss_rel_err},
                    {"tolerance", opts.loss_tolerance}, {"pass", r.loss_pass}};
  report["prefix_identity"] = {{"max_abs_err", r.prefix_max_abs}, {"tolerance", opts.prefix_tolerance},
                               {"pass", r.prefix_pass}};
  report["scaler_paths"] = grad_json(r.scaler_paths);
  report["negative_controls"] = {{"scaler_disabled", control_json(r.scaler_control)},
                                 {"plain_causal_mask", control_json(r.mask_control)}};
  report["pass"] = r.pass;
  emit_report(report, c.out);
  if (!r.pass) spdlog::warn("verification failed");
  return r.pass ? kExitOk : kExitVerificationFailed;
}

// ---- bench ----------------------------------------------------------------------

struct BenchDataset {
  std::string name;
  Json generator;
  TrajectoryTree tree;
};

std::vector<BenchDataset> bench_datasets(const CommonOptions& c) {
  std::vector<BenchDataset> out;
  if (!c.input.empty()) {
    out.push_back({c.input, nullptr, load_tree(c.input, parse_kind(c.kind))});
    return out;
  }
  for (double target : {0.28, 0.705, 0.887}) {
    PorDatasetParams params;
    params.seed = c.seed;
    const PorDataset ds = por_target_dataset(target, params);
    Json gen = {{"kind", "por_target"}, {"target", target}, {"leaves", params.leaves},
                {"total_tokens", params.total_tokens}, {"vocab", params.vocab}, {"seed", params.seed}};
    char name[32];
    std::snprintf(name, sizeof(name), "por_%.3f", target);
    out.push_back({name, gen, build_forest(ds.trajectories)});
  }
  return out;
}

int cmd_bench(const CommonOptions& c, const PackOptions& p, const BenchOptions& b) {
  Json report;
  report["measures"] = "baseline_tokens / packed_tokens";
  report["wall_clock_measured"] = false;
  report["note"] = kBenchNote;
  Json rows = Json::array();
  for (const BenchDataset& ds : bench_datasets(c)) {
    const TreeAnnotations ann = annotate(ds.tree);
    const Tokens max_len = max_leaf_length(ds.tree, ann);
    const Tokens full = tree_token_total(ds.tree);
    std::vector<Tokens> caps = b.capacities;
    if (caps.empty()) caps = {full, std::max(max_len, (full + 1) / 2), max_len};
    for (Tokens cap : caps) {
      Json row;
      row["dataset"] = ds.name;
      row["generator"] = ds.generator;
      row["capacity"] = cap;
      try {
        const PackPlan plan = run_packer(ds.tree, ann, p, cap);
        require_valid(ds.tree, plan, cap);
        const double err = effective_reuse_ratio(plan, ds.tree);
        const double por_value = por(ds.tree);
        row["packer"] = plan.method;
        row["baseline_tokens"] = linear_token_total(ds.tree);
        row["packed_tokens"] = plan.total_cost;
        row["token_ratio"] = static_cast<double>(linear_token_total(ds.tree)) / static_cast<double>(plan.total_cost);
        row["err"] = err;
        row["ratio_from_err"] = 1.0 / (1.0 - err);
        row["por"] = por_value;
        row["full_reuse_ratio"] = 1.0 / (1.0 - por_value);
        row["traversals"] = plan.traversals.size();
      } catch (const Error& e) {
        row["skipped"] = e.what();
      }
      rows.push_back(row);
    }
  }
  report["rows"] = rows;
  emit_report(report, c.out);
  return kExitOk;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("prefix-forest");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PREFIX_FOREST_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void add_common(CLI::App* app, CommonOptions& c) {
  app->add_option("--input", c.input, "Trajectory JSONL or tree JSON file");
  app->add_option("--kind", c.kind, "Input kind")->check(CLI::IsMember({"trajectories", "tree"}));
  app->add_option("--out", c.out, "Output path");
  app->add_option("--seed", c.seed, "Seed for synthetic data and model initialisation");
}

void add_packer(CLI::App* app, PackOptions& p) {
  app->add_option("--capacity", p.capacity, "Token capacity per traversal")->check(CLI::PositiveNumber);
  app->add_option("--packer", p.packer, "Packer")->check(CLI::IsMember({"single", "multi", "heuristic"}));
  app->add_option("--max-items", p.max_items, "Exact mode: lifted items per node")->check(CLI::PositiveNumber);
  app->add_option("--max-states", p.max_states, "Exact mode: states per node")->check(CLI::PositiveNumber);
}

}  // namespace

int run(int argc, const char* const* argv) {
  if (!spdlog::get("prefix-forest")) configure_logging();

  CLI::App app{"Prefix-tree packing and gradient-equivalence toolkit"};
  app.require_subcommand(1);
  CommonOptions common;
  PackOptions pack;
  AnalyzeOptions analyze;
  EmitOptions emit_opts;
  VerifyCliOptions verify_opts;
  BenchOptions bench;
  std::string stats_path;

  CLI::App* a = app.add_subcommand("analyze", "Tree statistics, POR and active-trajectory curves");
  add_common(a, common);
  a->add_option("--synthetic-por", analyze.synthetic_por, "Analyse a generated dataset with this POR");
  a->add_option("--curves", analyze.curves, "CSV path for the active-trajectory curves");

  CLI::App* p = app.add_subcommand("pack", "Pack leaves into capacity-bounded traversals");
  add_common(p, common);
  add_packer(p, pack);
  p->add_flag("--oracle", pack.oracle, "Report the gap to the exhaustive optimum (small trees)");
  p->add_option("--stats", stats_path, "Stats JSON path (default stdout)");

  CLI::App* e = app.add_subcommand("emit", "Write one packed batch per traversal");
  add_common(e, common);
  e->add_option("--plan", emit_opts.plan, "Plan JSON from pack");

  CLI::App* v = app.add_subcommand("verify", "Tree-packed against per-trajectory gradients");
  add_common(v, common);
  add_packer(v, pack);
  v->add_option("--tolerance", verify_opts.tolerance, "Gradient relative-error bound");
  v->add_flag("--disable-scaler", verify_opts.disable_scaler, "Negative control: force every scale to 1");
  v->add_flag("--plain-causal-mask", verify_opts.plain_causal_mask, "Negative control: lower-triangular mask");
  v->add_option("--precision", verify_opts.precision, "Arithmetic")->check(CLI::IsMember({"f64", "f32"}));
  v->add_option("--vocab", verify_opts.model.vocab);
  v->add_option("--d-model", verify_opts.model.d_model);
  v->add_option("--heads", verify_opts.model.n_heads);
  v->add_option("--layers", verify_opts.model.n_layers);
  v->add_option("--d-ff", verify_opts.model.d_ff);

  CLI::App* b = app.add_subcommand("bench", "Token-processing ratios per dataset and capacity");
  add_common(b, common);
  b->add_option("--capacity", bench.capacities, "Capacities (repeatable)")->check(CLI::PositiveNumber);
  b->add_option("--packer", pack.packer, "Packer")->check(CLI::IsMember({"single", "multi", "heuristic"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (a->parsed()) return cmd_analyze(common, analyze);
    if (p->parsed()) return cmd_pack(common, pack, stats_path);
    if (e->parsed()) return cmd_emit(common, emit_opts);
    if (v->parsed()) return cmd_verify(common, pack, verify_opts);
    if (b->parsed()) {
      if (pack.packer == "multi" && b->count("--packer") == 0) pack.packer = "heuristic";
      return cmd_bench(common, pack, bench);
    }
  } catch (const LimitExceeded& err) {
    spdlog::error("{}", err.what());
    return kExitLimitExceeded;
  } catch (const InputError& err) {
    spdlog::error("{}", err.what());
    return kExitInputError;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return kExitInputError;
  }
  return kExitInputError;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace prefix_forest::cli
