// Copyright 2026 The WarmFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "warmflow/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "warmflow/config.hpp"
#include "warmflow/diagnostics.hpp"
#include "warmflow/pipeline.hpp"
#include "warmflow/priorrl.hpp"
#include "warmflow/report.hpp"
#include "warmflow/rollout.hpp"
#include "warmflow/svg.hpp"
#include "warmflow/toyworlds.hpp"

namespace warmflow::cli {

namespace {

namespace fs = std::filesystem;

struct Context {
  Json config;
  Stamp stamp;
  fs::path out;
  std::ostream* log = &std::cerr;
};

// Stream identifiers for the per-command RNGs.
enum Stream : std::uint64_t {
  kDemoStream = 0xDA7A,
  kCurvatureStream = 0xC5A7,
  kMixtureStream = 0x3A1E,
};

ChunkedDataset load_dataset(const Context& ctx, const NavWorld& world, const PriorSpec& spec) {
  const std::string dir = ctx.config.at("paths").at("data").get<std::string>();
  if (!dir.empty()) {
    DemoFiles f = read_demo_files(dir);
    return window_dataset(std::move(f.buffer), f.action_norm, f.obs_norm, spec.horizon, spec.prediction_length());
  }
  Rng rng(ctx.stamp.seed, kDemoStream);
  return gen_chunked_dataset(gen_nav_demos(world, rng), spec.horizon, spec.prediction_length());
}

LoadedPolicy checkpoint_or_throw(const Context& ctx, const std::string& key_path = "") {
  const std::string p = key_path.empty() ? ctx.config.at("paths").at("checkpoint").get<std::string>() : key_path;
  if (p.empty()) throw ConfigError("paths.checkpoint is required for this command");
  LoadedPolicy lp = load_policy(p);
  if (lp.train_hash != train_hash(ctx.config))
    *ctx.log << "warning: checkpoint " << p << " was trained under a different config (" << lp.train_hash
             << " vs " << train_hash(ctx.config) << ")\n";
  return lp;
}

std::vector<std::uint64_t> u64_list(const Json& j) { return j.get<std::vector<std::uint64_t>>(); }

// ---------------------------------------------------------------------------
// plots (CSV in, SVG out)

void plot_loss(const fs::path& dir) {
  write_line_svg(read_csv(dir / "loss.csv"), {"training loss", "iteration", "loss", {}, false}, dir / "loss.svg");
}
void plot_violin(const fs::path& dir) {
  write_violin_svg(read_csv(dir / "violin.csv"), "nfe", "success-rate posterior", dir / "violin.svg");
}
void plot_paths(const fs::path& dir) {
  write_line_svg(read_csv(dir / "paths.csv"), {"integration paths", "t", "value", {"path", "coord"}, false},
                 dir / "paths.svg");
}
void plot_sigma(const fs::path& dir) {
  write_line_svg(read_csv(dir / "sigma.csv"), {"sigma sweep", "sigma", "sr", {"variant", "train_seed"}, true},
                 dir / "sigma.svg");
}
void plot_rl(const fs::path& dir) {
  write_line_svg(read_csv(dir / "rl_curve.csv"),
                 {"residual search", "env_steps", "sr", {"run", "rl_seed"}, true}, dir / "rl.svg");
}

int cmd_plot(const Context& ctx) {
  std::string in = ctx.config.at("plot").at("inputs").get<std::string>();
  const fs::path dir = in.empty() ? ctx.out : fs::path(in);
  int n = 0;
  auto run = [&](const char* csv, void (*fn)(const fs::path&)) {
    if (fs::exists(dir / csv)) {
      fn(dir);
      ++n;
    }
  };
  run("loss.csv", plot_loss);
  run("violin.csv", plot_violin);
  run("paths.csv", plot_paths);
  run("sigma.csv", plot_sigma);
  run("rl_curve.csv", plot_rl);
  if (n == 0) throw ConfigError("plot: no known CSV files in " + dir.string());
  if (dir != ctx.out) {
    for (const char* svg : {"loss.svg", "violin.svg", "paths.svg", "sigma.svg", "rl.svg"})
      if (fs::exists(dir / svg)) fs::copy_file(dir / svg, ctx.out / svg, fs::copy_options::overwrite_existing);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-data / train

int cmd_gen_data(const Context& ctx) {
  const NavWorld world = world_from_config(ctx.config);
  const PriorSpec spec = prior_from_config(ctx.config);
  Rng rng(ctx.stamp.seed, kDemoStream);
  const DemoSet demos = gen_nav_demos(world, rng);
  const ChunkedDataset ds = gen_chunked_dataset(demos, spec.horizon, spec.prediction_length());
  write_demo_files(ctx.out, demos, ds, ctx.stamp.config_hash, ctx.stamp.seed);
  return 0;
}

TrainedPolicy train_from(const Context& ctx, const PolicyTrainConfig& tc, const NavWorld& world) {
  const ChunkedDataset ds = load_dataset(ctx, world, tc.spec);
  return train_policy(ds, tc);
}

int cmd_train(const Context& ctx) {
  const NavWorld world = world_from_config(ctx.config);
  const PolicyTrainConfig tc = train_config_from(ctx.config);
  const TrainedPolicy tp = train_from(ctx, tc, world);
  save_policy(ctx.out / "checkpoint.cbor", tp.policy, tp.adam, tp.adam.step, ctx.stamp, train_hash(ctx.config),
              world);
  {
    CsvWriter csv(ctx.out / "loss.csv", {"iteration", "loss"}, ctx.stamp);
    for (std::size_t i = 0; i < tp.losses.size(); ++i) csv.row({static_cast<long long>(i), tp.losses[i]});
  }
  double tail = 0.0;
  const std::size_t w = std::min<std::size_t>(100, tp.losses.size());
  for (std::size_t i = tp.losses.size() - w; i < tp.losses.size(); ++i) tail += tp.losses[i];
  write_json(ctx.out / "train.json",
             {{"prior", to_json(tc.spec)},
              {"iterations", tc.train.iterations},
              {"parameters", tp.policy.params.parameter_count()},
              {"final_loss_mean100", tail / static_cast<double>(w)},
              {"checkpoint", "checkpoint.cbor"}},
             ctx.stamp);
  plot_loss(ctx.out);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

Json success_json(const SuccessStats& s) {
  return {{"k", s.successes},         {"n", s.trials},         {"alpha", s.alpha},
          {"beta", s.beta},           {"mean", s.posterior_mean}, {"lower90", s.lower90},
          {"upper90", s.upper90},     {"per_seed_sr", s.per_seed_sr}, {"seed_sr_mean", s.seed_sr_mean},
          {"seed_sr_std", s.seed_sr_std}};
}

int cmd_eval(const Context& ctx) {
  const Json& ev = ctx.config.at("eval");
  const int episodes = ev.at("episodes").get<int>();
  if (episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  const auto seeds = u64_list(ev.at("seeds"));
  const auto nfes = ev.at("nfe").get<std::vector<int>>();
  if (seeds.empty() || nfes.empty()) throw ConfigError("eval.seeds and eval.nfe must be non-empty");
  const LoadedPolicy lp = checkpoint_or_throw(ctx);
  const NavWorld world = world_from_config(ctx.config);
  const PriorSpec& spec = lp.policy.spec;
  const auto grid = unit_grid(ev.at("violin_points").get<int>());

  Json summary = Json::array();
  {
  CsvWriter rows(ctx.out / "eval.csv", {"variant", "sigma", "H", "nfe", "eval_seed", "episodes", "k", "sr"},
                 ctx.stamp);
  CsvWriter violin(ctx.out / "violin.csv", {"nfe", "y", "density"}, ctx.stamp);
  for (int nfe : nfes) {
    RolloutConfig rc{spec, nfe, ev.at("max_steps").get<int>(), ctx.stamp.seed};
    const EvalReport rep = evaluate(lp.policy, world, rc, episodes, seeds);
    for (std::size_t i = 0; i < seeds.size(); ++i)
      rows.row({std::string(to_string(spec.variant)), spec.sigma, static_cast<long long>(spec.horizon),
                static_cast<long long>(nfe), static_cast<long long>(seeds[i]), static_cast<long long>(episodes),
                static_cast<long long>(rep.per_seed_successes[i]), rep.success.per_seed_sr[i]});
    const auto pdf = beta_pdf(rep.success.successes, rep.success.trials, grid);
    for (std::size_t g = 0; g < grid.size(); ++g)
      violin.row({"nfe=" + std::to_string(nfe), grid[g], pdf[g]});
    summary.push_back({{"nfe", nfe},
                       {"success", success_json(rep.success)},
                       {"switches_median", rep.switching.median()},
                       {"switches_mean", rep.switching.mean()},
                       {"collisions", rep.switching.collisions},
                       {"mean_discontinuity", rep.mean_discontinuity}});
  }
  }
  write_json(ctx.out / "eval.json",
             {{"prior", to_json(spec)},
              {"results", summary},
              {"config_hash_mismatch", lp.train_hash != train_hash(ctx.config)}},
             ctx.stamp);
  plot_violin(ctx.out);
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

WarmAnchor anchor_from(const Json& d, Eigen::Index dim) {
  const std::string kind = d.at("anchor").get<std::string>();
  const Vector v = Vector::Constant(dim, d.at("anchor_value").get<double>());
  if (kind == "exact") return WarmAnchor::exact();
  if (kind == "offset") return WarmAnchor::offset(v);
  if (kind == "fixed") return WarmAnchor::fixed(v);
  throw ConfigError("diagnose.anchor must be exact, offset or fixed");
}

int cmd_diagnose(const Context& ctx) {
  const Json& d = ctx.config.at("diagnose");
  Json summary;
  if (!ctx.config.at("paths").at("checkpoint").get<std::string>().empty()) {
    const LoadedPolicy lp = checkpoint_or_throw(ctx);
    const NavWorld world = world_from_config(ctx.config);
    const ChunkedDataset ds = load_dataset(ctx, world, lp.policy.spec);
    Rng rng(ctx.stamp.seed, kCurvatureStream);
    const int steps = d.at("steps").get<int>();
    const CurvatureReport rep =
        curvature_sweep(lp.policy.params, lp.policy.spec, ds.data, d.at("observations").get<int>(), steps, rng);
    {
      CsvWriter csv(ctx.out / "curvature.csv", {"index", "tuple", "kappa"}, ctx.stamp);
      for (std::size_t i = 0; i < rep.kappa.size(); ++i)
        csv.row({static_cast<long long>(i), static_cast<long long>(rep.tuple_ids[i]), rep.kappa[i]});
    }
    {
      CsvWriter csv(ctx.out / "paths.csv", {"path", "tuple", "t", "coord", "value"}, ctx.stamp);
      const int n_paths = std::min<int>(d.at("paths").get<int>(), static_cast<int>(rep.tuple_ids.size()));
      for (int p = 0; p < n_paths; ++p) {
        const auto& tup = ds.data.tuples[rep.tuple_ids[static_cast<std::size_t>(p)]];
        const PriorDraw draw = training_prior(lp.policy.spec, ds.data.buffer, tup, rng);
        const SampleResult s = euler_sample(lp.policy.params, draw.a0, tup.obs, steps, true);
        for (std::size_t k = 0; k < s.path.t.size(); ++k) {
          const auto row = flat(s.path.states[k]);
          for (Eigen::Index c = 0; c < row.size(); ++c)
            csv.row({static_cast<long long>(p), static_cast<long long>(tup.index), s.path.t[k],
                     static_cast<long long>(c), row[c]});
        }
      }
    }
    summary["curvature"] = {{"mean", rep.mean}, {"observations", rep.kappa.size()}, {"steps", steps},
                            {"prior", to_json(lp.policy.spec)}};
    plot_paths(ctx.out);
  }

  const MixtureTarget target = gen_mixture_target(d.at("mixture"));
  const Quadrature quad{d.at("grid").get<int>(), d.at("t_max").get<double>(), d.at("samples").get<int>()};
  Rng rng(ctx.stamp.seed, kMixtureStream);
  {
    CsvWriter csv(ctx.out / "branching.csv", {"coupling", "branching", "branching_se", "risk", "risk_se"},
                  ctx.stamp);
    const Coupling ind = Coupling::independent(target);
    const BranchingReport b = branching_cost(ind, quad, rng);
    const RiskEstimate r = fm_risk_of_bayes_field(ind, quad, rng);
    csv.row({"independent", b.estimate, b.se, r.estimate, r.se});
    summary["independent"] = {{"branching", b.estimate}, {"branching_se", b.se}, {"risk", r.estimate},
                              {"risk_se", r.se}};
    if (target.dim() == 1) {
      const Coupling mono = Coupling::monotone(target);
      const BranchingReport bm = branching_cost(mono, quad, rng);
      const RiskEstimate rm = fm_risk_of_bayes_field(mono, quad, rng);
      csv.row({"monotone", bm.estimate, bm.se, rm.estimate, rm.se});
      summary["monotone"] = {{"branching", bm.estimate}, {"branching_se", bm.se}};
    }
  }
  {
    const Vector mask = Vector::Ones(target.dim());
    const auto rows = warm_bound_check(target, mask, anchor_from(d, target.dim()),
                                       d.at("bound_sigmas").get<std::vector<double>>(), quad, rng);
    CsvWriter csv(ctx.out / "bound.csv",
                  {"sigma", "branching", "branching_se", "mismatch", "noise_term", "slack", "surrogate",
                   "surrogate_se", "cross", "cross_se"},
                  ctx.stamp);
    for (const auto& r : rows)
      csv.row({r.sigma, r.branching, r.branching_se, r.mismatch, r.noise_term, r.slack, r.surrogate,
               r.surrogate_se, r.cross, r.cross_se});
  }
  summary["mixture"] = to_json(target);
  summary["quadrature"] = {{"grid", quad.grid}, {"t_max", quad.t_max}, {"samples", quad.samples}};
  write_json(ctx.out / "diagnose.json", summary, ctx.stamp);
  return 0;
}

// ---------------------------------------------------------------------------
// ablate-sigma

int cmd_ablate_sigma(const Context& ctx) {
  const Json& ab = ctx.config.at("ablate");
  const Json& ev = ctx.config.at("eval");
  const int episodes = ev.at("episodes").get<int>();
  if (episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  const int nfe = ab.at("nfe").get<int>();
  const NavWorld world = world_from_config(ctx.config);
  auto csv = std::make_unique<CsvWriter>(ctx.out / "sigma.csv", std::vector<std::string>{"variant", "sigma", "train_seed", "nfe", "episodes", "k", "sr"}, ctx.stamp);
  Json rows = Json::array();
  auto record = [&](const FlowPolicy& policy, std::uint64_t train_seed) {
    RolloutConfig rc{policy.spec, nfe, ev.at("max_steps").get<int>(), train_seed};
    const EvalReport rep = evaluate(policy, world, rc, episodes, {train_seed});
    csv->row({std::string(to_string(policy.spec.variant)), policy.spec.sigma, static_cast<long long>(train_seed),
             static_cast<long long>(nfe), static_cast<long long>(episodes),
             static_cast<long long>(rep.success.successes), rep.success.per_seed_sr.front()});
    rows.push_back({{"variant", to_string(policy.spec.variant)}, {"sigma", policy.spec.sigma},
                    {"train_seed", train_seed}, {"success", success_json(rep.success)}});
  };
  const auto ckpts = ctx.config.at("paths").at("checkpoints").get<std::vector<std::string>>();
  if (!ckpts.empty()) {
    for (const auto& p : ckpts) {
      const LoadedPolicy lp = checkpoint_or_throw(ctx, p);
      record(lp.policy, config_seed(ctx.config));
    }
  } else {
    const auto variants = ab.at("variants").get<std::vector<std::string>>();
    const auto sigmas = ab.at("sigmas").get<std::vector<double>>();
    const auto seeds = u64_list(ab.at("seeds"));
    if (variants.empty() || sigmas.empty() || seeds.empty())
      throw ConfigError("ablate.variants, ablate.sigmas and ablate.seeds must be non-empty");
    for (const auto& v : variants)
      for (std::uint64_t s : seeds)
        for (double sigma : sigmas) {
          PolicyTrainConfig tc = train_config_from(ctx.config);
          tc.spec.variant = prior_variant_from_string(v);
          tc.spec.sigma = sigma;
          tc.seed = s;
          record(train_from(ctx, tc, world).policy, s);
        }
  }
  csv.reset();
  write_json(ctx.out / "sigma.json", {{"rows", rows}, {"nfe", nfe}, {"episodes", episodes}}, ctx.stamp);
  plot_sigma(ctx.out);
  return 0;
}

// ---------------------------------------------------------------------------
// rl

int cmd_rl(const Context& ctx) {
  const Json& rl = ctx.config.at("rl");
  const NavWorld world = world_from_config(ctx.config);
  const ResidualTrainConfig tc = residual_train_from(rl);
  const auto seeds = u64_list(rl.at("seeds"));
  Json runs = rl.at("runs");
  if (runs.empty())
    runs = Json::array({{{"name", rl.at("anchor")},
                         {"checkpoint", ctx.config.at("paths").at("checkpoint")},
                         {"anchor", rl.at("anchor")},
                         {"bound", rl.at("bound")},
                         {"augment", rl.at("augment")}}});
  auto csv = std::make_unique<CsvWriter>(
      ctx.out / "rl_curve.csv",
      std::vector<std::string>{"run", "anchor", "bound", "rl_seed", "generation", "env_steps", "sr"}, ctx.stamp);
  Json summary = Json::array();
  for (const auto& r : runs) {
    const std::string name = r.at("name").get<std::string>();
    const LoadedPolicy lp = checkpoint_or_throw(ctx, r.at("checkpoint").get<std::string>());
    const ResidualSpec rs = residual_spec_from(r);
    const NoiseSpaceMdp mdp{lp.policy, world, rl.at("nfe").get<int>()};
    const auto results = train_residual(mdp, rs, tc, seeds);
    Json per_seed = Json::array();
    for (const auto& run : results) {
      for (const auto& p : run.curve)
        csv->row({name, std::string(to_string(rs.anchor)), rs.bound, static_cast<long long>(run.seed),
                 static_cast<long long>(p.generation), static_cast<long long>(p.env_steps), p.success_rate});
      per_seed.push_back({{"rl_seed", run.seed},
                          {"final_sr", run.final_sr(tc.final_window)},
                          {"steps_to_90pct", run.steps_to(0.9, tc.final_window)},
                          {"diverged", run.diverged},
                          {"frozen_unchanged", run.frozen_hash_before == run.frozen_hash_after}});
    }
    summary.push_back({{"run", name}, {"anchor", to_string(rs.anchor)}, {"bound", rs.bound},
                       {"augment", rs.augment}, {"seeds", per_seed}});
  }
  csv.reset();
  write_json(ctx.out / "rl.json", {{"runs", summary}}, ctx.stamp);
  plot_rl(ctx.out);
  return 0;
}

// ---------------------------------------------------------------------------
// entry point

void print_error(std::ostream& os, const std::string& kind, const std::string& message) {
  os << Json{{"schema_version", 1}, {"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

// Returns the process exit code: 0 success, 2 usage/config errors, 1 other
// failures. Errors are printed to `err` as one JSON record.
int run(int argc, const char* const* argv, std::ostream& err) {
  CLI::App app{"warmflow: flow-matching policies with warm-started priors on a toy world"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::vector<std::string> sets;
  const std::vector<std::string> names = {"gen-data", "train", "eval", "diagnose", "ablate-sigma", "rl", "plot"};
  for (const auto& n : names) {
    CLI::App* sub = app.add_subcommand(n);
    sub->add_option("--config", config_path, "JSON run config")->required();
    sub->add_option("--set", sets, "dotted key=value override")->take_all();
    sub->add_option("--out", out, "output directory")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    Context ctx;
    ctx.config = load_run_config(config_path, sets);
    ctx.stamp = {config_hash(ctx.config), config_seed(ctx.config)};
    ctx.out = out;
    ctx.log = &err;
    fs::create_directories(ctx.out);
    write_json(ctx.out / "resolved_config.json", {{"command", cmd}, {"config", ctx.config}}, ctx.stamp);
    if (cmd == "gen-data") return cmd_gen_data(ctx);
    if (cmd == "train") return cmd_train(ctx);
    if (cmd == "eval") return cmd_eval(ctx);
    if (cmd == "diagnose") return cmd_diagnose(ctx);
    if (cmd == "ablate-sigma") return cmd_ablate_sigma(ctx);
    if (cmd == "rl") return cmd_rl(ctx);
    return cmd_plot(ctx);
  } catch (const ConfigError& e) {
    print_error(err, "usage", e.what());
    return 2;
  } catch (const Json::exception& e) {
    print_error(err, "config", e.what());
    return 2;
  } catch (const NumericError& e) {
    print_error(err, "numeric", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "runtime", e.what());
    return 1;
  }
}

}  // namespace warmflow::cli
