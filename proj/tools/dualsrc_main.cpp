// dualsrc: gen | train-buy | train-coord | backtest | report

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualsrc/backtest.hpp"
#include "dualsrc/datagen.hpp"
#include "dualsrc/errors.hpp"
#include "dualsrc/kernels.hpp"
#include "dualsrc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualsrc;

namespace {

struct Common {
  std::string out;
  bool deterministic = false;
  std::size_t threads = 1;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ValidationError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path out_dir(const Common& c) {
  fs::path d = c.out;
  if (d.empty()) {
    const char* env = std::getenv("DUALSRC_OUT");
    d = env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
  }
  fs::create_directories(d);
  return d;
}

fs::path or_default(const std::string& given, const fs::path& dflt) {
  return given.empty() ? dflt : fs::path(given);
}

void apply_common(const Common& c) {
  if (c.deterministic) kernels::set_isa(kernels::Isa::kScalar);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Output directory (default: $DUALSRC_OUT or .)");
  sub->add_flag("--deterministic", c.deterministic,
                "Scalar kernels and zeroed wall times for byte-identical outputs");
  sub->add_option("--threads", c.threads, "Worker cap")->check(CLI::PositiveNumber);
}

ExoWorld read_world(const std::string& path, json* meta) {
  if (!fs::exists(path)) throw ValidationError("world file not found: " + path);
  return load_world(path, meta);
}

// A run log holds the resolved config under a known key; config files may be
// either a bare object or such a log.
json unwrap(const json& j, const char* key) {
  if (j.is_object() && j.contains("subcommand") && j.contains(key)) return j.at(key);
  return j;
}

std::optional<WorldSource> world_source(const json& meta) {
  if (!meta.contains("spec")) return std::nullopt;
  const GenSpec spec = meta.at("spec").get<GenSpec>();
  return WorldSource([spec](std::size_t epoch) {
    GenSpec s = spec;
    s.path_seed = derive_seed(spec.seed, epoch, 99);
    return std::make_shared<const ExoWorld>(generate_world(s));
  });
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string output;
};

int cmd_gen(const Common& c, const GenArgs& a) {
  apply_common(c);
  GenSpec spec;
  if (!a.spec.empty()) spec = unwrap(read_json(a.spec), "spec").get<GenSpec>();
  if (a.seed) spec.seed = *a.seed;
  validate_spec(spec);
  const fs::path dir = out_dir(c);
  const fs::path out = or_default(a.output, dir / "world.dsw");
  const ExoWorld w = generate_world(spec);
  const auto report = validate_world(w);
  if (!report.ok()) {
    const Violation& v = report.violations.front();
    throw ValidationError("generated world failed validation (" + std::to_string(report.violations.size()) +
                          " issues), first: product " + std::to_string(v.product) + " week " +
                          std::to_string(v.week) + ": " + v.what);
  }
  save_world(out, w, json{{"spec", spec}});
  write_json(dir / "gen.run.json", json{{"subcommand", "gen"}, {"spec", spec}, {"output", out.string()}});
  std::printf("wrote %s (%zu products x %zu weeks, hash %016llx)\n", out.string().c_str(),
              w.num_products, w.horizon, static_cast<unsigned long long>(world_hash(w)));
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string world;
  std::string mode = "dualsrc-rl";
  std::string config;
  std::string policy;  // train-coord: frozen priced buy policy
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batches;
  std::optional<double> step_size;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> train_weeks;
  bool no_resample = false;
  bool infinite_capacity = false;
  std::string resume;
  std::string output;
  std::string checkpoint;
  std::string log;
};

TrainConfig resolve_config(const Common& c, const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = unwrap(read_json(a.config), "train_config").get<TrainConfig>();
  if (a.seed) cfg.seed = *a.seed;
  if (a.batches) cfg.max_batches = *a.batches;
  if (a.step_size) cfg.step_size = *a.step_size;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.train_weeks) cfg.train_weeks = *a.train_weeks;
  if (a.no_resample) cfg.resample_paths = false;
  if (a.infinite_capacity) cfg.coord_infinite_capacity = true;
  if (c.deterministic) cfg.deterministic = true;
  cfg.threads = c.threads;
  return cfg;
}

int cmd_train_buy(const Common& c, const TrainArgs& a) {
  apply_common(c);
  json meta;
  const ExoWorld w = read_world(a.world, &meta);
  TrainConfig cfg = resolve_config(c, a);
  cfg.mask_llt = a.mode == "jit-rl";
  cfg.priced = a.mode == "priced";
  const fs::path dir = out_dir(c);
  cfg.checkpoint_path = or_default(a.checkpoint, dir / (a.mode + ".ckpt"));
  cfg.log_path = or_default(a.log, dir / (a.mode + ".log.csv"));
  validate_config(cfg, w);

  std::optional<WorldSource> src;
  if (cfg.resample_paths) src = world_source(meta);
  std::optional<TrainState> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  const PolicyParams init = initial_buy_policy(w, cfg);
  const BuyTrainResult r =
      train_buy_policy(w, cfg, init, src ? &*src : nullptr, resume ? &*resume : nullptr);
  const fs::path out = or_default(a.output, dir / (a.mode + ".dspp"));
  save_policy(out, r.policy, json{{"mode", a.mode}, {"world_hash", world_hash(w)}});
  write_json(dir / ("train-buy." + a.mode + ".run.json"),
             json{{"subcommand", "train-buy"},
                  {"mode", a.mode},
                  {"world", a.world},
                  {"train_config", cfg},
                  {"resample_source", src.has_value()},
                  {"output", out.string()}});
  const auto& h = r.state.history;
  std::printf("%s: %zu batches%s, objective %.6g -> %.6g, wrote %s\n", a.mode.c_str(),
              r.state.step, r.state.converged ? " (converged)" : "",
              h.empty() ? 0.0 : h.front().objective, h.empty() ? 0.0 : h.back().objective,
              out.string().c_str());
  return 0;
}

int cmd_train_coord(const Common& c, const TrainArgs& a) {
  apply_common(c);
  json meta;
  const ExoWorld w = read_world(a.world, &meta);
  if (!fs::exists(a.policy)) throw ValidationError("policy file not found: " + a.policy);
  const PolicyParams buy = load_policy(a.policy);
  if (buy.features.price_slots == 0) {
    throw ValidationError("train-coord needs a priced buy policy (train-buy --mode priced)");
  }
  TrainConfig cfg = resolve_config(c, a);
  const fs::path dir = out_dir(c);
  cfg.checkpoint_path = or_default(a.checkpoint, dir / "coordinator.ckpt");
  cfg.log_path = or_default(a.log, dir / "coordinator.log.csv");
  validate_config(cfg, w);

  std::optional<WorldSource> src;
  if (cfg.resample_paths) src = world_source(meta);
  std::optional<TrainState> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  const CoordParams init = initial_coordinator(w, cfg);
  const CoordTrainResult r = train_coordinator(w, buy, cfg, init, src ? &*src : nullptr,
                                               resume ? &*resume : nullptr);
  const fs::path out = or_default(a.output, dir / "coordinator.dscp");
  save_coordinator(out, r.coordinator, json{{"world_hash", world_hash(w)}});
  write_json(dir / "train-coord.run.json", json{{"subcommand", "train-coord"},
                                                {"world", a.world},
                                                {"policy", a.policy},
                                                {"train_config", cfg},
                                                {"resample_source", src.has_value()},
                                                {"output", out.string()}});
  const auto& h = r.state.history;
  std::printf("coordinator: %zu batches%s, loss %.6g -> %.6g, wrote %s\n", r.state.step,
              r.state.converged ? " (converged)" : "", h.empty() ? 0.0 : h.front().objective,
              h.empty() ? 0.0 : h.back().objective, out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct BacktestArgs {
  std::string world;
  std::string jit_rl, dualsrc_rl, priced, coordinator;
  std::vector<std::string> coordinators = {"none", "mpc", "neural"};
  std::size_t paths = 20;
  std::uint64_t path_seed = 777;
  double capacity_low = 0.5, capacity_high = 1.2;
  std::size_t capacity_block = 4;
  std::optional<double> tbs_alpha;
  std::size_t start_week = 72;
  std::size_t end_week = 0;
  double mpc_step = 0.5;
  std::size_t mpc_iters = 200;
  std::string criteria;
  bool export_products = false;
};

// "init" stands for an untrained network of the matching mode.
PolicyParams policy_or_init(const std::string& path, const ExoWorld& w, const std::string& mode) {
  if (path == "init") {
    TrainConfig cfg;
    cfg.mask_llt = mode == "jit-rl";
    cfg.priced = mode == "priced";
    return initial_buy_policy(w, cfg);
  }
  if (!fs::exists(path)) throw ValidationError(mode + " policy file not found: " + path);
  return load_policy(path);
}

std::string rewards_csv(const BacktestReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "policy,reward,pct_of_bsht\n";
  for (const auto& row : r.rewards) os << row.policy << ',' << row.reward << ',' << row.pct_of_bsht << '\n';
  return os.str();
}

std::string violations_csv(const BacktestReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "policy,coordinator,path,m1,m2,m3,m4,binding_filter_empty,reward,reward_pct,mpc_cap_hits\n";
  for (const auto& x : r.runs) {
    os << x.policy << ',' << x.coordinator << ',' << x.path << ',' << x.metrics.m1 << ','
       << x.metrics.m2 << ',' << x.metrics.m3 << ',' << x.metrics.m4 << ','
       << (x.metrics.binding_filter_empty ? 1 : 0) << ',' << x.reward << ',' << x.reward_pct
       << ',' << x.mpc_cap_hits << '\n';
  }
  return os.str();
}

int finish_with_criteria(const BacktestReport& rep, const std::string& criteria) {
  if (criteria.empty()) return 0;
  const auto fails = check_criteria(summarize(rep), read_json(criteria));
  for (const auto& f : fails) std::fprintf(stderr, "criterion failed: %s\n", f.c_str());
  if (fails.empty()) std::printf("all criteria met\n");
  return fails.empty() ? 0 : 1;
}

int cmd_backtest(const Common& c, const BacktestArgs& a) {
  apply_common(c);
  json meta;
  const ExoWorld w = read_world(a.world, &meta);
  BacktestConfig bc;
  bc.start_week = a.start_week;
  bc.end_week = a.end_week;
  bc.mpc.step = a.mpc_step;
  bc.mpc.max_iters = a.mpc_iters;
  bc.export_products = a.export_products;
  if (bc.start_week == 0) throw ValidationError("--start-week must be > 0 (the TBS alpha search uses weeks before it)");

  std::vector<PolicyEntry> entries;
  entries.push_back({"bsht", PolicyKind::kBsht, 0.0, nullptr});
  const double alpha = a.tbs_alpha ? *a.tbs_alpha : search_tbs_alpha(w, 0, bc.start_week).best_alpha;
  entries.push_back({"tbs", PolicyKind::kTbs, alpha, nullptr});
  std::optional<PolicyParams> jit, dual, priced;
  std::optional<CoordParams> neural;
  if (!a.jit_rl.empty()) {
    jit = policy_or_init(a.jit_rl, w, "jit-rl");
    entries.push_back({"jit-rl", PolicyKind::kRl, 0.0, &*jit});
  }
  if (!a.dualsrc_rl.empty()) {
    dual = policy_or_init(a.dualsrc_rl, w, "dualsrc-rl");
    entries.push_back({"dualsrc-rl", PolicyKind::kRl, 0.0, &*dual});
  }
  if (!a.priced.empty()) priced = policy_or_init(a.priced, w, "priced");
  if (!a.coordinator.empty()) {
    if (!fs::exists(a.coordinator)) throw ValidationError("coordinator file not found: " + a.coordinator);
    neural = load_coordinator(a.coordinator);
  }
  std::vector<std::string> coords;
  for (const auto& name : a.coordinators) {
    if (name == "neural" && !neural) continue;
    if (name != "none" && name != "mpc" && name != "neural") {
      throw ValidationError("unknown coordinator '" + name + "'");
    }
    coords.push_back(name);
  }
  if (priced) {
    bc.mpc.price_unit = neural ? neural->spec.price_scale : default_price_scale(w);
  }

  std::vector<std::vector<double>> paths;
  if (priced && a.paths > 0) {
    const WarmStart ws = warm_start(w, bc.start_week);
    const auto ref = reference_volumes(w, *priced, ws, bc);
    paths = binding_capacity_paths(w, ref, bc, a.paths, a.path_seed, a.capacity_low,
                                   a.capacity_high, a.capacity_block);
    if (paths.size() < a.paths) {
      std::fprintf(stderr, "warning: only %zu of %zu capacity paths bind\n", paths.size(), a.paths);
    }
  }

  BacktestReport rep = run_backtest(w, entries, priced ? &*priced : nullptr,
                                    neural ? &*neural : nullptr, coords, paths, bc);
  const json args = {{"world", a.world},
                     {"jit_rl", a.jit_rl},
                     {"dualsrc_rl", a.dualsrc_rl},
                     {"priced", a.priced},
                     {"coordinator", a.coordinator},
                     {"coordinators", a.coordinators},
                     {"paths", a.paths},
                     {"path_seed", a.path_seed},
                     {"capacity_low", a.capacity_low},
                     {"capacity_high", a.capacity_high},
                     {"capacity_block", a.capacity_block},
                     {"tbs_alpha", alpha},
                     {"start_week", a.start_week},
                     {"end_week", a.end_week},
                     {"mpc_step", a.mpc_step},
                     {"mpc_iters", a.mpc_iters}};
  rep.meta["config"] = args;
  rep.meta["config_hash"] = fnv_hex(args.dump());
  if (meta.contains("spec")) rep.meta["world_seed"] = meta["spec"].value("seed", 0);

  const fs::path dir = out_dir(c);
  write_json(dir / "report.json", report_to_json(rep));
  write_text(dir / "rewards.csv", rewards_csv(rep));
  write_text(dir / "violations.csv", violations_csv(rep));
  if (!rep.runs.empty()) export_trajectories(rep, dir / "trajectories", bc.start_week);
  if (a.export_products) {
    fs::create_directories(dir / "products");
    for (const auto& row : rep.rewards) {
      export_product_trajectories(row, dir / "products" / (row.policy + ".csv"), bc.start_week);
    }
  }
  write_json(dir / "backtest.run.json", json{{"subcommand", "backtest"}, {"args", args}});
  std::fputs(render_report(rep).c_str(), stdout);
  return finish_with_criteria(rep, a.criteria);
}

struct ReportArgs {
  std::string report;
  std::string format = "text";
  std::string criteria;
};

int cmd_report(const Common& c, const ReportArgs& a) {
  const fs::path path = or_default(a.report, out_dir(c) / "report.json");
  const BacktestReport rep = report_from_json(read_json(path));
  if (a.format == "text") {
    std::fputs(render_report(rep).c_str(), stdout);
  } else if (a.format == "csv") {
    std::fputs(rewards_csv(rep).c_str(), stdout);
    std::fputs("\n", stdout);
    std::fputs(violations_csv(rep).c_str(), stdout);
  } else {
    json s = json::object();
    for (const auto& [k, v] : summarize(rep)) s[k] = v;
    std::printf("%s\n", s.dump(2).c_str());
  }
  return finish_with_criteria(rep, a.criteria);
}

void error_line(const char* kind, const std::string& msg) {
  std::fprintf(stderr, "%s\n", json{{"error", kind}, {"message", msg}}.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-sourcing inventory: world generation, training, backtesting"};
  app.require_subcommand(1);
  Common common;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic world file");
  add_common(g, common);
  g->add_option("--spec", gen.spec, "Generator spec JSON (or a gen.run.json)");
  g->add_option("--seed", gen.seed, "Overrides the spec seed");
  g->add_option("-o,--output", gen.output, "World file (default OUT/world.dsw)");

  TrainArgs tb;
  auto* b = app.add_subcommand("train-buy", "Train a buy policy");
  add_common(b, common);
  b->add_option("--world", tb.world, "World file")->required();
  b->add_option("--mode", tb.mode, "jit-rl | dualsrc-rl | priced")
      ->check(CLI::IsMember({"jit-rl", "dualsrc-rl", "priced"}));
  auto add_train = [](CLI::App* s, TrainArgs& t) {
    s->add_option("--config", t.config, "TrainConfig JSON (or a *.run.json)");
    s->add_option("--seed", t.seed, "Training seed");
    s->add_option("--batches", t.batches, "Max batches");
    s->add_option("--step-size", t.step_size, "Optimizer step size");
    s->add_option("--batch-size", t.batch_size, "Products per batch");
    s->add_option("--train-weeks", t.train_weeks, "Training window length");
    s->add_flag("--no-resample", t.no_resample, "Reuse the given world's paths every epoch");
    s->add_option("--resume", t.resume, "Continue from a checkpoint");
    s->add_option("-o,--output", t.output, "Model file");
    s->add_option("--checkpoint", t.checkpoint, "Checkpoint file");
    s->add_option("--log", t.log, "Loss history CSV");
  };
  add_train(b, tb);

  TrainArgs tc;
  auto* cc = app.add_subcommand("train-coord", "Train the neural capacity-price coordinator");
  add_common(cc, common);
  cc->add_option("--world", tc.world, "World file")->required();
  cc->add_option("--policy", tc.policy, "Priced buy policy (.dspp)")->required();
  cc->add_flag("--infinite-capacity", tc.infinite_capacity, "Train with K = infinity");
  add_train(cc, tc);

  BacktestArgs bt;
  auto* k = app.add_subcommand("backtest", "Evaluate policies and coordinators on held-out weeks");
  add_common(k, common);
  k->add_option("--world", bt.world, "World file")->required();
  k->add_option("--jit-rl", bt.jit_rl, "JIT-RL policy file, or 'init'");
  k->add_option("--dualsrc-rl", bt.dualsrc_rl, "DualSrc-RL policy file, or 'init'");
  k->add_option("--priced", bt.priced, "Priced DualSrc-RL policy for capacity runs, or 'init'");
  k->add_option("--coordinator", bt.coordinator, "Neural coordinator file (.dscp)");
  k->add_option("--coordinators", bt.coordinators, "Subset of none,mpc,neural")->delimiter(',');
  k->add_option("--paths", bt.paths, "Binding capacity paths");
  k->add_option("--path-seed", bt.path_seed, "Capacity path seed");
  k->add_option("--capacity-low", bt.capacity_low, "Lowest capacity fraction of the peak");
  k->add_option("--capacity-high", bt.capacity_high, "Highest capacity fraction of the peak");
  k->add_option("--capacity-block", bt.capacity_block, "Weeks per capacity level")->check(CLI::PositiveNumber);
  k->add_option("--tbs-alpha", bt.tbs_alpha, "Fixed TBS alpha (default: searched on training weeks)");
  k->add_option("--start-week", bt.start_week, "First backtest week");
  k->add_option("--end-week", bt.end_week, "End of the window (0 = horizon)");
  k->add_option("--mpc-step", bt.mpc_step, "Dual search step");
  k->add_option("--mpc-iters", bt.mpc_iters, "Dual search iteration cap");
  k->add_option("--criteria", bt.criteria, "Criteria JSON; exit 1 if any is missed");
  k->add_flag("--export-products", bt.export_products, "Per-product trajectory CSVs");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Render a backtest report");
  add_common(r, common);
  r->add_option("report", rp.report, "report.json (default OUT/report.json)");
  r->add_option("--format", rp.format, "text | csv | json")->check(CLI::IsMember({"text", "csv", "json"}));
  r->add_option("--criteria", rp.criteria, "Criteria JSON; exit 1 if any is missed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (g->parsed()) return cmd_gen(common, gen);
    if (b->parsed()) return cmd_train_buy(common, tb);
    if (cc->parsed()) return cmd_train_coord(common, tc);
    if (k->parsed()) return cmd_backtest(common, bt);
    if (r->parsed()) return cmd_report(common, rp);
  } catch (const ValidationError& e) {
    error_line("validation", e.what());
  } catch (const DomainError& e) {
    error_line("domain", e.what());
  } catch (const ParseError& e) {
    error_line("parse", e.what());
  } catch (const VersionError& e) {
    error_line("version", e.what());
  } catch (const NumericError& e) {
    error_line("numeric", e.what());
  } catch (const json::exception& e) {
    error_line("config", e.what());
  } catch (const std::exception& e) {
    error_line("runtime", e.what());
  }
  return 1;
}
