#pragma once

// Command-line front end: simulate, solve, grid, sweep and verify.
//
// Exit codes: 0 success, 1 solve or verification failure, 2 usage, config
// or input error.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "quadrec/harness.hpp"
#include "quadrec/io.hpp"
#include "quadrec/oracle.hpp"
#include "quadrec/run_config.hpp"

namespace quadrec::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<Index> workers;
  std::string out;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  try {
    return parse_run_config(read_text(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("line ", 0) == 0) throw ConfigError(path + ":" + msg.substr(5));
    throw ConfigError(path + ": " + msg);
  }
}

/// Loads --config and applies --seed and --out.
inline RunConfig effective_config(const GlobalOptions& g, const std::string& fallback = {}) {
  RunConfig c = load_config(g.config_path.empty() ? fallback : g.config_path);
  if (g.seed) c.problem.seed = *g.seed;
  if (!g.out.empty()) c.output.directory = g.out;
  return c;
}

inline Index workers_of(const GlobalOptions& g) {
  return g.workers ? std::max<Index>(1, *g.workers) : default_workers();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  return p;
}

inline void warn_ratio(Index n, Index m, std::ostream& err) {
  if (auto w = measurement_ratio_warning(n, m)) err << "warning: " << *w << "\n";
}

inline int cmd_simulate(const GlobalOptions& g, Streams io) {
  const RunConfig c = effective_config(g);
  const TrialSpec spec = c.trial();
  warn_ratio(spec.n, spec.m, io.err);
  std::unique_ptr<GenerativeModel> model;
  if (c.prior.kind != PriorKind::Sparse) model = make_model(c.prior, spec.n, spec.k);
  const MeasurementSet set = simulate_trial(spec, model.get());
  const fs::path dir = prepare_dir(c.output.directory);
  write_text((dir / "truth.csv").string(), vector_csv("x", *set.truth));
  write_text((dir / "y.csv").string(), vector_csv("y", set.y));
  const json header = {{"n", set.n()},
                       {"m", set.m()},
                       {"seed", set.ensemble.seed()},
                       {"storage", to_string(set.ensemble.storage())}};
  write_text((dir / "ensemble.json").string(), dump(header));
  write_text((dir / "run_config.json").string(), dump(to_json(c)));
  io.err << "simulated n=" << set.n() << " m=" << set.m() << " into " << dir.string() << "\n";
  return kExitOk;
}

struct SolveOptions {
  std::string input;
  std::string init;  // empty, "flat" or "ppower"
};

inline int cmd_solve(const GlobalOptions& g, const SolveOptions& o, Streams io) {
  const fs::path in(o.input);
  for (const char* f : {"ensemble.json", "y.csv"}) {
    if (!fs::exists(in / f)) throw UsageError("missing input " + (in / f).string());
  }
  const fs::path stored = in / "run_config.json";
  RunConfig c = effective_config(g, fs::exists(stored) ? stored.string() : std::string());
  if (g.out.empty() && g.config_path.empty()) c.output.directory = in.string();
  if (!o.init.empty()) c.init = o.init == "ppower" ? PgdInit::PPower : PgdInit::Flat;

  const json header = json::parse(read_text((in / "ensemble.json").string()));
  for (const char* key : {"n", "m", "seed"}) {
    if (!header.contains(key) || !header.at(key).is_number_unsigned()) {
      throw UsageError((in / "ensemble.json").string() + ": missing or invalid '" + key + "'");
    }
  }
  c.problem.n = header.at("n").get<Index>();
  c.problem.m = header.at("m").get<Index>();
  TrialSpec spec = c.trial();
  warn_ratio(spec.n, spec.m, io.err);

  Vector y = read_vector_csv((in / "y.csv").string(), "y");
  std::optional<Vector> truth;
  if (fs::exists(in / "truth.csv")) truth = read_vector_csv((in / "truth.csv").string(), "x");
  auto ensemble = MeasurementEnsemble::sample(spec.n, spec.m, header.at("seed").get<std::uint64_t>(),
                                              spec.memory_budget_bytes);
  TrialRecord rec = make_record(spec);
  RecoveryResult result;
  const auto start = std::chrono::steady_clock::now();
  bool failed = false;
  try {
    spec.validate();
    const MeasurementSet set(std::move(ensemble), std::move(y), std::move(truth));
    std::unique_ptr<GenerativeModel> model;
    if (c.prior.kind != PriorKind::Sparse) model = make_model(c.prior, spec.n, spec.k);
    result = run_algorithm(spec, set, model.get());
    score(rec, spec, set, result);
  } catch (const DimensionError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::exception& e) {
    failed = true;
    rec.status = "failed";
    rec.message = e.what();
  }
  rec.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = prepare_dir(c.output.directory);
  if (!failed) {
    write_text((dir / "estimate.csv").string(), vector_csv("x", result.estimate));
    write_text((dir / "trace.csv").string(), trace_csv(result.trace));
  }
  auto metric = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json r;
  r["status"] = rec.status;
  r["rel_dist"] = metric(rec.rel_dist);
  r["cosine"] = metric(rec.cosine);
  r["iterations"] = rec.iterations;
  r["wall_time_ms"] = rec.wall_time_ms;
  r["message"] = rec.message;
  r["config"] = to_json(c);
  write_text((dir / "result.json").string(), dump(r));
  io.err << "solve " << to_string(spec.algorithm) << ": " << rec.status;
  if (!std::isnan(rec.rel_dist)) io.err << " rel_dist=" << format_double(rec.rel_dist);
  io.err << "\n";
  const bool ok = !failed && result.status != Status::Diverged;
  return ok ? kExitOk : kExitFailure;
}

struct GridOptions {
  bool resume = false;
  std::optional<Index> stop_after_cells;
};

inline std::string cell_name(Index k, Index m) {
  return "k" + std::to_string(k) + "_m" + std::to_string(m);
}

inline CellResult cell_from_records(Index k, Index m, std::vector<TrialRecord> records) {
  CellResult cell;
  cell.k = k;
  cell.m = m;
  cell.trials = records.size();
  for (const auto& r : records) {
    if (r.status == "failed") {
      ++cell.errored;
    } else if (r.success) {
      ++cell.successes;
    } else {
      ++cell.failures;
    }
  }
  cell.records = std::move(records);
  return cell;
}

struct StopRequested {};

inline const std::vector<Index>& require_axis(const std::optional<std::vector<Index>>& axis,
                                              const char* name) {
  if (!axis) throw ConfigError(std::string("config: experiment.") + name + " is required");
  return *axis;
}

inline int cmd_grid(const GlobalOptions& g, const GridOptions& o, Streams io) {
  const RunConfig c = effective_config(g);
  const auto& k_values = require_axis(c.experiment.k_values, "k_values");
  const auto& m_values = require_axis(c.experiment.m_values, "m_values");
  TrialSpec base = c.trial();
  for (Index k : k_values) {
    base.k = k;
    try {
      base.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config: k = " + std::to_string(k) + ": " + e.what());
    }
  }

  const fs::path dir(c.output.directory);
  const fs::path cells = dir / "cells";
  const std::string config_text = dump(to_json(c));
  const bool partial = fs::exists(cells) || fs::exists(dir / "grid.csv");
  if (partial && !o.resume) {
    throw UsageError(dir.string() + " holds an earlier grid run; pass --resume to continue it");
  }
  if (partial && fs::exists(dir / "run_config.json") &&
      read_text((dir / "run_config.json").string()) != config_text) {
    throw UsageError(dir.string() + " was started with a different configuration");
  }
  prepare_dir(cells.string());
  write_text((dir / "run_config.json").string(), config_text);

  auto load = [&](Index k, Index m) -> std::optional<CellResult> {
    const std::string name = cell_name(k, m);
    if (!fs::exists(cells / (name + ".done"))) return std::nullopt;
    const std::string path = (cells / (name + ".csv")).string();
    return cell_from_records(k, m, parse_trials_csv(read_text(path), path));
  };
  Index computed = 0;
  auto done = [&](const CellResult& cell) {
    const std::string name = cell_name(cell.k, cell.m);
    write_text((cells / (name + ".csv")).string(), trials_csv(cell.records));
    write_text((cells / (name + ".done")).string(), "");
    io.err << "cell k=" << cell.k << " m=" << cell.m << " success_rate "
           << format_double(cell.success_rate()) << "\n";
    if (o.stop_after_cells && ++computed >= *o.stop_after_cells) throw StopRequested{};
  };

  GridResult grid;
  try {
    grid = phase_transition_grid(k_values, m_values, c.experiment.trials, c.problem.seed, base,
                                 workers_of(g), load, done);
  } catch (const StopRequested&) {
    io.err << "stopped after " << computed << " new cells; rerun with --resume\n";
    return kExitOk;
  }
  std::vector<TrialRecord> all;
  for (const auto& cell : grid.cells) all.insert(all.end(), cell.records.begin(), cell.records.end());
  write_text((dir / "trials.csv").string(), trials_csv(all));
  write_text((dir / "grid.csv").string(), grid_csv(grid));
  if (c.output.wants("json")) {
    json cells_json = json::array();
    for (const auto& cell : grid.cells) {
      cells_json.push_back({{"k", cell.k},
                            {"m", cell.m},
                            {"success_rate", cell.success_rate()},
                            {"trials", cell.trials},
                            {"successes", cell.successes},
                            {"failures", cell.failures},
                            {"errored", cell.errored}});
    }
    write_text((dir / "grid.json").string(), dump({{"cells", cells_json}, {"config", to_json(c)}}));
  }
  return kExitOk;
}

inline int cmd_sweep(const GlobalOptions& g, Streams io) {
  const RunConfig c = effective_config(g);
  const auto& m_values = require_axis(c.experiment.m_values, "m_values");
  if (c.problem.k > c.problem.n) throw ConfigError("config: problem.k must not exceed problem.n");
  const SweepResult r =
      spectral_closeness_sweep(c.problem.n, c.problem.k, m_values, c.experiment.trials,
                               c.problem.seed, c.sparse.alpha, workers_of(g), c.problem.normalize_signal);
  const fs::path dir = prepare_dir(c.output.directory);
  write_text((dir / "sweep.csv").string(), sweep_csv(r));
  write_text((dir / "run_config.json").string(), dump(to_json(c)));
  if (c.output.wants("json")) {
    json rows = json::array();
    for (const auto& row : r.rows) {
      rows.push_back({{"m", row.m}, {"algo", row.algo}, {"q25", row.q25}, {"median", row.median},
                      {"q75", row.q75}});
    }
    write_text((dir / "sweep.json").string(), dump({{"rows", rows}, {"config", to_json(c)}}));
  }
  io.err << "sweep over " << r.m_values.size() << " m values written to " << dir.string() << "\n";
  return kExitOk;
}

inline json to_json(const CheckReport& r) {
  return {{"name", r.name}, {"pass", r.pass}, {"observed", r.observed}, {"bound", r.bound},
          {"detail", r.detail}};
}

struct VerifyOptions {
  std::string bounds;
};

inline int cmd_verify(const GlobalOptions& g, const VerifyOptions& o, Streams io) {
  const RunConfig c = effective_config(g);
  ConcentrationBounds b;
  if (!o.bounds.empty()) {
    if (!fs::exists(o.bounds)) throw UsageError("bounds file not found: " + o.bounds);
    b = parse_bounds(read_text(o.bounds));
  }
  std::vector<CheckReport> reports{expectation_suite(c.problem.seed, b)};
  for (auto& r : concentration_suite(c.problem.seed, b)) reports.push_back(std::move(r));
  json arr = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(to_json(r));
    ok = ok && r.pass;
  }
  io.out << dump(arr);
  if (!g.out.empty()) write_text((prepare_dir(g.out) / "verify.json").string(), dump(arr));
  return ok ? kExitOk : kExitFailure;
}

/// Parses argv and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"quadrec: recovery from quadratic measurements"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "run configuration (JSON)");
  app.add_option("--seed", g.seed, "override problem.seed");
  app.add_option("--workers", g.workers, "worker threads for grid and sweep")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");

  auto* simulate = app.add_subcommand("simulate", "write truth.csv, y.csv and ensemble.json");
  SolveOptions solve_opts;
  auto* solve = app.add_subcommand("solve", "run the configured solver on simulated data");
  solve->add_option("--input", solve_opts.input, "directory written by simulate")->required();
  solve->add_option("--init", solve_opts.init, "PGD start")->check(CLI::IsMember({"flat", "ppower"}));
  GridOptions grid_opts;
  auto* grid = app.add_subcommand("grid", "success-rate grid over experiment axes");
  grid->add_flag("--resume", grid_opts.resume, "continue an interrupted grid");
  grid->add_option("--stop-after-cells", grid_opts.stop_after_cells,
                   "stop after computing this many new cells");
  auto* sweep = app.add_subcommand("sweep", "spectral initializer distances over m");
  VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "oracle checks as a JSON array");
  verify->add_option("--bounds", verify_opts.bounds, "JSON file overriding check bounds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  const Streams io{out, err};
  try {
    if (simulate->parsed()) return cmd_simulate(g, io);
    if (solve->parsed()) return cmd_solve(g, solve_opts, io);
    if (grid->parsed()) return cmd_grid(g, grid_opts, io);
    if (sweep->parsed()) return cmd_sweep(g, io);
    if (verify->parsed()) return cmd_verify(g, verify_opts, io);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace quadrec::cli
