#pragma once

/// \file maot/cli.hpp
/// \brief The `maot` command line: synthetic benchmark, image registration,
/// solver benchmarking and phantom generation, with JSON/CSV reports.
///
/// Exit codes: 0 every run converged, 2 some run did not converge, 1 usage or
/// I/O error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maot/imaging.hpp"
#include "maot/ma_core.hpp"
#include "maot/synthetic.hpp"

namespace maot::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { ok = 0, usage_error = 1, not_converged = 2 };

/// `--out` if given, else $MAOT_OUT, else ./maot-out.
inline fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MAOT_OUT"); env && *env) return env;
  return "maot-out";
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

struct ProbeOptions {
  bool enabled = false;
  std::uint64_t seed = 1;
  double tol = 5e-2;            ///< relative change between power estimates
  std::size_t max_iter = 50;
  double inner_tol = 1e-10;     ///< accurate inner solves keep the probed map linear
  std::size_t inner_max = 20000;
};

struct ProbeRecord {
  std::size_t iter = 0;
  double radius = 0.0;
  std::size_t power_iterations = 0;
  bool converged = false;
};

/// Estimates the dominant eigenvalue of theta = L_n^{-1} b at each Newton
/// step by power iteration through the backend's own solve.
inline LinearizationHook probe_hook(const ProbeOptions& opt, std::size_t n, std::vector<ProbeRecord>& out) {
  return [opt, n, &out](std::size_t iter, const LinearizedCoefficients& coeffs, LinearizedSolver& solver) {
    InnerSolverConfig ic;
    ic.tol = opt.inner_tol;
    ic.max_iter = opt.inner_max;
    const PeriodicGrid grid = coeffs.grid();
    LinearMap inv{grid.size(), [&](std::span<const double> x, std::span<double> y) {
                    const ScalarField rhs(grid, std::vector<double>(x.begin(), x.end()));
                    const ScalarField theta = solver.solve(coeffs, rhs, ic).theta;
                    std::copy(theta.values().begin(), theta.values().end(), y.begin());
                  }};
    const PowerReport rep = power_iteration(inv, opt.tol, opt.max_iter, opt.seed + 7919 * n + iter);
    out.push_back({iter, rep.radius, rep.iterations, rep.converged});
  };
}

/// One synthetic solve and everything derived from it.
struct SyntheticRun {
  std::size_t n = 0;
  Backend backend = Backend::fft;
  NewtonResult result;
  double u_error = 0.0;  ///< ||u_exact - u||_l2 of the returned iterate
  std::vector<ProbeRecord> probes;
};

inline SyntheticRun run_synthetic(const SyntheticProblem& p, std::size_t n, const NewtonConfig& cfg,
                                  const ProbeOptions& probe = {}) {
  const PeriodicGrid grid(n);
  std::vector<ProbeRecord> probes;
  RunOptions opts;
  opts.exact_u = p.exact_potential(grid);
  if (probe.enabled) opts.on_linearization = probe_hook(probe, n, probes);
  NewtonResult result = run_newton(p.source_density(grid), p.target(), cfg, opts);
  const double err = l2_norm(*opts.exact_u - result.u);
  return {n, cfg.backend, std::move(result), err, std::move(probes)};
}

struct OrderEntry {
  std::size_t n_coarse, n_fine;
  double order;
};

/// log(e_coarse / e_fine) / log(n_fine / n_coarse) for consecutive grids.
inline std::vector<OrderEntry> observed_orders(std::vector<std::pair<std::size_t, double>> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<OrderEntry> out;
  for (std::size_t k = 1; k < errors.size(); ++k) {
    const auto [nc, ec] = errors[k - 1];
    const auto [nf, ef] = errors[k];
    if (nc == nf) continue;
    out.push_back({nc, nf, std::log(ec / ef) / std::log(static_cast<double>(nf) / static_cast<double>(nc))});
  }
  return out;
}

/// Runs `jobs` either serially or one thread per job; rethrows the first failure.
template <class Fn>
void run_jobs(std::size_t jobs, bool single_thread, Fn fn) {
  if (single_thread || jobs <= 1) {
    for (std::size_t k = 0; k < jobs; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < jobs; ++k)
    threads.emplace_back([&, k] {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// run_jobs collecting one result per job, in job order.
template <class Fn>
auto run_all(std::size_t jobs, bool single_thread, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> slots(jobs);
  run_jobs(jobs, single_thread, [&](std::size_t k) { slots[k].emplace(fn(k)); });
  std::vector<R> out;
  out.reserve(jobs);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------- reports

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const NewtonConfig& c) {
  return {{"tau", c.tau},
          {"tol", c.tol},
          {"max_iter", c.max_iter},
          {"backend", to_string(c.backend)},
          {"inner_tol", c.inner.tol},
          {"inner_max", c.inner.max_iter},
          {"gmres_restart", c.inner.gmres_restart},
          {"sample", c.sample_mode == SampleMode::nearest ? "nearest" : "bilinear"},
          {"drop_first_order", c.drop_first_order}};
}

inline json to_json(const SolveReport& r) {
  json records = json::array();
  for (const IterationRecord& rec : r.records) {
    json j = {{"iter", rec.iter},
              {"residual", rec.residual},
              {"ftilde_mean", rec.ftilde_mean},
              {"u_mean", rec.u_mean},
              {"theta_mean", rec.theta_mean},
              {"min_eigenvalue", rec.min_eigenvalue},
              {"convex", rec.convex},
              {"inner_iterations", rec.inner_iterations},
              {"inner_restarts", rec.inner_outer},
              {"inner_residual", rec.inner_residual},
              {"inner_converged", rec.inner_converged},
              {"seconds", rec.seconds}};
    if (std::isfinite(rec.u_error)) j["u_error"] = rec.u_error;
    if (!rec.diagnostics.empty()) j["diagnostics"] = rec.diagnostics;
    records.push_back(std::move(j));
  }
  const auto ratios = r.residual_ratios();
  json out = {{"converged", r.converged},
              {"newton_steps", r.records.empty() ? 0 : r.records.size() - 1},
              {"best_iter", r.best_iter},
              {"final_residual", r.records.empty() ? 0.0 : r.records[r.best_iter].residual},
              {"total_seconds", r.total_seconds},
              {"mean_inner_iterations", r.mean_inner_iterations()},
              {"residual_ratios", ratios},
              {"late_stage_ratio", finite_or_null(r.late_stage_ratio())},
              {"records", std::move(records)}};
  if (!ratios.empty()) out["max_ratio"] = *std::max_element(ratios.begin(), ratios.end());
  if (r.failure) out["failure"] = *r.failure;
  return out;
}

inline json to_json(const SyntheticRun& run) {
  json j = to_json(run.result.report);
  j["n"] = run.n;
  j["backend"] = to_string(run.backend);
  j["u_error"] = run.u_error;
  if (!run.probes.empty()) {
    json probes = json::array();
    for (const ProbeRecord& p : run.probes)
      probes.push_back({{"iter", p.iter}, {"radius", p.radius}, {"power_iterations", p.power_iterations},
                        {"converged", p.converged}});
    j["spectral_radius_probes"] = std::move(probes);
  }
  return j;
}

/// history.csv: one row per (run, Newton iterate).
inline const char* history_header =
    "backend,n,iter,residual,u_error,ftilde_mean,u_mean,theta_mean,min_eigenvalue,convex,"
    "inner_iterations,inner_restarts,inner_residual,inner_converged,seconds,spectral_radius,power_iterations";

inline void write_history(std::ostream& os, Backend backend, std::size_t n, const SolveReport& r,
                          const std::vector<ProbeRecord>& probes = {}) {
  os << std::setprecision(17);
  for (const IterationRecord& rec : r.records) {
    os << to_string(backend) << ',' << n << ',' << rec.iter << ',' << rec.residual << ',';
    if (std::isfinite(rec.u_error)) os << rec.u_error;
    os << ',' << rec.ftilde_mean << ',' << rec.u_mean << ',' << rec.theta_mean << ',' << rec.min_eigenvalue << ','
       << (rec.convex ? 1 : 0) << ',' << rec.inner_iterations << ',' << rec.inner_outer << ','
       << rec.inner_residual << ',' << (rec.inner_converged ? 1 : 0) << ',' << rec.seconds << ',';
    const auto p = std::find_if(probes.begin(), probes.end(), [&](const ProbeRecord& q) { return q.iter == rec.iter; });
    if (p != probes.end()) os << p->radius << ',' << p->power_iterations;
    else os << ',';
    os << '\n';
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------- options

struct SolverFlags {
  double tau = 1.0;
  double tol = 1e-8;
  std::size_t max_iter = 20;
  std::string backend = "fft";
  double inner_tol = 1e-4;
  std::size_t inner_max = 1000;
  std::size_t restart = 10;
  bool drop_first_order = false;

  NewtonConfig config(Backend b) const {
    NewtonConfig c;
    c.tau = tau;
    c.tol = tol;
    c.max_iter = max_iter;
    c.backend = b;
    c.inner.tol = inner_tol;
    c.inner.max_iter = inner_max;
    c.inner.gmres_restart = restart;
    c.drop_first_order = drop_first_order;
    c.validate();
    return c;
  }
};

inline void add_solver_flags(CLI::App& app, SolverFlags& f) {
  app.add_option("--tau", f.tau, "Damping: each Newton step is scaled by 1/tau (tau >= 1)")
      ->check(CLI::Range(1.0, std::numeric_limits<double>::max()))
      ->capture_default_str();
  app.add_option("--tol", f.tol, "Stop once ||f - ftilde_n||_l2 <= tol")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--max-iter", f.max_iter, "Maximum Newton steps")->capture_default_str();
  app.add_option("--inner-tol", f.inner_tol, "Relative residual tolerance of the inner Krylov solve")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--inner-max", f.inner_max, "Inner iteration cap (GMRES restarts or BiCG steps)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--restart", f.restart, "GMRES restart length m")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--drop-first-order", f.drop_first_order, "Solve with the b.grad(theta) term removed");
}

inline Backend parse_backend(const std::string& s) {
  if (s == "fft") return Backend::fft;
  if (s == "fd") return Backend::fd;
  throw CLI::ValidationError("--backend", "expected fft or fd, got '" + s + "'");
}

inline void check_grid_sizes(const std::vector<std::size_t>& ns, Backend backend) {
  for (std::size_t n : ns) {
    if (n < 8 || n % 2 != 0) throw CLI::ValidationError("--n", "grid sizes must be even and >= 8");
    if (backend == Backend::fft && !is_power_of_two(n))
      throw CLI::ValidationError("--n", "the fft backend needs power-of-two grid sizes");
  }
}

// ---------------------------------------------------------------- synthetic

struct SyntheticFlags {
  std::vector<std::size_t> ns{64};
  SolverFlags solver;
  SyntheticProblem problem;
  bool zero_potential = false;
  std::string out;
  bool single_thread = false;
  bool quiet = false;
};

inline int cmd_synthetic(const SyntheticFlags& f) {
  const Backend backend = parse_backend(f.solver.backend);
  check_grid_sizes(f.ns, backend);
  const NewtonConfig cfg = f.solver.config(backend);
  SyntheticProblem p = f.problem;
  if (f.zero_potential) p.k = std::numeric_limits<double>::infinity();

  std::vector<SyntheticRun> runs = run_all(f.ns.size(), f.single_thread,
                                           [&](std::size_t k) { return run_synthetic(p, f.ns[k], cfg); });

  const fs::path dir = output_dir(f.out);
  ensure_dir(dir);
  std::ostringstream csv;
  csv << history_header << '\n';
  json jruns = json::array();
  std::vector<std::pair<std::size_t, double>> errors;
  bool all_converged = true;
  for (const SyntheticRun& r : runs) {
    write_history(csv, r.backend, r.n, r.result.report);
    jruns.push_back(to_json(r));
    errors.emplace_back(r.n, r.u_error);
    all_converged = all_converged && r.result.report.converged;
  }
  json orders = json::array();
  std::ostringstream order_csv;
  order_csv << std::setprecision(17) << "n_coarse,n_fine,error_coarse,error_fine,order\n";
  std::sort(errors.begin(), errors.end());
  for (const OrderEntry& o : observed_orders(errors)) {
    orders.push_back({{"n_coarse", o.n_coarse}, {"n_fine", o.n_fine}, {"order", o.order}});
    const auto ec = std::find_if(errors.begin(), errors.end(), [&](auto& e) { return e.first == o.n_coarse; });
    const auto ef = std::find_if(errors.begin(), errors.end(), [&](auto& e) { return e.first == o.n_fine; });
    order_csv << o.n_coarse << ',' << o.n_fine << ',' << ec->second << ',' << ef->second << ',' << o.order << '\n';
  }
  json report = {{"command", "synthetic"},
                 {"config", to_json(cfg)},
                 {"problem", {{"k", finite_or_null(p.k)}, {"gamma", p.gamma}, {"alpha", p.alpha}, {"rho", p.rho}}},
                 {"runs", std::move(jruns)},
                 {"observed_order", std::move(orders)},
                 {"converged", all_converged}};
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "history.csv", csv.str());
  if (runs.size() > 1) write_text(dir / "order.csv", order_csv.str());

  if (!f.quiet) {
    for (const SyntheticRun& r : runs)
      std::cout << "n=" << r.n << " backend=" << to_string(r.backend)
                << " steps=" << r.result.report.records.size() - 1
                << " residual=" << r.result.report.records[r.result.report.best_iter].residual
                << " u_error=" << r.u_error << " inner=" << r.result.report.mean_inner_iterations()
                << (r.result.report.converged ? "" : " (not converged)") << '\n';
    for (const auto& o : report["observed_order"])
      std::cout << "order " << o["n_coarse"] << "->" << o["n_fine"] << ": " << o["order"] << '\n';
    std::cout << "wrote " << (dir / "report.json").string() << '\n';
  }
  return all_converged ? ok : not_converged;
}

// ---------------------------------------------------------------- register

struct RegisterFlags {
  std::string source, target;
  std::size_t n = 256;
  SolverFlags solver;
  double floor = 0.1;
  std::string sample = "nearest";
  bool frames = false;
  std::string format = "pgm";
  std::string out;
  bool quiet = false;
};

inline int cmd_register(const RegisterFlags& f) {
  const Backend backend = parse_backend(f.solver.backend);
  check_grid_sizes({f.n}, backend);
  if (!is_power_of_two(f.n)) throw CLI::ValidationError("--n", "image grids must be powers of two");
  NewtonConfig cfg = f.solver.config(backend);
  cfg.sample_mode = f.sample == "bilinear" ? SampleMode::bilinear : SampleMode::nearest;
  cfg.keep_history = f.frames;

  std::string warn_f, warn_g;
  const ScalarField fd = to_density(read_image(f.source), f.n, f.floor, &warn_f);
  const ScalarField gd = to_density(read_image(f.target), f.n, f.floor, &warn_g);
  for (const std::string* w : {&warn_f, &warn_g})
    if (!w->empty()) std::cerr << "warning: " << *w << '\n';

  const TransportResult res = register_densities(fd, gd, cfg);

  const fs::path dir = output_dir(f.out);
  ensure_dir(dir);
  const std::string ext = "." + f.format;
  write_image(dir / ("divergence" + ext), render(res.divergence));
  if (f.frames) {
    const WarpFrames wf = warp_sequence(res.report, fd, gd);
    ensure_dir(dir / "frames");
    write_image(dir / "frames" / ("source" + ext), wf.source);
    write_image(dir / "frames" / ("target" + ext), wf.target);
    for (std::size_t k = 0; k < wf.frames.size(); ++k) {
      std::ostringstream name;
      name << "iter_" << std::setw(3) << std::setfill('0') << k << ext;
      write_image(dir / "frames" / name.str(), wf.frames[k]);
    }
  }

  const auto vals = res.divergence.values();
  const auto mx = std::max_element(vals.begin(), vals.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  const std::size_t kmax = static_cast<std::size_t>(mx - vals.begin());
  std::ostringstream csv;
  csv << history_header << '\n';
  write_history(csv, backend, f.n, res.report);
  json report = {{"command", "register"},
                 {"source", f.source},
                 {"target", f.target},
                 {"n", f.n},
                 {"floor", f.floor},
                 {"config", to_json(cfg)},
                 {"distance", res.distance},
                 {"divergence",
                  {{"min", *std::min_element(vals.begin(), vals.end())},
                   {"max", *std::max_element(vals.begin(), vals.end())},
                   {"argmax_abs", {{"row", kmax / f.n}, {"col", kmax % f.n}}},
                   {"mean", mean(res.divergence)}}},
                 {"solve", to_json(res.report)},
                 {"converged", res.report.converged}};
  if (!warn_f.empty()) report["warnings"].push_back("source: " + warn_f);
  if (!warn_g.empty()) report["warnings"].push_back("target: " + warn_g);
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "history.csv", csv.str());
  if (!f.quiet)
    std::cout << "distance=" << std::setprecision(6) << res.distance
              << " steps=" << res.report.records.size() - 1
              << " residual=" << res.report.records[res.report.best_iter].residual
              << (res.report.converged ? "" : " (not converged)") << "\nwrote " << (dir / "report.json").string()
              << '\n';
  return res.report.converged ? ok : not_converged;
}

// ---------------------------------------------------------------- bench

struct BenchFlags {
  std::vector<std::size_t> ns{16, 32, 64, 128, 256};
  std::string backend = "both";
  SolverFlags solver;
  SyntheticProblem problem;
  bool probe = false;
  std::uint64_t seed = 1;
  double probe_tol = 5e-2;
  std::string out;
  bool single_thread = false;
  bool quiet = false;
};

inline int cmd_bench(const BenchFlags& f) {
  std::vector<Backend> backends;
  if (f.backend == "both") backends = {Backend::fft, Backend::fd};
  else backends = {parse_backend(f.backend)};
  for (Backend b : backends) check_grid_sizes(f.ns, b);

  struct Job {
    Backend backend;
    std::size_t n;
  };
  std::vector<Job> jobs;
  for (Backend b : backends)
    for (std::size_t n : f.ns) jobs.push_back({b, n});
  ProbeOptions probe;
  probe.enabled = f.probe;
  probe.seed = f.seed;
  probe.tol = f.probe_tol;

  std::vector<SyntheticRun> runs = run_all(jobs.size(), f.single_thread, [&](std::size_t k) {
    return run_synthetic(f.problem, jobs[k].n, f.solver.config(jobs[k].backend), probe);
  });

  const fs::path dir = output_dir(f.out);
  ensure_dir(dir);
  std::ostringstream csv, table;
  csv << history_header << '\n';
  table << std::setprecision(17) << "backend,n,newton_steps,mean_inner_iterations,total_seconds,late_stage_ratio,"
                                    "u_error,converged,probe_radius_min,probe_radius_max,probe_max_power_iterations\n";
  json jruns = json::array();
  bool all_converged = true;
  for (const SyntheticRun& r : runs) {
    const SolveReport& rep = r.result.report;
    write_history(csv, r.backend, r.n, rep, r.probes);
    jruns.push_back(to_json(r));
    all_converged = all_converged && rep.converged;
    table << to_string(r.backend) << ',' << r.n << ',' << rep.records.size() - 1 << ','
          << rep.mean_inner_iterations() << ',' << rep.total_seconds << ',' << rep.late_stage_ratio() << ','
          << r.u_error << ',' << (rep.converged ? 1 : 0) << ',';
    if (!r.probes.empty()) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      std::size_t its = 0;
      for (const ProbeRecord& p : r.probes) {
        lo = std::min(lo, p.radius);
        hi = std::max(hi, p.radius);
        its = std::max(its, p.power_iterations);
      }
      table << lo << ',' << hi << ',' << its;
    } else {
      table << ",,";
    }
    table << '\n';
    if (!f.quiet)
      std::cout << to_string(r.backend) << " n=" << r.n << " mean_inner=" << rep.mean_inner_iterations()
                << " seconds=" << rep.total_seconds << " ratio=" << rep.late_stage_ratio()
                << (rep.converged ? "" : " (not converged)") << '\n';
  }
  json report = {{"command", "bench"},
                 {"config", to_json(f.solver.config(backends.front()))},
                 {"problem", {{"k", f.problem.k}, {"gamma", f.problem.gamma}, {"alpha", f.problem.alpha}, {"rho", f.problem.rho}}},
                 {"probe", {{"enabled", f.probe}, {"seed", f.seed}, {"tol", f.probe_tol}}},
                 {"runs", std::move(jruns)},
                 {"converged", all_converged}};
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "history.csv", csv.str());
  write_text(dir / "bench.csv", table.str());
  if (!f.quiet) std::cout << "wrote " << (dir / "report.json").string() << '\n';
  return all_converged ? ok : not_converged;
}

// ---------------------------------------------------------------- phantom

struct PhantomFlags {
  std::size_t size = 256;
  std::vector<double> lesion;  ///< flattened (row, col, radius) triples
  double intensity = 0.35;
  std::string output;
};

inline int cmd_phantom(const PhantomFlags& f) {
  if (f.lesion.size() % 3 != 0) throw CLI::ValidationError("--lesion", "expects row,col,radius triples");
  std::vector<Lesion> lesions;
  for (std::size_t k = 0; k < f.lesion.size(); k += 3)
    lesions.push_back({f.lesion[k], f.lesion[k + 1], f.lesion[k + 2], f.intensity});
  write_image(f.output, make_phantom(f.size, lesions));
  return ok;
}

// ---------------------------------------------------------------- entry point

inline void add_problem_flags(CLI::App& app, SyntheticProblem& p) {
  app.add_option("--k", p.k, "Potential amplitude 1/k")->capture_default_str();
  app.add_option("--gamma", p.gamma, "Potential wavenumber")->capture_default_str();
  app.add_option("--alpha", p.alpha, "Target density modulation amplitude")->capture_default_str();
  app.add_option("--rho", p.rho, "Target density wavenumber")->capture_default_str();
}

/// Parses and runs one command; all errors become exit codes.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Periodic L2 optimal transport by damped Newton on the Monge-Ampere equation", "maot"};
  app.require_subcommand(1);

  SyntheticFlags syn;
  auto* s = app.add_subcommand("synthetic", "Trigonometric benchmark with a known potential");
  s->add_option("--n", syn.ns, "Grid size; repeat or comma-separate for a sweep")->delimiter(',')->capture_default_str();
  add_solver_flags(*s, syn.solver);
  s->add_option("--backend", syn.solver.backend, "Inner solver: fft or fd")
      ->check(CLI::IsMember({"fft", "fd"}))
      ->capture_default_str();
  add_problem_flags(*s, syn.problem);
  s->add_flag("--zero-potential", syn.zero_potential, "Use u_exact = 0 so that f = g");
  s->add_option("--out", syn.out, "Output directory (default $MAOT_OUT or ./maot-out)");
  s->add_flag("--single-thread", syn.single_thread, "Run sweep grids serially");
  s->add_flag("-q,--quiet", syn.quiet, "No console summary");

  RegisterFlags reg;
  reg.solver.tol = 1e-6;
  auto* r = app.add_subcommand("register", "Transport a source image density onto a target image density");
  r->add_option("--source", reg.source, "Source image (PGM or PNG)")->required()->check(CLI::ExistingFile);
  r->add_option("--target", reg.target, "Target image (PGM or PNG)")->required()->check(CLI::ExistingFile);
  r->add_option("--n", reg.n, "Grid size (power of two)")->capture_default_str();
  add_solver_flags(*r, reg.solver);
  r->add_option("--backend", reg.solver.backend, "Inner solver: fft or fd")
      ->check(CLI::IsMember({"fft", "fd"}))
      ->capture_default_str();
  r->add_option("--floor", reg.floor, "Minimum density value after normalization")
      ->check(CLI::Range(1e-6, 0.999))
      ->capture_default_str();
  r->add_option("--sample", reg.sample, "Composition sampling: nearest or bilinear")
      ->check(CLI::IsMember({"nearest", "bilinear"}))
      ->capture_default_str();
  r->add_flag("--frames", reg.frames, "Write the warp sequence to frames/");
  r->add_option("--format", reg.format, "Image output format: pgm or png")
      ->check(CLI::IsMember({"pgm", "png"}))
      ->capture_default_str();
  r->add_option("--out", reg.out, "Output directory (default $MAOT_OUT or ./maot-out)");
  r->add_flag("-q,--quiet", reg.quiet, "No console summary");

  BenchFlags bench;
  auto* b = app.add_subcommand("bench", "Inner iteration counts, timings and stability probes on the synthetic problem");
  b->add_option("--n", bench.ns, "Grid sizes of the sweep")->delimiter(',')->capture_default_str();
  b->add_option("--backend", bench.backend, "fft, fd or both")
      ->check(CLI::IsMember({"fft", "fd", "both"}))
      ->capture_default_str();
  add_solver_flags(*b, bench.solver);
  add_problem_flags(*b, bench.problem);
  b->add_flag("--probe-spectral-radius", bench.probe, "Power-iterate the inverse linearized operator at every step");
  b->add_option("--seed", bench.seed, "Seed of the power-iteration start vectors")->capture_default_str();
  b->add_option("--probe-tol", bench.probe_tol, "Relative change that ends the power iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  b->add_option("--out", bench.out, "Output directory (default $MAOT_OUT or ./maot-out)");
  b->add_flag("--single-thread", bench.single_thread, "Run the sweep serially");
  b->add_flag("-q,--quiet", bench.quiet, "No console summary");

  PhantomFlags ph;
  auto* p = app.add_subcommand("phantom", "Write a synthetic brain slice with optional disc lesions");
  p->add_option("--size", ph.size, "Image side in pixels")->check(CLI::Range(8, 8192))->capture_default_str();
  p->add_option("--lesion", ph.lesion, "Lesion as row,col,radius in [0,1] units; repeatable")->delimiter(',');
  p->add_option("--intensity", ph.intensity, "Lesion brightness")->capture_default_str();
  p->add_option("output", ph.output, "Output image (.pgm or .png)")->required();

  try {
    app.parse(argc, argv);
    if (s->parsed()) return cmd_synthetic(syn);
    if (r->parsed()) return cmd_register(reg);
    if (b->parsed()) return cmd_bench(bench);
    return cmd_phantom(ph);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage_error;
  }
}

}  // namespace maot::cli
