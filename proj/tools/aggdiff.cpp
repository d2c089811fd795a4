// aggdiff command-line front end.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "aggdiff/acceptance.hpp"
#include "aggdiff/config.hpp"
#include "aggdiff/evolution.hpp"
#include "aggdiff/io.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/rearrangement.hpp"
#include "aggdiff/steady_state.hpp"
#include "aggdiff/steiner.hpp"

#ifndef AGGDIFF_VERSION
#define AGGDIFF_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace aggdiff;

namespace {

constexpr int kOk = 0, kUsage = 1, kAssertion = 2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Kernel kernel_by_name(const std::string& name, int custom_dimension) {
  if (name == "log2d") return log2d();
  if (name == "newtonian3d") return newtonian(3);
  if (name.rfind("custom:", 0) == 0) return load_table_kernel(name.substr(7), custom_dimension);
  throw ConfigError("unknown kernel '" + name + "' (expected log2d, newtonian3d or custom:<path>)");
}

void finish_manifest(RunManifest& m, Clock::time_point t0, const std::vector<std::string>& outputs) {
  m.version = AGGDIFF_VERSION;
  for (const auto& p : outputs) m.add_output(p);
  m.wall_seconds = seconds_since(t0);
}

// --- kernel check --------------------------------------------------------

struct KernelArgs {
  std::string kernel = "log2d";
  int dimension = 2;
};

int kernel_check(const KernelArgs& a) {
  const auto k = kernel_by_name(a.kernel, a.dimension);
  const auto rep = audit_assumptions(k);
  std::printf("kernel %s, d = %d, %zu probes in [%g, %g]\n", k.name.c_str(), rep.dimension, rep.probe_count,
              rep.probe_min, rep.probe_max);
  for (int i = 1; i <= 6; ++i) {
    const auto& c = rep[i];
    std::printf("K%d  %-13s", i, c.satisfied ? "satisfied" : "not satisfied");
    if (c.witness_radius) std::printf("  witness r = %g", *c.witness_radius);
    if (c.constant != 0.0) std::printf("  constant = %g", c.constant);
    if (!c.note.empty()) std::printf("  (%s)", c.note.c_str());
    std::printf("\n");
  }
  return kOk;
}

// --- rearrange / symmetrize ------------------------------------------------

struct RearrangeArgs {
  std::string input, out;
};

int rearrange(const RearrangeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest m;
  m.command = "rearrange";
  m.add_input(a.input);
  const auto rho = load_density(a.input);
  save_density(a.out, schwarz_rearrangement_grid(rho));
  finish_manifest(m, t0, {a.out});
  m.save(a.out + ".manifest");
  std::printf("wrote %s (mass %.12g)\n", a.out.c_str(), rho.mass());
  return kOk;
}

struct SymmetrizeArgs {
  std::string input, out, mode = "continuous", direction = "x";
  double tau = 0.0, h0 = 0.0, hyperplane = 0.0, m = 2.0;
  std::size_t levels = 256;
};

int symmetrize(const SymmetrizeArgs& a) {
  const auto t0 = Clock::now();
  const auto rho = load_density(a.input);
  SteinerConfig cfg;
  cfg.levels = a.levels;
  cfg.axis = a.direction == "y" ? Axis::y : Axis::x;
  cfg.hyperplane = a.hyperplane;
  cfg.m = a.m;
  cfg.h0 = a.h0 > 0.0 ? a.h0 : 1e-2 * rho.max();
  const auto out = a.mode == "modified" ? modified_steiner_advance(rho, a.tau, cfg) : steiner_advance(rho, a.tau, cfg);
  save_density(a.out, out);
  RunManifest m;
  m.command = "symmetrize";
  m.config = {{"tau", detail::format_double(a.tau)},
              {"mode", a.mode},
              {"levels", std::to_string(a.levels)},
              {"h0", detail::format_double(cfg.h0)},
              {"direction", a.direction},
              {"hyperplane", detail::format_double(a.hyperplane)},
              {"m", detail::format_double(a.m)}};
  m.add_input(a.input);
  finish_manifest(m, t0, {a.out});
  m.save(a.out + ".manifest");
  std::printf("wrote %s (mass %.12g -> %.12g)\n", a.out.c_str(), rho.mass(), out.mass());
  return kOk;
}

// --- steady ----------------------------------------------------------------

struct SteadyArgs {
  double m = 2.0, mass = 1.0, rmax = 8.0;
  std::string kernel = "log2d", out;
  std::size_t n = 4096;
  int dimension = 2;
};

int steady(const SteadyArgs& a) {
  const auto t0 = Clock::now();
  const auto k = kernel_by_name(a.kernel, a.dimension);
  const auto p = solve_radial_steady(a.m, a.mass, k, {a.n, a.rmax});
  {
    auto os = detail::open_out(a.out);
    write_radial_csv(os, p.rho);
    if (!os) throw FormatError("write to '" + a.out + "' failed");
  }
  RunManifest man;
  man.command = "steady";
  man.config = {{"m", detail::format_double(a.m)},
                {"mass", detail::format_double(a.mass)},
                {"kernel", a.kernel},
                {"grid.n", std::to_string(a.n)},
                {"grid.rmax", detail::format_double(a.rmax)}};
  finish_manifest(man, t0, {a.out});
  man.save(a.out + ".manifest");
  std::printf("support radius %.10g\nmultiplier %.10g\nmass %.12g\nmax %.10g\niterations %d\nwrote %s\n",
              p.support_radius, p.multiplier, p.mass, p.rho.max(), p.iterations, a.out.c_str());
  return kOk;
}

// --- evolve ----------------------------------------------------------------

struct EvolveArgs {
  std::string config, out_dir = "evolve_out", format = "csv";
};

template <class Density>
void save_snapshot(const std::string& path, const Density& rho) {
  if constexpr (std::is_same_v<Density, RadialDensity>) {
    auto os = detail::open_out(path);
    write_radial_csv(os, rho);
  } else {
    save_density(path, rho);
  }
}

int evolve(const EvolveArgs& a) {
  const auto t0 = Clock::now();
  const auto flat = load_flat_config(a.config);
  const auto cfg = solver_config_from(flat);
  fs::create_directories(a.out_dir);
  const std::string diag_path = (fs::path(a.out_dir) / "diagnostics.csv").string();

  RunManifest m;
  m.command = "evolve";
  m.config = to_flat_config(cfg);
  m.add_input(a.config);

  std::ofstream diag = detail::open_out(diag_path);
  diag << kDiagnosticsHeader << '\n';
  const RunObserver stream = [&](const DiagnosticsRecord& r) {
    diag << to_csv_row(r) << '\n';
    return true;
  };

  std::vector<std::string> outputs;
  auto write_snapshots = [&](const auto& snaps, const char* ext) {
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshot_%04zu%s", k, ext);
      const auto path = (fs::path(a.out_dir) / name).string();
      save_snapshot(path, snaps[k].second);
      outputs.push_back(path);
    }
  };

  try {
    if (cfg.grid.radial) {
      const auto res = run_radial(cfg, stream);
      diag.close();
      outputs.push_back(diag_path);
      write_snapshots(res.snapshots, ".csv");
    } else {
      Density2D initial = Density2D::centered(cfg.grid.n, cfg.grid.side);
      if (cfg.initial.kind == InitialKind::file) {
        m.add_input(cfg.initial.path);
        initial = load_density(cfg.initial.path);
      } else {
        initial = make_initial(cfg);
      }
      const auto res = run(cfg, std::move(initial), stream);
      diag.close();
      outputs.push_back(diag_path);
      write_snapshots(res.snapshots, a.format == "bin" ? ".bin" : ".csv");
    }
  } catch (const AssertionFailure& e) {
    diag.close();
    const std::string path = (fs::path(a.out_dir) / "violation.csv").string();
    auto os = detail::open_out(path);
    os << e.record() << '\n';
    std::fprintf(stderr, "assertion failed: %s; record written to %s\n", e.what(), path.c_str());
    return kAssertion;
  }
  finish_manifest(m, t0, outputs);
  const auto manifest_path = (fs::path(a.out_dir) / "manifest.txt").string();
  m.save(manifest_path);
  std::printf("wrote %s, %zu snapshots and %s\n", diag_path.c_str(), outputs.size() - 1, manifest_path.c_str());
  return kOk;
}

// --- accept ----------------------------------------------------------------

int accept(const std::string& suite) {
  const auto list = acceptance::select(suite);
  const auto results = acceptance::run_all(list, acceptance::thread_cap(),
                                           [](const acceptance::Outcome& o) {
                                             std::printf("%s\n", acceptance::format_line(o).c_str());
                                             std::fflush(stdout);
                                           });
  std::size_t passed = 0;
  for (const auto& o : results) passed += o.pass ? 1 : 0;
  std::printf("%zu of %zu criteria passed\n", passed, results.size());
  return passed == results.size() ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregation-diffusion toolkit: kernels, rearrangements, Steiner flow, steady states and evolution"};
  app.set_version_flag("--version", AGGDIFF_VERSION);
  app.require_subcommand(1);

  KernelArgs ka;
  auto* kernel = app.add_subcommand("kernel", "Kernel utilities");
  kernel->require_subcommand(1);
  auto* check = kernel->add_subcommand("check", "Audit the kernel hypotheses K1..K6 on a probe grid");
  check->add_option("--kernel", ka.kernel, "log2d, newtonian3d or custom:<table path>")->capture_default_str();
  check->add_option("--dimension", ka.dimension, "Dimension of a custom table kernel")->capture_default_str();

  RearrangeArgs ra;
  auto* rearr = app.add_subcommand("rearrange", "Schwarz rearrangement of a density onto the same grid");
  rearr->add_option("--input", ra.input, "Density file")->required();
  rearr->add_option("--out", ra.out, "Output density file (.bin/.agd for binary)")->required();

  SymmetrizeArgs sa;
  auto* sym = app.add_subcommand("symmetrize", "Continuous or modified Steiner symmetrization");
  sym->add_option("--input", sa.input, "Density file")->required();
  sym->add_option("--out", sa.out, "Output density file")->required();
  sym->add_option("--tau", sa.tau, "Flow time")->required()->check(CLI::NonNegativeNumber);
  sym->add_option("--mode", sa.mode)->check(CLI::IsMember({"continuous", "modified"}))->capture_default_str();
  sym->add_option("--levels", sa.levels, "Level count")->check(CLI::PositiveNumber)->capture_default_str();
  sym->add_option("--h0", sa.h0, "Slow-down threshold of the modified flow (default 1e-2 max)");
  sym->add_option("--m", sa.m, "Exponent of the modified flow's slow-down")->capture_default_str();
  sym->add_option("--direction", sa.direction)->check(CLI::IsMember({"x", "y"}))->capture_default_str();
  sym->add_option("--hyperplane", sa.hyperplane, "Position of the symmetry line")->capture_default_str();

  SteadyArgs st;
  auto* stc = app.add_subcommand("steady", "Radial steady state of given mass");
  stc->add_option("--m", st.m, "Diffusion exponent")->capture_default_str();
  stc->add_option("--mass", st.mass)->capture_default_str();
  stc->add_option("--kernel", st.kernel, "log2d, newtonian3d or custom:<table path>")->capture_default_str();
  stc->add_option("--dimension", st.dimension, "Dimension of a custom table kernel")->capture_default_str();
  stc->add_option("--grid-n", st.n, "Radial cells")->capture_default_str();
  stc->add_option("--rmax", st.rmax, "Radial extent")->capture_default_str();
  stc->add_option("--out", st.out, "Profile file")->required();

  EvolveArgs ea;
  auto* evo = app.add_subcommand("evolve", "Integrate a configuration, writing diagnostics and snapshots");
  evo->add_option("--config", ea.config, "Flat key=value configuration")->required();
  evo->add_option("--out-dir", ea.out_dir, "Output directory")->capture_default_str();
  evo->add_option("--format", ea.format, "Snapshot format")->check(CLI::IsMember({"csv", "bin"}))->capture_default_str();

  std::string suite = "all";
  auto* acc = app.add_subcommand("accept", "Run acceptance criteria and print a pass/fail table");
  acc->add_option("--suite", suite, "all, none, steiner, rearrangement, steady, evolution, kernel or a criterion number")
      ->capture_default_str();

  if (argc <= 1) {
    std::fprintf(stderr, "%s", app.help().c_str());
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::printf("%s", app.help("", CLI::AppFormatMode::All).c_str());
    return kOk;
  } catch (const CLI::CallForVersion&) {
    std::printf("%s\n", AGGDIFF_VERSION);
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return kUsage;
  }

  try {
    if (*check) return kernel_check(ka);
    if (*rearr) return rearrange(ra);
    if (*sym) return symmetrize(sa);
    if (*stc) return steady(st);
    if (*evo) return evolve(ea);
    if (*acc) return accept(suite);
  } catch (const AssertionFailure& e) {
    std::fprintf(stderr, "assertion failed: %s\n%s\n", e.what(), e.record().c_str());
    return kAssertion;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
