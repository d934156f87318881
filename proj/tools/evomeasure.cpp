// evomeasure: simulate | verify | dirac-limit | mutation-limit
//
// Exit codes: 0 success, 1 verification failure, 2 config error, 3 numeric failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "evomeasure/evomeasure.hpp"

namespace em = evomeasure;
namespace ex = evomeasure::experiments;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::string> solver;
  std::optional<double> dt;
  std::optional<double> T;
};

em::RunConfig load(const Options& o) {
  auto j = em::read_json_file(o.config);
  if (o.solver) j["solver"] = *o.solver;
  if (o.dt) j["dt"] = *o.dt;
  if (o.T) j["T"] = *o.T;
  if (!o.out.empty()) j["out"] = o.out;
  return em::run_config_from_json(j);
}

int cmd_simulate(const em::RunConfig& cfg) {
  const auto res = ex::simulate(cfg, cfg.out_dir);
  const auto& t = res.trajectory;
  std::printf("simulate: %s, %zu nodes, mass %.6g -> %.6g, wrote %s\n", t.solver.c_str(), t.size(),
              t.masses.front(), t.masses.back(), cfg.out_dir.c_str());
  if (res.metadata.contains("cross_check"))
    std::printf("  picard vs rk4 sup-TV %.3e\n", res.metadata["cross_check"]["sup_tv"].get<double>());
  return 0;
}

int cmd_verify(const em::RunConfig& cfg) {
  const auto dir = ex::prepare_out_dir(cfg.out_dir);
  const auto rep = ex::verify(cfg);
  for (const auto& c : rep.checks)
    std::printf("%-20s %s  value=%.6g tol=%.6g\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.value, c.tolerance);
  ex::write_json(dir / "report.json", rep.to_json());
  for (const auto& c : rep.checks)
    if (!c.pass) std::printf("witness[%s]: %s\n", c.name.c_str(), c.witness.dump().c_str());
  return rep.pass() ? 0 : 1;
}

int cmd_dirac_limit(const em::RunConfig& cfg) {
  const auto dir = ex::prepare_out_dir(cfg.out_dir);
  const auto rep = ex::dirac_limit(cfg.problem, cfg.T, cfg.flow_controls(), cfg.concentration_threshold, cfg.bl_stride);
  ex::write_text(dir / "concentration.csv", ex::dirac_limit_csv(rep));
  auto j = rep.to_json(*cfg.problem.space);
  ex::write_json(dir / "dirac_limit.json", j);
  if (rep.tie) {
    std::printf("dirac-limit: continuum/tie of fittest classes; per-cell shares written\n");
    return 0;
  }
  std::printf("dirac-limit: fittest cell %zu (q=%.6g), equilibrium mass %.6g, final fraction %.4f\n", rep.fittest,
              rep.fittest_point, rep.equilibrium, rep.fraction.back());
  if (rep.hit_time)
    std::printf("  fraction > %.2f at t=%.6g, mass %.6g (rel. err %.3e)\n", rep.threshold, *rep.hit_time,
                rep.mass_at_hit, rep.mass_error());
  else
    std::printf("  fraction stayed below %.2f up to T=%.6g\n", rep.threshold, cfg.T);
  return rep.concentrated() ? 0 : 1;
}

int cmd_mutation_limit(const em::RunConfig& cfg) {
  const auto dir = ex::prepare_out_dir(cfg.out_dir);
  const auto sigmas = cfg.sigmas.empty() ? std::vector<double>{0.4, 0.2, 0.1, 0.05} : cfg.sigmas;
  const auto rep = ex::mutation_limit(cfg.problem, sigmas, cfg.T, cfg.flow_controls());
  ex::write_text(dir / "mutation_limit.csv", ex::mutation_limit_csv(rep));
  ex::write_json(dir / "mutation_limit.json", rep.to_json());
  for (std::size_t s = 0; s < sigmas.size(); ++s)
    std::printf("sigma=%-8.4g bl_to_dirac(T)=%.6e\n", sigmas[s], rep.final_distance[s]);
  std::printf("mutation-limit: %s\n", rep.monotone_within_slack() ? "nonincreasing" : "NOT monotone");
  return rep.monotone_within_slack() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-mutation dynamics on finite measures"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--solver", opt.solver, "rk4 | picard");
    sub->add_option("--dt", opt.dt, "time step");
    sub->add_option("--T", opt.T, "final time");
  };
  auto* sim = app.add_subcommand("simulate", "integrate and write trajectory files");
  auto* ver = app.add_subcommand("verify", "run the invariant suite");
  auto* dl = app.add_subcommand("dirac-limit", "concentration on the fittest class");
  auto* ml = app.add_subcommand("mutation-limit", "mutation -> selection continuity sweep");
  for (auto* s : {sim, ver, dl, ml}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto cfg = load(opt);
    if (sim->parsed()) return cmd_simulate(cfg);
    if (ver->parsed()) return cmd_verify(cfg);
    if (dl->parsed()) return cmd_dirac_limit(cfg);
    return cmd_mutation_limit(cfg);
  } catch (const em::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const em::UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const em::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
