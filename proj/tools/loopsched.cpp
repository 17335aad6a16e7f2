#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "loopsched/eval.hpp"
#include "loopsched/runtime.hpp"
#include "loopsched/tuner.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw loopsched::IoError("cannot open " + path + " for writing");
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace loopsched;

  CLI::App app{"loopsched: self-scheduling policies with an offline BO tuner"};
  app.require_subcommand(1);

  // ---- suggest ----
  auto* suggest_cmd = app.add_subcommand("suggest", "propose the next parameter for a loop");
  std::string suggest_data;
  TunerOptions suggest_opts;
  bool suggest_locality = false;
  std::uint64_t suggest_seed = 0;
  int suggest_iters = 0, suggest_init = 0;
  suggest_cmd->add_option("--data", suggest_data, "loop dataset JSON file")->required();
  suggest_cmd->add_flag("--locality", suggest_locality, "use the locality-aware surrogate");
  auto* sseed = suggest_cmd->add_option("--seed", suggest_seed, "RNG seed override");
  auto* siters = suggest_cmd->add_option("--iters", suggest_iters, "BO iteration budget");
  auto* sinit = suggest_cmd->add_option("--init", suggest_init, "Sobol warm-up points");

  // ---- tune-sim ----
  auto* tune_cmd = app.add_subcommand("tune-sim", "closed-loop tuning against the simulator");
  std::string tune_workload, tune_trace, tune_out;
  bool tune_locality = false;
  std::uint64_t tune_seed = 0;
  int tune_iters = 0, tune_init = 0;
  double tune_noise = 0.0;
  tune_cmd->add_option("--workload", tune_workload, "workload spec JSON file")->required();
  tune_cmd->add_flag("--locality", tune_locality, "use the locality-aware surrogate");
  auto* tseed = tune_cmd->add_option("--seed", tune_seed, "RNG seed");
  auto* titers = tune_cmd->add_option("--iters", tune_iters, "BO iterations after warm-up");
  auto* tinit = tune_cmd->add_option("--init", tune_init, "Sobol warm-up points");
  tune_cmd->add_option("--noise", tune_noise, "observation noise std added to totals [s]");
  tune_cmd->add_option("--trace", tune_trace, "write the trace CSV here (default stdout)");
  tune_cmd->add_option("--out", tune_out, "write the report here (default stdout)");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "summarize a loop dataset");
  std::string report_data;
  bool report_csv = false;
  report_cmd->add_option("--data", report_data, "loop dataset JSON file")->required();
  report_cmd->add_flag("--csv", report_csv, "emit iter,x,theta,total_s,best_s rows");

  // ---- sim ----
  auto* sim_cmd = app.add_subcommand("sim", "simulate one schedule on a synthetic workload");
  std::string sim_workload, sim_schedule;
  std::int64_t sim_ell = 0;
  sim_cmd->add_option("--workload", sim_workload, "workload spec JSON file")->required();
  sim_cmd->add_option("--schedule", sim_schedule, "policy grammar, e.g. fss:0.5")->required();
  auto* sell = sim_cmd->add_option("--ell", sim_ell,
                                   "execution index; omit for the total over all L executions");

  // ---- regret ----
  auto* regret_cmd = app.add_subcommand("regret", "regret table from a cost matrix");
  std::string regret_in, regret_out;
  bool regret_as_csv = false;
  regret_cmd->add_option("--in", regret_in, "cost rows: scheduler,workload,cost (.csv or .json)")
      ->required();
  regret_cmd->add_option("--out", regret_out, "output path (default stdout)");
  regret_cmd->add_flag("--csv", regret_as_csv, "emit CSV instead of Markdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (suggest_cmd->parsed()) {
      if (suggest_locality) suggest_opts.locality = true;
      if (*sseed) suggest_opts.seed = suggest_seed;
      if (*siters) suggest_opts.n_iters = suggest_iters;
      if (*sinit) suggest_opts.n_init = suggest_init;
      suggest(suggest_data, suggest_opts, std::cout);
    } else if (tune_cmd->parsed()) {
      TunerOptions opts;
      if (tune_locality) opts.locality = true;
      if (*tseed) opts.seed = tune_seed;
      if (*titers) opts.n_iters = tune_iters;
      if (*tinit) opts.n_init = tune_init;
      auto spec = WorkloadSpec::from_json_file(tune_workload);
      auto result = tune_sim(spec, opts, tune_noise);
      write_output(tune_trace, result.trace_csv);
      std::ostringstream rep;
      rep << "best_x=" << detail::format_double(result.bo.best_x)
          << " best_theta=" << detail::format_double(result.bo.best_theta)
          << " tuned_total_s=" << detail::format_double(result.tuned_total) << "\n"
          << "optimal_theta=" << detail::format_double(result.optimal_theta)
          << " optimal_total_s=" << detail::format_double(result.optimal_total)
          << " regret_percent=" << detail::format_double(result.regret_percent) << "\n";
      write_output(tune_out, rep.str());
    } else if (report_cmd->parsed()) {
      report(report_data, report_csv, std::cout);
    } else if (sim_cmd->parsed()) {
      auto spec = WorkloadSpec::from_json_file(sim_workload);
      auto workload = generate_workload(spec);
      auto policy_spec = PolicySpec::parse(sim_schedule);
      if (policy_spec.kind == PolicyKind::BoFss)
        throw ConfigError("sim: bo_fss needs a runtime loop id; pass fss:<theta> instead");
      auto policy = ChunkPolicy::from_spec(policy_spec, workload.shape());
      if (*sell) {
        auto chunks = chunk_sequence(policy);
        std::cout << detail::format_double(simulate_makespan(workload, chunks, sim_ell)) << "\n";
      } else {
        std::cout << detail::format_double(simulate_total_time(workload, policy)) << "\n";
      }
    } else if (regret_cmd->parsed()) {
      auto matrix = CostMatrix::from_file(regret_in);
      write_output(regret_out, regret_as_csv ? render_regret_table_csv(matrix)
                                             : render_regret_table_markdown(matrix));
    }
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
