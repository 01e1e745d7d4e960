// Command-line front end: calibrate artifacts, execute runs and sweeps,
// recompute metrics from stored logs, and emit Pareto frontier data.
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
// DRIFTCTL_SEED overrides the stream seed for every subcommand; an explicit
// --seed beats the environment, which beats the config file.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "driftctl/config.hpp"
#include "driftctl/harness.hpp"
#include "driftctl/io.hpp"

namespace dh = driftctl::harness;
namespace dio = driftctl::io;
namespace dcfg = driftctl::config;
namespace ds = driftctl::simenv;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string artifacts_path;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_artifacts = true) {
  cmd->add_option("--config", opts.config_path, "key=value config file; defaults when absent");
  cmd->add_option("--seed", opts.seed, "override the stream seed");
  if (with_artifacts)
    cmd->add_option("--artifacts", opts.artifacts_path,
                    "calibration artifacts from a prior `calibrate`");
}

dh::RunConfig load_config(const CommonOpts& opts) {
  dh::RunConfig rc = dh::default_run_config();
  if (!opts.config_path.empty()) {
    auto in = dio::open_input(opts.config_path);
    rc = dcfg::parse_config(in);
  }
  if (const char* env = std::getenv("DRIFTCTL_SEED")) {
    rc.stream.seed = dcfg::detail::to_u64("DRIFTCTL_SEED", env);
  }
  if (opts.seed) rc.stream.seed = *opts.seed;
  return rc;
}

// Launch model and evidence engine always rebuild from the config; the
// artifacts file only carries the fitted belief model and gain table. Without
// an artifacts file those are fitted inline, which costs a few seconds.
dh::RuntimeArtifacts load_artifacts(const dh::RunConfig& rc, const CommonOpts& opts) {
  if (opts.artifacts_path.empty()) return dh::make_runtime_artifacts(rc, true);
  auto art = dh::make_runtime_artifacts(rc, false);
  auto in = dio::open_input(opts.artifacts_path);
  dio::read_artifacts(in, art);
  return art;
}

void write_metrics(const dh::MetricsReport& m, const std::string& path) {
  if (path.empty()) {
    dio::write_metrics_csv(std::cout, m);
  } else {
    auto out = dio::open_output(path);
    dio::write_metrics_csv(out, m);
  }
}

int cmd_calibrate(const CommonOpts& opts, const std::string& out_path) {
  auto rc = load_config(opts);
  auto art = dh::make_runtime_artifacts(rc, true);
  ds::GainCalibConfig cal;
  cal.retrain = rc.retrain;
  cal.tta_steps = rc.tta_steps;
  cal.tta_lr = rc.tta_lr;
  driftctl::Rng rng = driftctl::make_rng(rc.artifact_seed, 0x4741494eu);
  art.gains = ds::calibrate_gain_table(rc.stream, art.launch, cal, rng);
  auto out = dio::open_output(out_path);
  dio::write_artifacts(out, art);
  return 0;
}

int cmd_run(const CommonOpts& opts, const std::string& policy, const std::string& log_path,
            const std::string& csv_path, const std::string& metrics_path) {
  auto rc = load_config(opts);
  if (!policy.empty()) {
    auto p = dh::parse_policy(policy);
    if (!p) throw driftctl::ValidationError("unknown policy: " + policy);
    rc.policy = *p;
  }
  auto art = load_artifacts(rc, opts);
  auto res = dh::run_stream(rc, art);
  if (!log_path.empty()) {
    auto out = dio::open_output(log_path);
    dio::write_audit_log(out, res.log, res.records, rc.ctrl.window_len, rc.ctrl.tau);
  }
  if (!csv_path.empty()) {
    auto out = dio::open_output(csv_path);
    dio::write_step_csv(out, res.log);
  }
  write_metrics(res.metrics, metrics_path);
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis_name,
              const std::vector<double>& values, int replicas, const std::string& out_path) {
  auto rc = load_config(opts);
  auto axis = dh::parse_axis(axis_name);
  if (!axis) throw driftctl::ValidationError("unknown sweep axis: " + axis_name);
  auto art = load_artifacts(rc, opts);
  auto rows = dh::run_sweep(rc, art, *axis, values, replicas);
  if (out_path.empty()) {
    dio::write_sweep_csv(std::cout, rows);
  } else {
    auto out = dio::open_output(out_path);
    dio::write_sweep_csv(out, rows);
  }
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& out_path) {
  auto in = dio::open_input(log_path);
  auto lf = dio::read_audit_log(in);
  auto m = dh::compute_metrics(lf.log, lf.records, lf.window_len, lf.tau);
  write_metrics(m, out_path);
  return 0;
}

int cmd_pareto(const CommonOpts& opts, const std::vector<std::string>& policies,
               const std::string& out_path) {
  auto rc = load_config(opts);
  auto art = load_artifacts(rc, opts);
  std::vector<std::string> names;
  if (policies.empty())
    for (const char* n : dh::kPolicyNames) names.emplace_back(n);
  else
    names = policies;
  std::vector<dio::ParetoPoint> points;
  for (const auto& name : names) {
    auto p = dh::parse_policy(name);
    if (!p) throw driftctl::ValidationError("unknown policy: " + name);
    dh::RunConfig cell = rc;
    cell.policy = *p;
    auto res = dh::run_stream(cell, art);
    points.push_back({name, res.metrics.total_cost, res.metrics.violations});
  }
  if (out_path.empty()) {
    dio::write_pareto_csv(std::cout, points);
  } else {
    auto out = dio::open_output(out_path);
    dio::write_pareto_csv(out, points);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drift-aware deployment controller"};
  app.require_subcommand(1);

  CommonOpts cal_opts;
  std::string cal_out;
  auto* cal = app.add_subcommand("calibrate", "fit belief model and gain table, write artifacts");
  add_common(cal, cal_opts, false);
  cal->add_option("--out", cal_out, "artifacts output path")->required();

  CommonOpts run_opts;
  std::string run_policy, run_log, run_csv, run_metrics;
  auto* run = app.add_subcommand("run", "execute one policy on one stream");
  add_common(run, run_opts);
  run->add_option("--policy", run_policy, "policy name, overrides the config");
  run->add_option("--log", run_log, "audit log output path");
  run->add_option("--csv", run_csv, "per-step CSV output path");
  run->add_option("--metrics", run_metrics, "metrics output path; stdout when absent");

  CommonOpts sweep_opts;
  std::string sweep_axis, sweep_out;
  std::vector<double> sweep_values;
  int sweep_replicas = 5;
  auto* sweep = app.add_subcommand("sweep", "replicated runs over a one-axis grid");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", sweep_axis, "delay|budget|label_cost|monitor_noise|pattern")
      ->required();
  sweep->add_option("--values", sweep_values, "grid values")->required()->delimiter(',');
  sweep->add_option("--replicas", sweep_replicas, "replicas per grid cell");
  sweep->add_option("--out", sweep_out, "sweep table output path; stdout when absent");

  std::string rep_log, rep_out;
  auto* rep = app.add_subcommand("report", "recompute metrics from a stored audit log");
  rep->add_option("--log", rep_log, "audit log input path")->required();
  rep->add_option("--out", rep_out, "metrics output path; stdout when absent");

  CommonOpts par_opts;
  std::string par_out;
  std::vector<std::string> par_policies;
  auto* par = app.add_subcommand("pareto", "cost/violation frontier across policies");
  add_common(par, par_opts);
  par->add_option("--policies", par_policies, "policy names; all when absent")->delimiter(',');
  par->add_option("--out", par_out, "frontier output path; stdout when absent");

  try {
    app.parse(argc, argv);
    if (cal->parsed()) return cmd_calibrate(cal_opts, cal_out);
    if (run->parsed()) return cmd_run(run_opts, run_policy, run_log, run_csv, run_metrics);
    if (sweep->parsed())
      return cmd_sweep(sweep_opts, sweep_axis, sweep_values, sweep_replicas, sweep_out);
    if (rep->parsed()) return cmd_report(rep_log, rep_out);
    if (par->parsed()) return cmd_pareto(par_opts, par_policies, par_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const driftctl::IoError& e) {
    std::cerr << "driftctl: " << e.what() << '\n';
    return 2;
  } catch (const driftctl::ValidationError& e) {
    std::cerr << "driftctl: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "driftctl: " << e.what() << '\n';
    return 1;
  }
}
