#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "utterclust/config.hpp"
#include "utterclust/pipeline.hpp"

namespace {

using namespace utterclust;

struct CommonArgs {
  std::string config;
  std::string input;
  std::string output;
  std::string report;
  std::optional<std::uint64_t> seed;
  bool keep_intermediate = false;
  std::map<std::string, std::string> overrides;
};

std::string flag_name(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("input", args.input, "Input file (same as --input.path)");
  sub->add_option("--config", args.config, "INI config file")->check(CLI::ExistingFile);
  sub->add_option("-o,--output", args.output, "Output file (default: stdout)");
  sub->add_option("--report", args.report, "Report format")->check(CLI::IsMember({"json", "markdown"}));
  sub->add_option("--seed", args.seed, "Seed for clustering order and representative sampling");
  sub->add_flag("--keep-intermediate", args.keep_intermediate, "Write each stage's output to output.work_dir");
  auto* group = sub->add_option_group("config keys", "Any config key, as --section.key");
  for (const auto& key : option_keys()) {
    if (key == "input.path") continue;
    group->add_option(flag_name(key), args.overrides[key]);
  }
}

PipelineConfig resolve(CLI::App* sub, const CommonArgs& args) {
  PipelineConfig cfg;
  if (!args.config.empty()) cfg = load_config(args.config);
  for (const auto& [key, value] : args.overrides)
    if (sub->count(flag_name(key)) > 0) set_option(cfg, key, value);
  if (!args.input.empty()) cfg.input_path = args.input;
  if (!args.output.empty()) cfg.output.path = args.output;
  if (!args.report.empty()) cfg.output.format = parse_report_format(args.report);
  if (args.seed) {
    cfg.rbc.seed = *args.seed;
    cfg.representatives.seed = *args.seed;
  }
  if (args.keep_intermediate) cfg.output.keep_intermediate = true;
  return cfg;
}

template <class F>
void emit(const PipelineConfig& cfg, F&& write) {
  if (cfg.output.path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(cfg.output.path, std::ios::binary);
  if (!out) throw io_error("cannot write output file: " + cfg.output.path);
  write(out);
}

int exit_code(error_kind kind) {
  switch (kind) {
    case error_kind::usage: return 2;
    case error_kind::data: return 3;
    case error_kind::transport: return 4;
    case error_kind::protocol: return 5;
    case error_kind::io: return 6;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster, merge, represent and name short user utterances"};
  app.require_subcommand(1);

  CommonArgs run_args, cluster_args, eval_args, sweep_args, markers_args;
  auto* run = app.add_subcommand("run", "Full pipeline: ingest, embed, cluster, merge, represent, name, report");
  auto* cluster = app.add_subcommand("cluster", "Stop after the merge step and write the clustering");
  auto* eval = app.add_subcommand("eval", "Cluster a labeled dataset and report ARI, silhouette and clustered ratio");
  auto* sweep = app.add_subcommand("sweep", "Evaluate a grid of min_sim values (sweep.min_sims)");
  auto* markers = app.add_subcommand("markers", "Domain markers of the input against the background table");
  add_common(run, run_args);
  add_common(cluster, cluster_args);
  add_common(eval, eval_args);
  add_common(sweep, sweep_args);
  add_common(markers, markers_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto cfg = resolve(run, run_args);
      auto res = run_pipeline(cfg);
      emit(cfg, [&](std::ostream& out) { write_report(res, cfg, out); });
    } else if (cluster->parsed()) {
      auto cfg = resolve(cluster, cluster_args);
      auto res = run_stages(cfg, read_input(cfg), true);
      if (!cfg.output.centroids.empty()) write_centroids(cfg.output.centroids, res.clustering);
      emit(cfg, [&](std::ostream& out) { out << to_json(res.clustering).dump(2) << '\n'; });
    } else if (eval->parsed()) {
      auto cfg = resolve(eval, eval_args);
      auto result = run_eval(cfg);
      emit(cfg, [&](std::ostream& out) { out << to_json(result).dump(2) << '\n'; });
    } else if (sweep->parsed()) {
      auto cfg = resolve(sweep, sweep_args);
      auto runs = run_sweep(cfg);
      emit(cfg, [&](std::ostream& out) { out << sweep_json(runs).dump(2) << '\n'; });
    } else if (markers->parsed()) {
      auto cfg = resolve(markers, markers_args);
      auto ms = run_markers(cfg);
      emit(cfg, [&](std::ostream& out) { out << to_json(ms).dump(2) << '\n'; });
    }
  } catch (const error& e) {
    std::cerr << "utterclust: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "utterclust: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
