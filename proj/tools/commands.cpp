#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ravit/ravit.hpp"
#include "ravit/run_config.hpp"
#include "ravit/training.hpp"

namespace ravit::cli {

namespace {

RunConfig load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  RunConfig c = load_run_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  return c;
}

// Writes to `path`, or to `fallback` when the path is empty.
void emit(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open " + path + " for writing");
  file << text;
  if (!file) throw FormatError("write failed: " + path);
}

RavitParams load_params(const Options& o, const RavitConfig& model) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  try {
    return from_checkpoint(ckpt, model);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

std::string fixed(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

}  // namespace

std::vector<cost::LayerRange> parse_ranges(const std::string& text) {
  std::vector<cost::LayerRange> ranges;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    try {
      std::size_t used = 0;
      cost::LayerRange r;
      if (colon == std::string::npos) {
        r.first = r.last = std::stoul(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } else {
        const std::string a = item.substr(0, colon), b = item.substr(colon + 1);
        r.first = std::stoul(a, &used);
        if (used != a.size()) throw std::invalid_argument(item);
        r.last = std::stoul(b, &used);
        if (used != b.size()) throw std::invalid_argument(item);
      }
      if (r.last < r.first) throw ConfigError("--ranges: empty range '" + item + "'");
      ranges.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("--ranges: cannot parse '" + item + "' (expected first:last)");
    }
  }
  if (ranges.empty()) throw ConfigError("--ranges: no ranges given");
  return ranges;
}

int cmd_cost(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  const cost::CostReport report = cost::report(c.model);
  out << cost::render(report, c.model);
  if (!o.out.empty()) emit(o.out, out, cost::render_csv(report));
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  const std::vector<cost::LayerRange> ranges = parse_ranges(o.ranges);
  if (ranges.size() != c.model.branches()) {
    throw ConfigError("--ranges: expected " + std::to_string(c.model.branches()) + " ranges, got " +
                      std::to_string(ranges.size()));
  }
  const std::vector<cost::SweepRow> rows = cost::sweep(c.model, ranges);
  if (!o.train) {
    emit(o.out, out, cost::render_sweep_csv(rows, c.model.branches()));
    return kOk;
  }

  const Dataset train_set = load_split(c, true);
  const Dataset test_set = load_split(c, false);
  std::ostringstream csv;
  for (std::size_t i = 0; i < c.model.branches(); ++i) csv << 'l' << i + 1 << ',';
  csv << "mflops,accuracy\n";
  for (const cost::SweepRow& row : rows) {
    RavitConfig cell = c.model;
    cell.layers = row.layers;
    for (std::size_t l : row.layers) csv << l << ',';
    csv << cost::format_fixed2(row.flops, cost::kMega) << ',';
    if (!cell.active_branches().empty()) {
      const TrainResult trained = train(cell, c.train, train_set);
      InferOptions io;
      io.disable_exits = true;
      csv << fixed("%.6f", evaluate(test_set, cell, trained.params, io).accuracy());
    }
    csv << '\n';
  }
  emit(o.out, out, csv.str());
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  if (o.out.empty()) throw ConfigError("--out is required");
  const Dataset dataset = load_split(c, true);
  TrainCallbacks callbacks;
  callbacks.on_checkpoint = [&](std::size_t epoch, const RavitParams& params) {
    save_checkpoint(o.out + ".epoch" + std::to_string(epoch), to_checkpoint(c.model, params));
  };
  const TrainResult result = train(c.model, c.train, dataset, callbacks);
  save_checkpoint(o.out, to_checkpoint(c.model, result.params));
  emit(o.log, out, render_train_log(result.log, c.model.branches()));
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  const RavitParams params = load_params(o, c.model);
  const Dataset dataset = load_split(c, false);
  InferOptions io;
  if (o.threshold) io.thresholds = std::vector<double>(c.model.branches() - 1, *o.threshold);
  io.disable_exits = o.no_exits;
  const EvalSummary s = evaluate(dataset, c.model, params, io);

  const std::vector<std::uint64_t> costs = cost::exit_flops(c.model);
  const double expected = cost::expected_flops(s.exit_counts, costs);
  std::ostringstream text;
  text << "samples " << s.samples << '\n';
  text << "correct " << s.correct << '\n';
  text << "accuracy " << fixed("%.6f", s.accuracy()) << '\n';
  text << "exit_counts";
  for (std::uint64_t n : s.exit_counts) text << ' ' << n;
  text << '\n';
  text << "expected_flops " << fixed("%.2f", expected) << '\n';
  text << "measured_flops " << fixed("%.2f", 2.0 * static_cast<double>(s.macs_spent) / static_cast<double>(s.samples))
       << '\n';
  text << "full_flops " << costs.back() << '\n';
  text << "flops_ratio " << fixed("%.6f", costs.back() ? expected / static_cast<double>(costs.back()) : 0.0) << '\n';
  emit(o.out, out, text.str());
  return kOk;
}

int cmd_exitdist(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  const RavitParams params = load_params(o, c.model);
  const Dataset dataset = load_split(c, false);
  const std::vector<double> thresholds = o.threshold ? std::vector<double>{*o.threshold} : c.sweep;
  const std::vector<ExitRow> rows = exit_distribution(dataset, c.model, params, thresholds);
  emit(o.out, out, render_exit_csv(rows, c.model.branches()));
  return kOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  if (o.out.empty()) throw ConfigError("--out is required");
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  const Dataset train_set = synth_dataset(synth_options(c, true));
  const Dataset test_set = synth_dataset(synth_options(c, false));
  for (const auto& [name, set] : {std::pair{"data_batch_1.bin", &train_set}, std::pair{"test_batch.bin", &test_set}}) {
    std::ofstream file(dir / name, std::ios::binary);
    if (!file) throw FormatError("cannot open " + (dir / name).string() + " for writing");
    write_cifar10(file, *set);
  }
  out << "train " << train_set.size() << " samples -> " << (dir / "data_batch_1.bin").string() << '\n';
  out << "test " << test_set.size() << " samples -> " << (dir / "test_batch.bin").string() << '\n';
  return kOk;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resolution-adaptive multi-branch vision transformer", "ravit"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  double threshold = 0.0;

  const std::map<std::string, std::pair<std::string, std::function<int(const Options&, std::ostream&)>>> commands{
      {"cost", {"Analytic MAC/FLOP report for a model", cmd_cost}},
      {"sweep", {"FLOPs over a grid of per-branch layer counts", cmd_sweep}},
      {"train", {"Train a model and write a checkpoint", cmd_train}},
      {"eval", {"Adaptive inference over the test split", cmd_eval}},
      {"exitdist", {"Exit distribution over a threshold sweep", cmd_exitdist}},
      {"synth", {"Write the synthetic dataset in CIFAR-10 binary layout", cmd_synth}},
  };
  std::map<std::string, CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, threshold_opts;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    subs[name] = sub;
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "Overrides train.seed"));
    if (name == "eval" || name == "exitdist") {
      sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
      threshold_opts.push_back(sub->add_option("--threshold", threshold, "Uniform exit threshold in nats"));
    }
    if (name == "eval") sub->add_flag("--no-exits", o.no_exits, "Run every sample to the last branch");
    if (name == "sweep") {
      sub->add_option("--ranges", o.ranges, "Per-branch inclusive layer ranges, e.g. 0:3,1:7")->required();
      sub->add_flag("--train", o.train, "Train and evaluate every cell");
    }
    if (name == "train") sub->add_option("--log", o.log, "Training log CSV (default stdout)");
    sub->add_option("--out", o.out, name == "cost" ? "Also write the report as CSV" : "Output path");
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) {
        out << sub->help();
        return kOk;
      }
    }
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  for (CLI::Option* opt : seed_opts)
    if (opt->count()) o.seed = seed;
  for (CLI::Option* opt : threshold_opts)
    if (opt->count()) o.threshold = threshold;

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    try {
      return commands.at(name).second(o, out);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << '\n';
      return kConfigError;
    } catch (const FormatError& e) {
      err << "data error: " << e.what() << '\n';
      return kDataError;
    } catch (const NumericError& e) {
      err << "numeric divergence: " << e.what() << '\n';
      return kNumericError;
    } catch (const std::filesystem::filesystem_error& e) {
      err << "data error: " << e.what() << '\n';
      return kDataError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kFailure;
    }
  }
  return kFailure;
}

}  // namespace ravit::cli
