#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "ravit/checkpoint.hpp"
#include "ravit/cost.hpp"
#include "ravit/run_config.hpp"
#include "ravit/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ravit;

namespace {

const fs::path kConfigs = fs::path(RAVIT_SOURCE_DIR) / "configs";

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Cli {
  int code;
  std::string out;
  std::string err;
};

Cli invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string report_value(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ' ', 0) == 0) return line.substr(key.size() + 1);
  return "";
}

// Runs `cost` on each config and compares the total line and the MAC count.
Outcome cost_rows(const std::vector<std::tuple<std::string, std::string, std::uint64_t>>& rows) {
  Outcome o;
  for (const auto& [file, expected, flops] : rows) {
    const Cli r = invoke({"cost", "--config", (kConfigs / file).string()});
    const std::string total = report_value(r.out, "total");
    const std::string macs = report_value(r.out, "MAC_tot");
    const bool ok = r.code == 0 && total == expected && macs == std::to_string(flops / 2);
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += ", ";
    o.detail += file + " " + (total.empty() ? r.err : total) + (ok ? "" : " (expected " + expected + ")");
  }
  return o;
}

Outcome cifar_table() {
  return cost_rows({{"cifar_vit3.json", "83.16 MFLOPs", 83'166'720},
                    {"cifar_vit4.json", "110.88 MFLOPs", 110'888'960},
                    {"cifar_vit5.json", "138.61 MFLOPs", 138'611'200},
                    {"cifar_ravit_1_3.json", "89.99 MFLOPs", 89'999'360}});
}

Outcome imagenet_table() {
  return cost_rows({{"imagenet_vit8.json", "23.26 GFLOPs", 23'263'272'960},
                    {"imagenet_vit10.json", "29.07 GFLOPs", 29'079'091'200},
                    {"imagenet_vit12.json", "34.89 GFLOPs", 34'894'909'440},
                    {"imagenet_ravit_1_1_8.json", "24.43 GFLOPs", 24'437'913'600},
                    {"imagenet_ravit_1_1_10.json", "30.25 GFLOPs", 30'253'731'840}});
}

// Sequence lengths 17, 65, 257 come from 16, 32, 64 pixel inputs at patch 4.
Outcome formula_vs_instrumentation() {
  Outcome o;
  Rng rng(11);
  std::size_t checked = 0;
  for (std::size_t side : {16, 32, 64}) {
    for (std::size_t d : {32, 128}) {
      for (std::size_t layers : {1, 3}) {
        RavitConfig c = RavitConfig::pyramid(side, {layers});
        c.embed_dim = d;
        c.hidden_dim = 4 * d;
        const RavitParams p = RavitParams::init(c, rng);
        const ExitRecord r = infer(oracle::random_image(3, side, rng), c, p);
        const std::uint64_t l = (side / 4) * (side / 4) + 1;
        const std::uint64_t formula = layers * cost::mac_layer(l, d);
        if (r.macs_spent != formula) {
          o.pass = false;
          o.detail += "L=" + std::to_string(l) + " D=" + std::to_string(d) + " counted " +
                      std::to_string(r.macs_spent) + " vs " + std::to_string(formula) + "; ";
        }
        ++checked;
      }
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " (L, D, layers) cases equal";
  return o;
}

Outcome gradient_check() {
  const RunConfig run = load_run_config(kConfigs / "desk_2branch.json");
  RavitConfig c = run.model;
  c.loss_weights = {0.4, 0.6};
  Rng rng(21);
  RavitParams p = RavitParams::init(c, rng);
  const Dataset d = load_split(run, true);
  const Tensor image = d.sample(0).image;
  const std::size_t label = d.labels[0];
  const auto loss = [&] {
    ad::Tape tape;
    return multi_exit_loss(tape, image, label, c, p).value()(0, 0);
  };

  ad::Tape tape;
  const ad::Gradients g = tape.backward(multi_exit_loss(tape, image, label, c, p));
  const std::vector<Tensor*> tensors = p.tensors();
  Rng pick(22);
  double worst = 0.0;
  const int samples = 256;
  for (int s = 0; s < samples; ++s) {
    Tensor& t = *tensors[pick.below(tensors.size())];
    const std::size_t j = pick.below(t.size());
    const double analytic = g.of(t).data()[j];
    const double numeric = oracle::central_difference(t.data()[j], loss, 1e-5);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error %.3g over %d parameters", worst, samples);
  return {worst < 1e-4, buf};
}

struct DeskModel {
  RunConfig run;
  RavitParams params;
  Dataset test;
};

DeskModel train_desk() {
  DeskModel m{load_run_config(kConfigs / "desk_2branch.json"), {}, {}};
  m.params = train(m.run.model, m.run.train, load_split(m.run, true)).params;
  m.test = load_split(m.run, false);
  return m;
}

Outcome early_exit_properties(const DeskModel& m) {
  Outcome o;
  const std::vector<ExitRow> rows = exit_distribution(m.test, m.run.model, m.params, m.run.sweep);
  const auto fail = [&](const std::string& why) {
    o.pass = false;
    o.detail += why + "; ";
  };
  if (rows.size() != 10 || rows.front().threshold != 0.0 || std::abs(rows.back().threshold - std::log(10.0)) > 1e-12)
    fail("sweep is not 10 points over [0, ln 10]");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::uint64_t total = 0;
    for (std::uint64_t n : rows[i].exit_counts) total += n;
    if (total != m.test.size()) fail("counts do not sum at threshold " + std::to_string(rows[i].threshold));
    if (i > 0 && rows[i].exit_counts[0] < rows[i - 1].exit_counts[0]) fail("branch-1 fraction decreased");
    if (i > 0 && rows[i].expected_flops > rows[i - 1].expected_flops) fail("expected FLOPs increased");
  }
  InferOptions disabled;
  disabled.disable_exits = true;
  const double full = evaluate(m.test, m.run.model, m.params, disabled).accuracy();
  InferOptions zero;
  zero.thresholds = std::vector<double>{0.0};
  const EvalSummary at_zero = evaluate(m.test, m.run.model, m.params, zero);
  if (rows.front().accuracy != full || at_zero.accuracy() != full) fail("threshold-0 accuracy differs");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu samples, branch-1 exits %llu..%llu, exits-disabled accuracy %.4f",
                m.test.size(), static_cast<unsigned long long>(rows.front().exit_counts[0]),
                static_cast<unsigned long long>(rows.back().exit_counts[0]), full);
  o.detail += buf;
  return o;
}

Outcome adaptive_advantage(const DeskModel& m) {
  InferOptions disabled;
  disabled.disable_exits = true;
  const double full = evaluate(m.test, m.run.model, m.params, disabled).accuracy();
  const double budget = 0.8 * static_cast<double>(cost::exit_flops(m.run.model).back());
  const std::vector<ExitRow> rows = exit_distribution(m.test, m.run.model, m.params, m.run.sweep);
  const ExitRow* best = nullptr;
  for (const ExitRow& r : rows)
    if (full - r.accuracy <= 0.02 && r.expected_flops <= budget && (!best || r.expected_flops < best->expected_flops))
      best = &r;
  char buf[200];
  if (!best) {
    std::snprintf(buf, sizeof buf, "no threshold within 2 points of %.4f at <= 80%% FLOPs", full);
    return {false, buf};
  }
  std::snprintf(buf, sizeof buf, "threshold %.4f: accuracy %.4f vs %.4f, FLOPs %.0f = %.1f%% of full", best->threshold,
                best->accuracy, full, best->expected_flops, 100.0 * best->expected_flops / (budget / 0.8));
  return {true, buf};
}

Outcome degenerate_equivalence() {
  Outcome o;
  Rng rng(31);
  std::size_t compared = 0;
  for (std::size_t l : {1, 2, 4}) {
    RavitConfig c = RavitConfig::pyramid(32, {0, l});
    c.thresholds = {0.0};
    const RavitParams p = RavitParams::init(c, rng);
    const vit::EncoderConfig plain = c.encoder(1);
    for (int n = 0; n < 5; ++n) {
      const Tensor img = oracle::random_image(3, 32, rng);
      const Vector expected = vit::classify(vit::encode(img, std::nullopt, *p.branches[1], plain, l).cls,
                                            p.branches[1]->head);
      const ExitRecord r = infer(img, c, p);
      if (r.exit_branch != 1 || !r.logits[1] || *r.logits[1] != expected) o.pass = false;
      ++compared;
    }
  }
  o.detail = std::to_string(compared) + " images over l in {1, 2, 4}" + (o.pass ? " bit-identical" : " differ");
  return o;
}

Outcome determinism(const DeskModel& m) {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "ravit_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig small = m.run;
  small.train.epochs = 2;
  small.data.train_samples = 200;
  small.data.test_samples = 100;
  std::ofstream(dir / "small.json") << to_json(small).dump(2);
  const std::string cfg = (dir / "small.json").string();
  const Cli a = invoke({"train", "--config", cfg, "--out", (dir / "a.bin").string(), "--seed", "7"});
  const Cli b = invoke({"train", "--config", cfg, "--out", (dir / "b.bin").string(), "--seed", "7"});
  const std::string bytes_a = read_file(dir / "a.bin");
  if (a.code != 0 || b.code != 0 || bytes_a.empty() || bytes_a != read_file(dir / "b.bin")) {
    o.pass = false;
    o.detail += "checkpoints differ " + a.err + b.err + "; ";
  }

  std::ofstream(dir / "desk.json") << to_json(m.run).dump(2);
  save_checkpoint(dir / "desk.bin", to_checkpoint(m.run.model, m.params));
  const std::vector<std::string> args{"exitdist", "--config", (dir / "desk.json").string(), "--checkpoint",
                                      (dir / "desk.bin").string()};
  const Cli d1 = invoke(args), d2 = invoke(args);
  if (d1.code != 0 || d1.out.empty() || d1.out != d2.out) {
    o.pass = false;
    o.detail += "exitdist output differs " + d1.err + "; ";
  }
  fs::remove_all(dir);
  if (o.pass)
    o.detail = "checkpoints identical (" + std::to_string(bytes_a.size()) + " bytes), exitdist CSV identical (" +
               std::to_string(d1.out.size()) + " bytes)";
  return o;
}

bool report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds, o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report("cost-table-cifar", cifar_table);
  ok &= report("cost-table-imagenet", imagenet_table);
  ok &= report("formula-instrumentation", formula_vs_instrumentation);
  ok &= report("gradient-check", gradient_check);

  const auto start = std::chrono::steady_clock::now();
  std::optional<DeskModel> desk;
  std::string train_error;
  try {
    desk = train_desk();
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  std::printf("     desk 2-branch training      %7.2fs\n",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  const auto needs_desk = [&](Outcome (*f)(const DeskModel&)) {
    return [&, f]() -> Outcome {
      if (!desk) return {false, "training failed: " + train_error};
      return f(*desk);
    };
  };
  ok &= report("early-exit-properties", needs_desk(early_exit_properties));
  ok &= report("adaptive-advantage", needs_desk(adaptive_advantage));
  ok &= report("degenerate-equivalence", degenerate_equivalence);
  ok &= report("determinism", needs_desk(determinism));
  return ok ? 0 : 1;
}
