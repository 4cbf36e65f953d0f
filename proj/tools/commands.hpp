#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ravit/cost.hpp"

namespace ravit::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::string log;
  std::optional<double> threshold;
  std::string ranges;
  bool train = false;
  bool no_exits = false;
};

/// "0:3,1:7" -> one inclusive range per branch.
std::vector<cost::LayerRange> parse_ranges(const std::string& text);

int cmd_cost(const Options& options, std::ostream& out);
int cmd_sweep(const Options& options, std::ostream& out);
int cmd_train(const Options& options, std::ostream& out);
int cmd_eval(const Options& options, std::ostream& out);
int cmd_exitdist(const Options& options, std::ostream& out);
int cmd_synth(const Options& options, std::ostream& out);

/// Parses argv-style arguments (without the program name), dispatches, and
/// maps library exceptions to exit codes with a message on `err`.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace ravit::cli
