#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ravit/model_config.hpp"

namespace ravit::cost {

/// MACs of one transformer layer at sequence length L and width D, with a
/// 4*D MLP: 2*L^2*D (scores and weighted sum) + 12*L*D^2 (Q, K, V, O and the
/// two MLP projections).
std::uint64_t mac_layer(std::uint64_t sequence_length, std::uint64_t embed_dim);

/// Same count for an arbitrary MLP width: 2*L^2*D + 4*L*D^2 + 2*L*D*hidden.
std::uint64_t mac_layer(std::uint64_t sequence_length, std::uint64_t embed_dim, std::uint64_t hidden_dim);

struct BranchCost {
  std::size_t dim = 0;
  std::uint64_t sequence_length = 0;
  std::size_t layers = 0;
  std::uint64_t layer_macs = 0;
  std::uint64_t branch_macs = 0;      // layers * layer_macs
  std::uint64_t cumulative_macs = 0;  // branches 0..i
};

struct CostReport {
  std::vector<BranchCost> branches;
  std::uint64_t mac_total = 0;
  std::optional<double> expected_flops;

  std::uint64_t flops() const { return 2 * mac_total; }
};

CostReport report(const RavitConfig& config);

/// Sum over branches of layers * mac_layer; zero-layer branches add nothing.
std::uint64_t mac_total(const RavitConfig& config);

/// FLOPs spent by a sample leaving at each branch (cumulative over earlier
/// branches, exit heads excluded).
std::vector<std::uint64_t> exit_flops(const RavitConfig& config);

/// (sum S_i * FLOP_i) / sum S_i. Throws DomainError when no samples are
/// counted and ContractError on length mismatch or decreasing costs.
double expected_flops(std::span<const std::uint64_t> exit_counts, std::span<const std::uint64_t> exit_costs);

struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

struct SweepRow {
  std::vector<std::size_t> layers;
  std::uint64_t flops = 0;
};

/// Exhaustive grid over per-branch layer ranges, last branch varying fastest.
std::vector<SweepRow> sweep(const RavitConfig& base, std::span<const LayerRange> ranges);

// --- Formatting --------------------------------------------------------------

enum class Rounding {
  Truncate,  // drop digits past the second decimal
  HalfUp,
};

inline constexpr std::uint64_t kMega = 1'000'000;
inline constexpr std::uint64_t kGiga = 1'000'000'000;

/// FLOPs / unit with exactly two decimals, computed in integer arithmetic.
std::string format_fixed2(std::uint64_t flops, std::uint64_t unit, Rounding rounding = Rounding::Truncate);

/// "89.99 MFLOPs" below 1e9 FLOPs, "24.43 GFLOPs" from there up.
std::string format_flops(std::uint64_t flops, Rounding rounding = Rounding::Truncate);

/// Aligned text table of a report.
std::string render(const CostReport& report, const RavitConfig& config, Rounding rounding = Rounding::Truncate);

/// CSV with header branch,dim,seq_len,layers,layer_macs,branch_macs,cumulative_flops.
std::string render_csv(const CostReport& report);

/// CSV l1,...,lB,mflops.
std::string render_sweep_csv(std::span<const SweepRow> rows, std::size_t branches,
                             Rounding rounding = Rounding::Truncate);

}  // namespace ravit::cost
