#include "ravit/cost.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

namespace ravit::cost {

std::uint64_t mac_layer(std::uint64_t l, std::uint64_t d) { return 2 * l * l * d + 12 * l * d * d; }

std::uint64_t mac_layer(std::uint64_t l, std::uint64_t d, std::uint64_t hidden) {
  return 2 * l * l * d + 4 * l * d * d + 2 * l * d * hidden;
}

CostReport report(const RavitConfig& config) {
  config.validate();
  CostReport r;
  std::uint64_t running = 0;
  for (std::size_t i = 0; i < config.branches(); ++i) {
    BranchCost b;
    b.dim = config.dims[i];
    b.sequence_length = config.encoder(i).sequence_length();
    b.layers = config.layers[i];
    b.layer_macs = mac_layer(b.sequence_length, config.embed_dim, config.hidden_dim);
    b.branch_macs = b.layers * b.layer_macs;
    running += b.branch_macs;
    b.cumulative_macs = running;
    r.branches.push_back(b);
  }
  r.mac_total = running;
  return r;
}

std::uint64_t mac_total(const RavitConfig& config) { return report(config).mac_total; }

std::vector<std::uint64_t> exit_flops(const RavitConfig& config) {
  std::vector<std::uint64_t> out;
  for (const BranchCost& b : report(config).branches) out.push_back(2 * b.cumulative_macs);
  return out;
}

double expected_flops(std::span<const std::uint64_t> counts, std::span<const std::uint64_t> costs) {
  if (counts.size() != costs.size()) throw ContractError("expected_flops: counts and costs differ in length");
  for (std::size_t i = 1; i < costs.size(); ++i) {
    if (costs[i] < costs[i - 1]) throw ContractError("expected_flops: per-exit costs must not decrease");
  }
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total == 0) throw DomainError("expected_flops: no samples");
  long double weighted = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    weighted += static_cast<long double>(counts[i]) * static_cast<long double>(costs[i]);
  }
  return static_cast<double>(weighted / static_cast<long double>(total));
}

std::vector<SweepRow> sweep(const RavitConfig& base, std::span<const LayerRange> ranges) {
  if (ranges.size() != base.branches()) {
    throw ContractError("sweep: " + std::to_string(ranges.size()) + " ranges for " +
                        std::to_string(base.branches()) + " branches");
  }
  for (const LayerRange& r : ranges) {
    if (r.first > r.last) throw ContractError("sweep: empty layer range");
  }
  RavitConfig config = base;
  std::vector<SweepRow> rows;
  std::vector<std::size_t> cursor;
  for (const LayerRange& r : ranges) cursor.push_back(r.first);
  while (true) {
    config.layers = cursor;
    rows.push_back({cursor, 2 * mac_total(config)});
    std::size_t axis = ranges.size();
    while (axis > 0) {
      --axis;
      if (cursor[axis] < ranges[axis].last) {
        ++cursor[axis];
        break;
      }
      cursor[axis] = ranges[axis].first;
      if (axis == 0) return rows;
    }
  }
}

std::string format_fixed2(std::uint64_t flops, std::uint64_t unit, Rounding rounding) {
  const unsigned __int128 scaled = static_cast<unsigned __int128>(flops) * 100;
  unsigned __int128 hundredths = scaled / unit;
  if (rounding == Rounding::HalfUp && (scaled % unit) * 2 >= unit) ++hundredths;
  const auto value = static_cast<std::uint64_t>(hundredths);
  std::ostringstream out;
  out << value / 100 << '.' << std::setw(2) << std::setfill('0') << value % 100;
  return out.str();
}

std::string format_flops(std::uint64_t flops, Rounding rounding) {
  if (flops >= kGiga) return format_fixed2(flops, kGiga, rounding) + " GFLOPs";
  return format_fixed2(flops, kMega, rounding) + " MFLOPs";
}

std::string render(const CostReport& r, const RavitConfig& config, Rounding rounding) {
  std::ostringstream out;
  const std::uint64_t unit = r.flops() >= kGiga ? kGiga : kMega;
  const char* unit_name = unit == kGiga ? "GFLOPs" : "MFLOPs";
  out << std::left << std::setw(8) << "branch" << std::right << std::setw(6) << "dim" << std::setw(8) << "seq_len"
      << std::setw(8) << "layers" << std::setw(16) << "layer_macs" << std::setw(16) << "branch_macs" << std::setw(14)
      << unit_name << std::setw(14) << "exit_" + std::string(unit_name) << '\n';
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    const BranchCost& b = r.branches[i];
    out << std::left << std::setw(8) << i + 1 << std::right << std::setw(6) << b.dim << std::setw(8)
        << b.sequence_length << std::setw(8) << b.layers << std::setw(16) << b.layer_macs << std::setw(16)
        << b.branch_macs << std::setw(14) << format_fixed2(2 * b.branch_macs, unit, rounding) << std::setw(14)
        << format_fixed2(2 * b.cumulative_macs, unit, rounding) << '\n';
  }
  out << "embed_dim " << config.embed_dim << ", hidden " << config.hidden_dim << ", patch " << config.patch_size
      << '\n';
  out << "MAC_tot " << r.mac_total << '\n';
  out << "total " << format_flops(r.flops(), rounding) << '\n';
  if (r.expected_flops) {
    out << "expected " << std::fixed << std::setprecision(2) << *r.expected_flops / static_cast<double>(unit) << ' '
        << unit_name << '\n';
  }
  return out.str();
}

std::string render_csv(const CostReport& r) {
  std::ostringstream out;
  out << "branch,dim,seq_len,layers,layer_macs,branch_macs,cumulative_flops\n";
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    const BranchCost& b = r.branches[i];
    out << i + 1 << ',' << b.dim << ',' << b.sequence_length << ',' << b.layers << ',' << b.layer_macs << ','
        << b.branch_macs << ',' << 2 * b.cumulative_macs << '\n';
  }
  return out.str();
}

std::string render_sweep_csv(std::span<const SweepRow> rows, std::size_t branches, Rounding rounding) {
  std::ostringstream out;
  for (std::size_t i = 0; i < branches; ++i) out << 'l' << i + 1 << ',';
  out << "mflops\n";
  for (const SweepRow& row : rows) {
    for (std::size_t l : row.layers) out << l << ',';
    out << format_fixed2(row.flops, kMega, rounding) << '\n';
  }
  return out.str();
}

}  // namespace ravit::cost
