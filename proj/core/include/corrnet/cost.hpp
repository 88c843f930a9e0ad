#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrnet/netspec.hpp"

namespace corrnet {

/// Analytic cost of one layer. FLOPs are multiply counts (a multiply-add
/// counts once).
struct LayerCost {
  std::string name;
  std::string kind;  // conv, batchnorm, correlation, fc
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;

  [[nodiscard]] std::uint64_t params_of_kind(const std::string& kind) const;
  [[nodiscard]] std::uint64_t flops_of_kind(const std::string& kind) const;
  /// Sum over layers whose name starts with `prefix`.
  [[nodiscard]] std::uint64_t params_with_prefix(const std::string& prefix) const;
  [[nodiscard]] std::uint64_t flops_with_prefix(const std::string& prefix) const;

  [[nodiscard]] std::string to_csv() const;
};

/// Per-sample costs of a network, computed from the spec alone.
CostReport cost_report(const NetSpec& spec);

// Single-operator cost formulas.
std::uint64_t correlation_params(int length, int channels, int kernel);
std::uint64_t correlation_flops(int channels, int kernel, int length, int height, int width);
std::uint64_t conv3d_params(int c_out, int c_in, Int3 kernel);
std::uint64_t conv3d_flops(int c_out, int c_in, Int3 kernel, int length, int height, int width);

}  // namespace corrnet
