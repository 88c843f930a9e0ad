#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrnet/netspec.hpp"

namespace corrnet {

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is at round-off level from dominating the maximum.
double relative_error(double analytic, double numeric, double floor = 1e-8);

struct GradcheckOptions {
  int n_coords = 100;
  std::uint64_t seed = 0;
  double step = 1e-5;
  int batch = 2;
  double tolerance = 1e-5;
};

struct GradcheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  /// Coordinates whose +h and -h forwards crossed a ReLU or max-pool
  /// boundary; finite differences are meaningless there.
  std::size_t skipped_kinks = 0;
  double max_rel_error = 0.0;
  bool passed = false;

  [[nodiscard]] std::string to_csv() const;
};

/// Builds the network, runs forward and backward on a random batch, and
/// differentiates a fixed random projection of the logits. Compares
/// `n_coords` random parameter-gradient coordinates with central finite
/// differences. Batch norm runs in train mode. Only registered parameters
/// are probed, so frozen correlation filters are never sampled.
GradcheckReport gradcheck(const NetSpec& spec, const GradcheckOptions& opts);

}  // namespace corrnet
