#pragma once

#include <string>
#include <vector>

#include "corrnet/correlation.hpp"
#include "corrnet/cost.hpp"
#include "corrnet/train.hpp"

namespace corrnet {

/// Strongest offset of one K x K filter grid.
struct FilterArgmax {
  int t = 0;
  int c = 0;
  int dy = 0;  // pixel displacement, offset(ky)
  int dx = 0;
  double weight = 0.0;
};

/// Argmax of a K x K grid. Ties go to the offset closest to the window
/// centre (smallest |dy| + |dx|), then to the smallest (dy, dx) in row-major
/// order.
FilterArgmax grid_argmax(const double* grid, const CorrelationConfig& cfg);

/// Writes, under `out_dir`:
///   filters.csv  t,c,ky,kx,dy,dx,weight (weights at full precision)
///   argmax.csv   t,c,dy,dx,weight
///   t<t>_c<c>.pgm  one graymap per grid, shared min/max scaling
/// Returns the argmax table (L * C rows).
std::vector<FilterArgmax> dump_filters(const NDTensor& weights, const CorrelationConfig& cfg,
                                       const std::string& out_dir);

/// Dumps the filter of correlation block `block` ("res2.1") of a
/// checkpoint. Throws ConfigError when the block does not exist or is not a
/// correlation block.
std::vector<FilterArgmax> inspect_filters(const Checkpoint& ck, const std::string& block,
                                          const std::string& out_dir);

/// Parses filters.csv back into an L x C x K x K tensor.
NDTensor read_filter_csv(const std::string& path, const CorrelationConfig& cfg);

struct BenchResult {
  std::vector<double> seconds;  // one forward pass each
  double median = 0.0;
  CostReport cost;

  /// layer,kind,params,flops rows followed by timing rows.
  [[nodiscard]] std::string to_csv() const;
};

/// Times `repeats` eval-mode forward passes of a batch of `batch` random
/// clips (after one untimed warm-up pass). Throws ConfigError when
/// repeats < 3.
BenchResult bench(const NetSpec& spec, int batch, int repeats, std::uint64_t seed = 0);

}  // namespace corrnet
