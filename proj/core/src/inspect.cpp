#include "corrnet/inspect.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "corrnet/error.hpp"

namespace corrnet {

FilterArgmax grid_argmax(const double* grid, const CorrelationConfig& cfg) {
  const int K = cfg.kernel;
  int best = 0;
  auto closeness = [&](int k) {
    return std::abs(cfg.offset(k / K)) + std::abs(cfg.offset(k % K));
  };
  for (int k = 1; k < K * K; ++k) {
    if (grid[k] > grid[best] || (grid[k] == grid[best] && closeness(k) < closeness(best))) best = k;
  }
  FilterArgmax a;
  a.dy = cfg.offset(best / K);
  a.dx = cfg.offset(best % K);
  a.weight = grid[best];
  return a;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  return os;
}

}  // namespace

std::vector<FilterArgmax> dump_filters(const NDTensor& weights, const CorrelationConfig& cfg,
                                       const std::string& out_dir) {
  const auto L = static_cast<std::size_t>(cfg.length), C = static_cast<std::size_t>(cfg.channels),
             K = static_cast<std::size_t>(cfg.kernel);
  if (weights.shape() != Shape{L, C, K, K}) throw ShapeError("filter shape does not match config");
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  auto csv = open_out(dir / "filters.csv");
  auto arg = open_out(dir / "argmax.csv");
  csv << "t,c,ky,kx,dy,dx,weight\n";
  arg << "t,c,dy,dx,weight\n";
  const auto [lo_it, hi_it] = std::minmax_element(weights.data().begin(), weights.data().end());
  const double lo = *lo_it, range = *hi_it - *lo_it;

  std::vector<FilterArgmax> table;
  char buf[160];
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* grid = weights.data().data() + (t * C + c) * K * K;
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%d,%d,%.17g\n", t, c, ky, kx,
                        cfg.offset(static_cast<int>(ky)), cfg.offset(static_cast<int>(kx)),
                        grid[ky * K + kx]);
          csv << buf;
        }
      }
      FilterArgmax a = grid_argmax(grid, cfg);
      a.t = static_cast<int>(t);
      a.c = static_cast<int>(c);
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g\n", a.t, a.c, a.dy, a.dx, a.weight);
      arg << buf;
      table.push_back(a);

      auto pgm = open_out(dir / ("t" + std::to_string(t) + "_c" + std::to_string(c) + ".pgm"));
      pgm << "P2\n" << K << ' ' << K << "\n255\n";
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const double v = range > 0 ? (grid[ky * K + kx] - lo) / range : 0.5;
          pgm << static_cast<int>(std::lround(255.0 * v)) << (kx + 1 == K ? '\n' : ' ');
        }
      }
    }
  }
  if (!csv || !arg) throw IoError("writing filter dump under '" + out_dir + "' failed");
  return table;
}

std::vector<FilterArgmax> inspect_filters(const Checkpoint& ck, const std::string& block,
                                          const std::string& out_dir) {
  Network net = network_from_checkpoint(ck);
  const CorrelationConfig cfg = net.correlation_config(block);
  return dump_filters(net.correlation_filter(block), cfg, out_dir);
}

NDTensor read_filter_csv(const std::string& path, const CorrelationConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  const auto L = static_cast<std::size_t>(cfg.length), C = static_cast<std::size_t>(cfg.channels),
             K = static_cast<std::size_t>(cfg.kernel);
  NDTensor w({L, C, K, K});
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t t, c, ky, kx;
    int dy, dx;
    char* end = nullptr;
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%zu,%d,%d,", &t, &c, &ky, &kx, &dy, &dx) != 6) {
      throw IoError(path + ": bad row '" + line + "'");
    }
    const char* val = line.c_str() + line.rfind(',') + 1;
    const double v = std::strtod(val, &end);
    if (t >= L || c >= C || ky >= K || kx >= K || end == val) throw IoError(path + ": bad row '" + line + "'");
    w[((t * C + c) * K + ky) * K + kx] = v;
    ++rows;
  }
  if (rows != w.size()) throw IoError(path + ": expected " + std::to_string(w.size()) + " rows");
  return w;
}

std::string BenchResult::to_csv() const {
  std::ostringstream os;
  os << cost.to_csv();
  os << "repeat,seconds\n";
  for (std::size_t i = 0; i < seconds.size(); ++i) os << i << ',' << seconds[i] << '\n';
  os << "median," << median << '\n';
  return os.str();
}

BenchResult bench(const NetSpec& spec, int batch, int repeats, std::uint64_t seed) {
  if (repeats < 3) throw ConfigError("bench needs at least 3 repeats");
  if (batch < 1) throw ConfigError("bench batch must be >= 1");
  Network net(spec, seed);
  const auto& in = spec.input;
  NDTensor x({static_cast<std::size_t>(batch), static_cast<std::size_t>(in.channels),
              static_cast<std::size_t>(in.length), static_cast<std::size_t>(in.height),
              static_cast<std::size_t>(in.width)});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : x.data()) v = u(rng);

  BenchResult r;
  r.cost = cost_report(spec);
  (void)net.predict(x);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)net.predict(x);
    r.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<double> sorted = r.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  r.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return r;
}

}  // namespace corrnet
