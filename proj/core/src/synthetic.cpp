#include "corrnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "corrnet/error.hpp"

namespace corrnet {

ObjectShape parse_object_shape(const std::string& s) {
  if (s == "square") return ObjectShape::square;
  if (s == "disk") return ObjectShape::disk;
  if (s == "texture_patch") return ObjectShape::texture_patch;
  throw ConfigError("unknown object shape '" + s + "'");
}

TextureCorrelation parse_texture_correlation(const std::string& s) {
  if (s == "none") return TextureCorrelation::none;
  if (s == "full") return TextureCorrelation::full;
  throw ConfigError("unknown texture correlation '" + s + "'");
}

void MotionTaskConfig::validate() const {
  if (num_directions != 4 && num_directions != 8) {
    throw ConfigError("num_directions must be 4 or 8");
  }
  if (speed < 0.0) throw ConfigError("speed must be non-negative");
  if (speed == 0.0 && num_directions > 1) {
    throw ConfigError("speed 0 makes motion directions indistinguishable");
  }
  if (height < 4 || width < 4 || length < 1) throw ConfigError("video extents too small");
  if (speed * (length - 1) >= std::min(height, width) / 2.0) {
    throw ConfigError("speed * (L_full - 1) must stay below min(H, W) / 2");
  }
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (num_textures < 1 || num_textures > 8) throw ConfigError("num_textures must be in [1, 8]");
  if (object_size < 2 || object_size >= std::min(height, width)) {
    throw ConfigError("object_size out of range");
  }
}

int MotionTaskConfig::num_classes() const {
  return texture_correlation == TextureCorrelation::none ? num_directions : num_textures;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Well-separated base colours, one per texture id.
constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.90, 0.15, 0.15},
    {0.15, 0.85, 0.20},
    {0.15, 0.25, 0.90},
    {0.90, 0.85, 0.15},
    {0.85, 0.20, 0.85},
    {0.15, 0.85, 0.85},
    {0.95, 0.55, 0.10},
    {0.50, 0.50, 0.50},
}};

constexpr int kTextureCell = 2;

// a mod n in [0, n).
double wrap(double a, int n) {
  const double r = std::fmod(a, static_cast<double>(n));
  return r < 0 ? r + n : r;
}
constexpr int kBackgroundGrid = 6;

}  // namespace

VideoSample render_sample(const MotionTaskConfig& cfg, std::size_t index, std::uint64_t seed) {
  const std::uint64_t sample_seed = splitmix64(seed ^ splitmix64(index));
  std::mt19937_64 rng(sample_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto D = static_cast<std::size_t>(cfg.num_directions);
  const auto T = static_cast<std::size_t>(cfg.num_textures);
  // Balanced factorial assignment: each (label, nuisance) pair occurs equally
  // often, so the nuisance factor carries no information about the label.
  int direction, texture;
  if (cfg.texture_correlation == TextureCorrelation::none) {
    direction = static_cast<int>(index % D);
    texture = static_cast<int>((index / D) % T);
  } else {
    texture = static_cast<int>(index % T);
    direction = static_cast<int>((index / T) % D);
  }

  const double angle = 2.0 * std::numbers::pi * direction / cfg.num_directions;
  const double vy = cfg.speed * std::sin(angle);
  const double vx = cfg.speed * std::cos(angle);

  // The frame is a torus: the object starts anywhere and wraps at the edges,
  // so its position in any frame says nothing about the direction.
  const int H = cfg.height, W = cfg.width, Lf = cfg.length, S = cfg.object_size;
  const double y0 = unit(rng) * H;
  const double x0 = unit(rng) * W;

  // Static low-frequency background, bilinear over a coarse random grid.
  std::vector<double> background(3 * static_cast<std::size_t>(H) * W);
  {
    const int G = kBackgroundGrid;
    std::vector<double> grid(3 * static_cast<std::size_t>(G + 1) * (G + 1));
    for (auto& g : grid) g = 0.25 + 0.5 * unit(rng);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < H; ++y) {
        const double gy = static_cast<double>(y) * G / H;
        const int iy = static_cast<int>(gy);
        const double fy = gy - iy;
        for (int x = 0; x < W; ++x) {
          const double gx = static_cast<double>(x) * G / W;
          const int ix = static_cast<int>(gx);
          const double fx = gx - ix;
          auto at = [&](int a, int b) { return grid[(c * (G + 1) + a) * (G + 1) + b]; };
          background[(c * H + y) * W + x] =
              (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
              fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
        }
      }
    }
  }

  // Object texture: palette colour modulated by a per-sample random pattern.
  const int cells = (S + kTextureCell - 1) / kTextureCell;
  std::vector<double> pattern(static_cast<std::size_t>(cells) * cells);
  for (int a = 0; a < cells; ++a) {
    for (int b = 0; b < cells; ++b) {
      double p = 0.0;
      switch (cfg.object) {
        case ObjectShape::texture_patch: p = unit(rng) < 0.5 ? -1.0 : 1.0; break;
        case ObjectShape::square: p = (a + b) % 2 == 0 ? -1.0 : 1.0; break;
        case ObjectShape::disk: p = 0.0; break;
      }
      pattern[a * cells + b] = p;
    }
  }
  const auto& base = kPalette[static_cast<std::size_t>(texture)];
  constexpr double kContrast = 0.25;

  VideoSample s;
  s.label = cfg.texture_correlation == TextureCorrelation::none ? direction : texture;
  s.meta = {sample_seed, direction, texture, vy, vx};
  s.clip = NDTensor({3, static_cast<std::size_t>(Lf), static_cast<std::size_t>(H),
                     static_cast<std::size_t>(W)});
  std::normal_distribution<double> noise(0.0, cfg.noise_std > 0 ? cfg.noise_std : 1.0);

  constexpr std::array<double, 2> kSub{0.25, 0.75};
  for (int t = 0; t < Lf; ++t) {
    const double top = y0 + vy * t - S / 2.0;
    const double left = x0 + vx * t - S / 2.0;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double acc = 0.0;
          for (double sy : kSub) {
            for (double sx : kSub) {
              const double u = wrap(y + sy - top, H);
              const double v = wrap(x + sx - left, W);
              bool inside = u < S && v < S;
              if (inside && cfg.object == ObjectShape::disk) {
                const double r = S / 2.0;
                inside = (u - r) * (u - r) + (v - r) * (v - r) < r * r;
              }
              if (inside) {
                const int a = std::min(cells - 1, static_cast<int>(u) / kTextureCell);
                const int b = std::min(cells - 1, static_cast<int>(v) / kTextureCell);
                acc += std::clamp(base[c] + kContrast * pattern[a * cells + b], 0.0, 1.0);
              } else {
                acc += background[(c * H + y) * W + x];
              }
            }
          }
          s.clip.at({static_cast<std::size_t>(c), static_cast<std::size_t>(t),
                     static_cast<std::size_t>(y), static_cast<std::size_t>(x)}) = acc / 4.0;
        }
      }
    }
  }
  for (auto& v : s.clip.data()) {
    if (cfg.noise_std > 0) v = std::clamp(v + noise(rng), 0.0, 1.0);
    // Pixels are stored as float32 on disk; keep memory and disk identical.
    v = static_cast<double>(static_cast<float>(v));
  }
  return s;
}

Dataset generate_dataset(const MotionTaskConfig& cfg, std::size_t n, std::uint64_t seed) {
  cfg.validate();
  Dataset d;
  d.num_classes = cfg.num_classes();
  d.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) d.samples.push_back(render_sample(cfg, i, seed));
  return d;
}

int effective_length(int video_length, int clip_length) {
  if (video_length >= clip_length) return video_length;
  return std::max(2 * video_length, clip_length);
}

namespace {

// Source frame for position p of the (possibly repeated) video.
int source_frame(int video_length, int clip_length, int p) {
  if (video_length >= clip_length) return p;
  const int doubled = 2 * video_length;
  return (p % doubled) / 2;
}

NDTensor extract(const VideoSample& v, int clip_length, int start) {
  const std::size_t C = v.clip.dim(0), Lf = v.clip.dim(1), H = v.clip.dim(2), W = v.clip.dim(3);
  const std::size_t plane = H * W;
  NDTensor out({C, static_cast<std::size_t>(clip_length), H, W});
  for (std::size_t c = 0; c < C; ++c) {
    for (int t = 0; t < clip_length; ++t) {
      const auto src = static_cast<std::size_t>(
          source_frame(static_cast<int>(Lf), clip_length, start + t));
      std::copy_n(v.clip.data().begin() + (c * Lf + src) * plane, plane,
                  out.data().begin() + (c * clip_length + t) * plane);
    }
  }
  return out;
}

}  // namespace

NDTensor sample_clip(const VideoSample& v, int clip_length, bool jitter, std::mt19937_64& rng) {
  if (clip_length < 1) throw ShapeError("clip length must be >= 1");
  const int len = effective_length(static_cast<int>(v.clip.dim(1)), clip_length);
  const int max_start = len - clip_length;
  int start = max_start / 2;
  if (jitter) start = std::uniform_int_distribution<int>(0, max_start)(rng);
  return extract(v, clip_length, start);
}

std::vector<int> uniform_clip_starts(int video_length, int clip_length, int n_clips) {
  if (n_clips < 1) throw ConfigError("n_clips must be >= 1");
  const int span = effective_length(video_length, clip_length) - clip_length;
  if (n_clips == 1) return {span / 2};
  std::vector<int> starts;
  for (int i = 0; i < n_clips; ++i) starts.push_back(i * span / (n_clips - 1));
  return starts;
}

std::vector<NDTensor> uniform_test_clips(const VideoSample& v, int clip_length, int n_clips) {
  std::vector<NDTensor> clips;
  for (int s : uniform_clip_starts(static_cast<int>(v.clip.dim(1)), clip_length, n_clips)) {
    clips.push_back(extract(v, clip_length, s));
  }
  return clips;
}

NDTensor random_resized_crop(const NDTensor& clip, double scale, std::mt19937_64& rng) {
  if (clip.rank() != 4 || scale < 1.0) throw ShapeError("random_resized_crop: bad input");
  const std::size_t C = clip.dim(0), L = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  const auto BH = static_cast<std::size_t>(std::floor(H * scale));
  const auto BW = static_cast<std::size_t>(std::floor(W * scale));
  const auto oy = std::uniform_int_distribution<std::size_t>(0, BH - H)(rng);
  const auto ox = std::uniform_int_distribution<std::size_t>(0, BW - W)(rng);
  NDTensor out(clip.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t y = 0; y < H; ++y) {
        const auto sy = std::min(H - 1, static_cast<std::size_t>((y + oy) / scale));
        for (std::size_t x = 0; x < W; ++x) {
          const auto sx = std::min(W - 1, static_cast<std::size_t>((x + ox) / scale));
          out[((c * L + t) * H + y) * W + x] = clip[((c * L + t) * H + sy) * W + sx];
        }
      }
    }
  }
  return out;
}

}  // namespace corrnet
