#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "corrnet/tensor.hpp"

namespace corrnet {

enum class ObjectShape { square, disk, texture_patch };

/// `none`: the label is the motion direction and the texture is drawn
/// independently of it. `full`: the label is the texture id (appearance
/// control task) and the direction is independent of it.
enum class TextureCorrelation { none, full };

ObjectShape parse_object_shape(const std::string& s);
TextureCorrelation parse_texture_correlation(const std::string& s);

/// Synthetic moving-object video task.
struct MotionTaskConfig {
  int num_directions = 8;
  double speed = 1.0;  // pixels per frame
  ObjectShape object = ObjectShape::texture_patch;
  TextureCorrelation texture_correlation = TextureCorrelation::none;
  double noise_std = 0.05;
  int height = 32;
  int width = 32;
  int length = 16;  // L_full, frames per video
  int num_textures = 8;
  int object_size = 10;

  /// Throws ConfigError unless num_directions is 4 or 8, speed > 0 (when
  /// more than one direction exists) and speed * (L_full - 1) < min(H, W) / 2.
  void validate() const;
  [[nodiscard]] int num_classes() const;
};

struct SampleMeta {
  std::uint64_t seed = 0;
  int direction = -1;  // unknown after reading from disk
  int texture_id = -1;
  double velocity_y = 0.0;
  double velocity_x = 0.0;
};

/// One video: clip is 3 x L_full x H x W with values in [0, 1].
struct VideoSample {
  NDTensor clip;
  int label = 0;
  SampleMeta meta;
};

struct Dataset {
  int num_classes = 0;
  std::vector<VideoSample> samples;
};

/// Deterministic for a fixed seed. Sample i is rendered from its own seed
/// derived from (seed, i), so samples are independent of generation order.
Dataset generate_dataset(const MotionTaskConfig& cfg, std::size_t n, std::uint64_t seed);

/// Renders a single sample (what generate_dataset does for index `index`).
VideoSample render_sample(const MotionTaskConfig& cfg, std::size_t index, std::uint64_t seed);

/// Frames available for clip sampling: the video itself, or, when shorter
/// than `clip_length`, every frame repeated twice and then cyclically
/// extended to `clip_length`.
int effective_length(int video_length, int clip_length);

/// An L-frame window. With jitter the start is uniform over all valid
/// starts; without it the window is centered.
NDTensor sample_clip(const VideoSample& v, int clip_length, bool jitter, std::mt19937_64& rng);

/// Start frames of `n_clips` evenly spaced windows:
/// floor(i * (len - L) / (n - 1)), or the centered start when n == 1.
std::vector<int> uniform_clip_starts(int video_length, int clip_length, int n_clips);
std::vector<NDTensor> uniform_test_clips(const VideoSample& v, int clip_length, int n_clips);

/// Nearest-neighbour upscale by `scale` followed by a random crop back to
/// the original H x W.
NDTensor random_resized_crop(const NDTensor& clip, double scale, std::mt19937_64& rng);

/// Binary format, little-endian: "SVD1", u32 n, C, L_full, H, W, num_classes,
/// then per sample u32 label, u64 meta seed, C*L_full*H*W float32 pixels.
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Per-channel mean subtraction applied at load time.
inline constexpr double kPixelMean = 0.5;

}  // namespace corrnet
