#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "corrnet/error.hpp"
#include "corrnet/train.hpp"

namespace corrnet {

double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max) {
  step = std::clamp<std::int64_t>(step, 0, total_steps);
  if (step < warmup_steps) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::int64_t span = total_steps - warmup_steps;
  if (span <= 0) return lr_max;
  const double phase = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw ConfigError("warmup epochs must be in [0, epochs)");
  }
  if (!(lr_max >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (clip_len < 1) throw ConfigError("clip length must be >= 1");
  if (!(crop_scale >= 1.0)) throw ConfigError("crop scale must be >= 1");
  if (eval_clips < 1) throw ConfigError("eval clips must be >= 1");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
  return out;
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "warmup_epochs=" << warmup_epochs << '\n'
     << "lr_max=" << fmt_double(lr_max) << '\n'
     << "momentum=" << fmt_double(momentum) << '\n'
     << "weight_decay=" << fmt_double(weight_decay) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "clip_len=" << clip_len << '\n'
     << "seed=" << seed << '\n'
     << "netspec=" << netspec << '\n'
     << "data=" << data << '\n'
     << "test_data=" << test_data << '\n'
     << "jitter=" << (jitter ? 1 : 0) << '\n'
     << "crop_scale=" << fmt_double(crop_scale) << '\n'
     << "eval_clips=" << eval_clips << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line '" + line + "'");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "epochs") c.epochs = parse_int<int>(k, v);
    else if (k == "warmup_epochs") c.warmup_epochs = parse_int<int>(k, v);
    else if (k == "lr_max") c.lr_max = parse_double(k, v);
    else if (k == "momentum") c.momentum = parse_double(k, v);
    else if (k == "weight_decay") c.weight_decay = parse_double(k, v);
    else if (k == "batch_size") c.batch_size = parse_int<int>(k, v);
    else if (k == "clip_len") c.clip_len = parse_int<int>(k, v);
    else if (k == "seed") c.seed = parse_int<std::uint64_t>(k, v);
    else if (k == "netspec") c.netspec = v;
    else if (k == "data") c.data = v;
    else if (k == "test_data") c.test_data = v;
    else if (k == "jitter") c.jitter = parse_int<int>(k, v) != 0;
    else if (k == "crop_scale") c.crop_scale = parse_double(k, v);
    else if (k == "eval_clips") c.eval_clips = parse_int<int>(k, v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  return c;
}

}  // namespace corrnet
