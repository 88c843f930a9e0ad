#include "corrnet/cost.hpp"

#include <sstream>

namespace corrnet {

std::uint64_t correlation_params(int length, int channels, int kernel) {
  return static_cast<std::uint64_t>(length) * channels * kernel * kernel;
}

std::uint64_t correlation_flops(int channels, int kernel, int length, int height, int width) {
  return static_cast<std::uint64_t>(channels) * kernel * kernel * length * height * width;
}

std::uint64_t conv3d_params(int c_out, int c_in, Int3 k) {
  return static_cast<std::uint64_t>(c_out) * c_in * k.t * k.y * k.x;
}

std::uint64_t conv3d_flops(int c_out, int c_in, Int3 k, int length, int height, int width) {
  return conv3d_params(c_out, c_in, k) * length * height * width;
}

namespace {

struct Walker {
  CostReport report;
  int C, L, H, W;

  void add(std::string name, std::string kind, std::uint64_t params, std::uint64_t flops) {
    report.layers.push_back({std::move(name), std::move(kind), params, flops});
  }

  // Convolution + batch norm; (l, h, w) advance to the conv output extents.
  void conv_bn(const std::string& name, int cin, int cout, Int3 k, Int3 stride, Int3 pad,
               int& l, int& h, int& w) {
    l = conv_output_extent(l, k.t, stride.t, pad.t);
    h = conv_output_extent(h, k.y, stride.y, pad.y);
    w = conv_output_extent(w, k.x, stride.x, pad.x);
    add(name + ".conv", "conv", conv3d_params(cout, cin, k), conv3d_flops(cout, cin, k, l, h, w));
    add(name + ".bn", "batchnorm", 2ULL * cout, 0);
  }

  void bottleneck(const std::string& name, const BlockSpec& b) {
    Int3 stride = b.stride;
    const bool temporal = b.kind == BlockKind::bottleneck_2plus1d;
    if (!temporal && stride.t > 1) {
      L = conv_output_extent(L, 3, 2, 1);  // max pooling, no multiplies
      stride.t = 1;
    }
    int l = L, h = H, w = W;
    conv_bn(name + ".reduce", b.in, b.mid, {1, 1, 1}, {}, {0, 0, 0}, l, h, w);
    if (temporal) conv_bn(name + ".temporal", b.mid, b.mid, {3, 1, 1}, {stride.t, 1, 1}, {1, 0, 0}, l, h, w);
    conv_bn(name + ".spatial", b.mid, b.mid, {1, 3, 3}, {temporal ? 1 : stride.t, stride.y, stride.x},
            {0, 1, 1}, l, h, w);
    conv_bn(name + ".expand", b.mid, b.out, {1, 1, 1}, {}, {0, 0, 0}, l, h, w);
    if (b.in != b.out || stride != Int3{}) {
      int sl = L, sh = H, sw = W;
      conv_bn(name + ".shortcut", b.in, b.out, {1, 1, 1}, stride, {0, 0, 0}, sl, sh, sw);
    }
    C = b.out;
    L = l;
    H = h;
    W = w;
  }

  void correlation(const std::string& name, const BlockSpec& b) {
    int l = L, h = H, w = W;
    conv_bn(name + ".reduce", b.in, b.mid, {1, 1, 1}, {}, {0, 0, 0}, l, h, w);
    const auto& c = *b.corr;
    add(name + ".corr", "correlation", c.learnable ? correlation_params(L, b.mid, c.kernel) : 0,
        correlation_flops(b.mid, c.kernel, L, H, W));
    const int corr_out = b.correlation_channels();
    if (b.kind == BlockKind::correlation_concat) {
      conv_bn(name + ".pointwise", b.in, b.out - corr_out, {1, 1, 1}, {}, {0, 0, 0}, l, h, w);
    } else {
      conv_bn(name + ".restore", corr_out, b.out, {1, 1, 1}, {}, {0, 0, 0}, l, h, w);
    }
    C = b.out;
  }
};

}  // namespace

CostReport cost_report(const NetSpec& spec) {
  spec.validate();
  Walker wk{{}, spec.input.channels, spec.input.length, spec.input.height, spec.input.width};
  if (spec.stem_channels > 0) {
    wk.conv_bn("stem", spec.input.channels, spec.stem_channels, kStemKernel, kStemStride, kStemPad,
               wk.L, wk.H, wk.W);
    wk.C = spec.stem_channels;
  }
  for (const auto& stage : spec.stages) {
    for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
      const auto& b = stage.blocks[i];
      const std::string name = stage.name + "." + std::to_string(i);
      if (b.is_correlation()) {
        wk.correlation(name, b);
      } else {
        wk.bottleneck(name, b);
      }
    }
  }
  const auto fc = static_cast<std::uint64_t>(spec.num_classes) * wk.C;
  wk.add("head.fc", "fc", fc, fc);

  for (const auto& l : wk.report.layers) {
    wk.report.total_params += l.params;
    wk.report.total_flops += l.flops;
  }
  return wk.report;
}

std::uint64_t CostReport::params_of_kind(const std::string& kind) const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.kind == kind ? l.params : 0;
  return n;
}

std::uint64_t CostReport::flops_of_kind(const std::string& kind) const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.kind == kind ? l.flops : 0;
  return n;
}

std::uint64_t CostReport::params_with_prefix(const std::string& prefix) const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.name.starts_with(prefix) ? l.params : 0;
  return n;
}

std::uint64_t CostReport::flops_with_prefix(const std::string& prefix) const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.name.starts_with(prefix) ? l.flops : 0;
  return n;
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "layer,kind,params,flops\n";
  for (const auto& l : layers) {
    os << l.name << ',' << l.kind << ',' << l.params << ',' << l.flops << '\n';
  }
  os << "total,,"
     << total_params << ',' << total_flops << '\n';
  return os.str();
}

}  // namespace corrnet
