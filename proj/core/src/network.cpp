#include "corrnet/network.hpp"

#include <cmath>
#include <random>

namespace corrnet {

namespace {

class ParamFactory {
 public:
  explicit ParamFactory(std::uint64_t seed) : rng_(seed) {}

  Var he_normal(Shape shape, std::size_t fan_in) {
    NDTensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : t.data()) v = n(rng_);
    return make_leaf(std::move(t), true);
  }

  Var normal(Shape shape, double std) {
    NDTensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, std);
    for (auto& v : t.data()) v = n(rng_);
    return make_leaf(std::move(t), true);
  }

  std::uint64_t next_seed() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

struct Registry {
  std::vector<NamedParameter> params;
  std::vector<std::pair<std::string, NDTensor*>> buffers;

  void add(std::string name, const Var& v) { params.push_back({std::move(name), v}); }
};

// Convolution followed by batch norm.
struct ConvBn {
  Var kernel;
  Var gamma;
  Var beta;
  BatchNormStats stats;
  Int3 stride{};
  Int3 pad{0, 0, 0};

  Var operator()(Tape& tape, const Var& x, Mode mode, bool relu) {
    Var y = ops::conv3d(tape, x, kernel, stride, pad);
    y = ops::batchnorm(tape, y, gamma, beta, stats, mode);
    return relu ? ops::relu(tape, y) : y;
  }
};

std::unique_ptr<ConvBn> make_conv_bn(int cin, int cout, Int3 k, Int3 stride, Int3 pad,
                                     ParamFactory& f) {
  auto u = std::make_unique<ConvBn>();
  const auto fan_in = static_cast<std::size_t>(cin) * k.t * k.y * k.x;
  u->kernel = f.he_normal({static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                           static_cast<std::size_t>(k.t), static_cast<std::size_t>(k.y),
                           static_cast<std::size_t>(k.x)},
                          fan_in);
  const auto c = static_cast<std::size_t>(cout);
  u->stats = BatchNormStats::identity(c);
  u->gamma = make_leaf(NDTensor::full({c}, 1.0), true);
  u->beta = make_leaf(NDTensor({c}), true);
  u->stride = stride;
  u->pad = pad;
  return u;
}

void register_unit(Registry& reg, const std::string& prefix, ConvBn& u) {
  reg.add(prefix + ".conv.kernel", u.kernel);
  reg.add(prefix + ".bn.gamma", u.gamma);
  reg.add(prefix + ".bn.beta", u.beta);
  reg.buffers.emplace_back(prefix + ".bn.running_mean", &u.stats.running_mean);
  reg.buffers.emplace_back(prefix + ".bn.running_var", &u.stats.running_var);
}

struct ActivationShape {
  int channels, length, height, width;
};

class Block {
 public:
  virtual ~Block() = default;
  virtual Var forward(Tape& tape, const Var& x, Mode mode) = 0;
};

// 1x1x1 -> [3x1x1] -> 1x3x3 -> 1x1x1 bottleneck with residual shortcut.
class Bottleneck final : public Block {
 public:
  Bottleneck(const BlockSpec& b, ActivationShape& shape, ParamFactory& f, Registry& reg,
             const std::string& name) {
    temporal_ = b.kind == BlockKind::bottleneck_2plus1d;
    Int3 stride = b.stride;
    if (!temporal_ && stride.t > 1) {
      pool_first_ = true;  // temporal striding by max pooling
      stride.t = 1;
      shape.length = conv_output_extent(shape.length, 3, 2, 1);
    }
    reduce_ = make_conv_bn(b.in, b.mid, {1, 1, 1}, {}, {0, 0, 0}, f);
    register_unit(reg, name + ".reduce", *reduce_);
    if (temporal_) {
      temporal_conv_ = make_conv_bn(b.mid, b.mid, {3, 1, 1}, {stride.t, 1, 1}, {1, 0, 0}, f);
      register_unit(reg, name + ".temporal", *temporal_conv_);
    }
    spatial_ = make_conv_bn(b.mid, b.mid, {1, 3, 3}, {temporal_ ? 1 : stride.t, stride.y, stride.x},
                            {0, 1, 1}, f);
    register_unit(reg, name + ".spatial", *spatial_);
    expand_ = make_conv_bn(b.mid, b.out, {1, 1, 1}, {}, {0, 0, 0}, f);
    register_unit(reg, name + ".expand", *expand_);
    if (b.in != b.out || stride != Int3{}) {
      shortcut_ = make_conv_bn(b.in, b.out, {1, 1, 1}, stride, {0, 0, 0}, f);
      register_unit(reg, name + ".shortcut", *shortcut_);
    }
    shape.channels = b.out;
    shape.length = conv_output_extent(shape.length, 1, stride.t, 0);
    shape.height = conv_output_extent(shape.height, 1, stride.y, 0);
    shape.width = conv_output_extent(shape.width, 1, stride.x, 0);
  }

  Var forward(Tape& tape, const Var& input, Mode mode) override {
    Var x = pool_first_ ? ops::temporal_maxpool3(tape, input) : input;
    Var y = (*reduce_)(tape, x, mode, true);
    if (temporal_) y = (*temporal_conv_)(tape, y, mode, true);
    y = (*spatial_)(tape, y, mode, true);
    y = (*expand_)(tape, y, mode, false);
    Var skip = shortcut_ ? (*shortcut_)(tape, x, mode, false) : x;
    return ops::relu(tape, ops::add(tape, y, skip));
  }

 private:
  bool temporal_ = false;
  bool pool_first_ = false;
  std::unique_ptr<ConvBn> reduce_, temporal_conv_, spatial_, expand_, shortcut_;
};

class CorrelationBlock final : public Block {
 public:
  CorrelationBlock(const BlockSpec& b, const ActivationShape& shape, ParamFactory& f,
                   Registry& reg, const std::string& name)
      : concat_(b.kind == BlockKind::correlation_concat) {
    cfg_.kernel = b.corr->kernel;
    cfg_.dilation = b.corr->dilation;
    cfg_.groups = b.corr->groups;
    cfg_.learnable = b.corr->learnable;
    cfg_.channels = b.mid;
    cfg_.length = shape.length;
    cfg_.validate();

    reduce_ = make_conv_bn(b.in, b.mid, {1, 1, 1}, {}, {0, 0, 0}, f);
    register_unit(reg, name + ".reduce", *reduce_);

    const std::uint64_t filter_seed = f.next_seed();
    auto filter = cfg_.learnable ? CorrelationFilter::initialized(cfg_, filter_seed)
                                 : CorrelationFilter::ones(cfg_);
    filter_ = make_leaf(std::move(filter.weights), cfg_.learnable);
    if (cfg_.learnable) reg.add(name + ".corr.filter", filter_);

    const int corr_out = cfg_.output_channels();
    if (concat_) {
      side_ = make_conv_bn(b.in, b.out - corr_out, {1, 1, 1}, {}, {0, 0, 0}, f);
      register_unit(reg, name + ".pointwise", *side_);
    } else {
      restore_ = make_conv_bn(corr_out, b.out, {1, 1, 1}, {}, {0, 0, 0}, f);
      register_unit(reg, name + ".restore", *restore_);
    }
  }

  Var forward(Tape& tape, const Var& x, Mode mode) override {
    Var r = (*reduce_)(tape, x, mode, true);
    Var c = ops::correlation(tape, r, filter_, cfg_);
    if (concat_) return ops::concat_channels(tape, c, (*side_)(tape, x, mode, true));
    Var y = (*restore_)(tape, c, mode, false);
    return ops::relu(tape, ops::add(tape, y, x));
  }

  [[nodiscard]] const CorrelationConfig& config() const { return cfg_; }
  [[nodiscard]] const NDTensor& filter() const { return filter_->value; }
  void zero_restore() {
    if (!restore_) throw ConfigError("block has no restore convolution");
    restore_->kernel->value.fill(0.0);
  }

 private:
  bool concat_;
  CorrelationConfig cfg_;
  Var filter_;
  std::unique_ptr<ConvBn> reduce_, restore_, side_;
};

}  // namespace

struct Network::Impl {
  NetSpec spec;
  Registry reg;
  std::unique_ptr<ConvBn> stem;
  std::vector<std::pair<std::string, std::unique_ptr<Block>>> blocks;
  Var fc;
};

Network::Network(NetSpec spec, std::uint64_t seed) : impl_(std::make_unique<Impl>()) {
  spec.validate();
  impl_->spec = std::move(spec);
  const NetSpec& s = impl_->spec;
  ParamFactory f(seed);
  ActivationShape shape{s.input.channels, s.input.length, s.input.height, s.input.width};

  if (s.stem_channels > 0) {
    impl_->stem = make_conv_bn(s.input.channels, s.stem_channels, kStemKernel, kStemStride,
                               kStemPad, f);
    register_unit(impl_->reg, "stem", *impl_->stem);
    shape.channels = s.stem_channels;
    shape.height = conv_output_extent(shape.height, kStemKernel.y, kStemStride.y, kStemPad.y);
    shape.width = conv_output_extent(shape.width, kStemKernel.x, kStemStride.x, kStemPad.x);
  }
  for (const auto& stage : s.stages) {
    for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
      const BlockSpec& b = stage.blocks[i];
      const std::string name = stage.name + "." + std::to_string(i);
      std::unique_ptr<Block> blk;
      if (b.is_correlation()) {
        blk = std::make_unique<CorrelationBlock>(b, shape, f, impl_->reg, name);
      } else {
        blk = std::make_unique<Bottleneck>(b, shape, f, impl_->reg, name);
      }
      impl_->blocks.emplace_back(name, std::move(blk));
    }
  }
  impl_->fc = f.normal({static_cast<std::size_t>(s.num_classes),
                        static_cast<std::size_t>(shape.channels)},
                       0.01);
  impl_->reg.add("head.fc", impl_->fc);
}

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

Var Network::forward(Tape& tape, const Var& input, Mode mode) {
  return run(tape, input, mode, nullptr);
}

Var Network::run(Tape& tape, const Var& input, Mode mode,
                 std::vector<std::pair<std::string, Shape>>* trace) {
  const auto& in = impl_->spec.input;
  const auto& v = input->value;
  if (v.rank() != 5 || static_cast<int>(v.dim(1)) != in.channels ||
      static_cast<int>(v.dim(2)) != in.length || static_cast<int>(v.dim(3)) != in.height ||
      static_cast<int>(v.dim(4)) != in.width) {
    throw ShapeError("network input " + shape_to_string(v.shape()) + " does not match spec input");
  }
  Var x = input;
  if (impl_->stem) {
    x = (*impl_->stem)(tape, x, mode, true);
    if (trace) trace->emplace_back("stem", x->value.shape());
  }
  for (auto& [name, blk] : impl_->blocks) {
    x = blk->forward(tape, x, mode);
    if (trace) trace->emplace_back(name, x->value.shape());
  }
  Var logits = ops::linear(tape, ops::global_avgpool(tape, x), impl_->fc);
  if (trace) trace->emplace_back("head.fc", logits->value.shape());
  return logits;
}

std::vector<std::pair<std::string, Shape>> Network::trace_shapes(const NDTensor& batch) {
  std::vector<std::pair<std::string, Shape>> out;
  Tape tape(false);
  (void)run(tape, make_leaf(batch), Mode::eval, &out);
  return out;
}

NDTensor Network::predict(const NDTensor& batch) {
  Tape tape(false);
  return forward(tape, make_leaf(batch), Mode::eval)->value;
}

const NetSpec& Network::spec() const { return impl_->spec; }

const std::vector<NamedParameter>& Network::parameters() const { return impl_->reg.params; }

std::vector<NamedBuffer> Network::buffers() {
  std::vector<NamedBuffer> out;
  for (auto& [name, t] : impl_->reg.buffers) out.push_back({name, t});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : impl_->reg.params) n += p.var->value.size();
  return n;
}

Var Network::parameter(const std::string& name) const {
  for (const auto& p : impl_->reg.params) {
    if (p.name == name) return p.var;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

std::vector<std::string> Network::correlation_blocks() const {
  std::vector<std::string> out;
  for (const auto& [name, blk] : impl_->blocks) {
    if (dynamic_cast<const CorrelationBlock*>(blk.get())) out.push_back(name);
  }
  return out;
}

namespace {

CorrelationBlock& find_corr(std::vector<std::pair<std::string, std::unique_ptr<Block>>>& blocks,
                            const std::string& name) {
  for (auto& [n, blk] : blocks) {
    if (n != name) continue;
    if (auto* c = dynamic_cast<CorrelationBlock*>(blk.get())) return *c;
    throw ConfigError("block '" + name + "' is not a correlation block");
  }
  throw ConfigError("block '" + name + "' not found");
}

}  // namespace

CorrelationConfig Network::correlation_config(const std::string& block) const {
  return find_corr(impl_->blocks, block).config();
}

NDTensor Network::correlation_filter(const std::string& block) const {
  return find_corr(impl_->blocks, block).filter();
}

void Network::zero_restore_conv(const std::string& block) {
  find_corr(impl_->blocks, block).zero_restore();
}

}  // namespace corrnet
