#include "corrnet/netspec.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace corrnet {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::bottleneck_2plus1d: return "bottleneck_2plus1d";
    case BlockKind::bottleneck_2d: return "bottleneck_2d";
    case BlockKind::correlation_sum: return "correlation_sum";
    case BlockKind::correlation_concat: return "correlation_concat";
  }
  throw InternalError("unknown block kind");
}

BlockKind parse_block_kind(const std::string& s) {
  for (auto k : {BlockKind::bottleneck_2plus1d, BlockKind::bottleneck_2d,
                 BlockKind::correlation_sum, BlockKind::correlation_concat}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown block kind '" + s + "'");
}

int BlockSpec::correlation_channels() const {
  if (!corr) return 0;
  return corr->groups * corr->kernel * corr->kernel;
}

void BlockSpec::validate() const {
  if (in < 1 || mid < 1 || out < 1) throw ConfigError("block widths must be positive");
  if (stride.t < 1 || stride.y < 1 || stride.x < 1) throw ConfigError("block stride must be >= 1");
  if (is_correlation()) {
    if (!corr) throw ConfigError(to_string(kind) + " block requires correlation settings");
    if (in != out) throw ConfigError("correlation blocks must preserve the channel count");
    if (stride != Int3{}) throw ConfigError("correlation blocks do not stride");
    if (corr->kernel < 1 || corr->kernel % 2 == 0) throw ConfigError("correlation K must be odd");
    if (corr->dilation < 1 || corr->groups < 1) throw ConfigError("correlation D, G must be >= 1");
    if (mid % corr->groups != 0) {
      throw ConfigError("mid channels " + std::to_string(mid) + " not divisible by G=" +
                        std::to_string(corr->groups));
    }
    if (kind == BlockKind::correlation_concat && correlation_channels() >= out) {
      throw ConfigError("correlation_concat: correlation branch (" +
                        std::to_string(correlation_channels()) +
                        " channels) leaves no room for the pointwise branch within C=" +
                        std::to_string(out));
    }
  } else if (corr) {
    throw ConfigError("residual blocks take no correlation settings");
  }
}

namespace {

int temporal_out(const BlockSpec& b, int L) {
  // bottleneck_2d realizes temporal striding with kernel-3 max pooling,
  // which has the same output length as a stride-2 "same" convolution.
  return b.stride.t == 1 ? L : conv_output_extent(L, 3, b.stride.t, 1);
}

}  // namespace

void NetSpec::validate() const {
  if (input.channels < 1 || input.length < 1 || input.height < 1 || input.width < 1) {
    throw ConfigError("input extents must be positive");
  }
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (stem_channels < 0) throw ConfigError("stem channels must be >= 0");

  static const std::vector<std::string> allowed{"res2", "res3", "res4"};
  for (const auto& s : corr_insertions) {
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      throw ConfigError("correlation insertion '" + s + "' not in {res2, res3, res4}");
    }
  }

  int channels = stem_channels > 0 ? stem_channels : input.channels;
  int L = input.length;
  std::map<std::string, int> stage_length;
  for (const auto& stage : stages) {
    const bool listed = std::find(corr_insertions.begin(), corr_insertions.end(), stage.name) !=
                        corr_insertions.end();
    bool has_corr = false;
    for (const auto& b : stage.blocks) {
      b.validate();
      if (b.in != channels) {
        throw ConfigError("stage " + stage.name + ": block expects " + std::to_string(b.in) +
                          " input channels, previous layer gives " + std::to_string(channels));
      }
      if (b.is_correlation()) {
        if (!listed) {
          throw ConfigError("stage " + stage.name +
                            " has a correlation block but is not a correlation insertion point");
        }
        has_corr = true;
      }
      L = temporal_out(b, L);
      channels = b.out;
    }
    if (listed && !has_corr) {
      throw ConfigError("stage " + stage.name + " listed for correlation but has no such block");
    }
    stage_length[stage.name] = L;
  }
  for (const auto& s : corr_insertions) {
    if (!stage_length.contains(s)) throw ConfigError("correlation insertion at missing stage " + s);
  }

  // Temporal downsampling: L, L, L/2, L/4 after res2..res5.
  if (stage_length.size() == 4 && stage_length.contains("res2") && stage_length.contains("res5")) {
    const int full = input.length;
    const int half = conv_output_extent(full, 3, 2, 1);
    const int quarter = conv_output_extent(half, 3, 2, 1);
    if (stage_length["res2"] != full || stage_length["res3"] != full ||
        stage_length["res4"] != half || stage_length["res5"] != quarter) {
      throw ConfigError("temporal downsampling must give L, L, L/2, L/4 at res2..res5");
    }
  }
}

std::string to_text(const NetSpec& spec) {
  std::ostringstream os;
  os << "netspec v1\n";
  os << "name " << spec.name << "\n";
  os << "input " << spec.input.channels << ' ' << spec.input.length << ' ' << spec.input.height
     << ' ' << spec.input.width << "\n";
  os << "classes " << spec.num_classes << "\n";
  os << "stem " << spec.stem_channels << "\n";
  os << "corr_insertions";
  for (const auto& s : spec.corr_insertions) os << ' ' << s;
  os << "\n";
  for (const auto& stage : spec.stages) {
    os << "stage " << stage.name << "\n";
    for (const auto& b : stage.blocks) {
      os << "block kind=" << to_string(b.kind) << " in=" << b.in << " mid=" << b.mid
         << " out=" << b.out << " stride=" << b.stride.t << ',' << b.stride.y << ','
         << b.stride.x;
      if (b.corr) {
        os << " K=" << b.corr->kernel << " D=" << b.corr->dilation << " G=" << b.corr->groups
           << " learnable=" << (b.corr->learnable ? 1 : 0);
      }
      os << "\n";
    }
  }
  os << "end\n";
  return os.str();
}

namespace {

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("netspec: bad integer for " + what + ": '" + s + "'");
  }
}

Int3 parse_int3(const std::string& s) {
  Int3 v;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> v.t >> c1 >> v.y >> c2 >> v.x) || c1 != ',' || c2 != ',') {
    throw ConfigError("netspec: bad stride '" + s + "'");
  }
  return v;
}

BlockSpec parse_block(std::istringstream& line) {
  std::map<std::string, std::string> kv;
  std::string tok;
  while (line >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("netspec: expected key=value, got '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("netspec: block missing '" + key + "'");
    return it->second;
  };
  BlockSpec b;
  b.kind = parse_block_kind(need("kind"));
  b.in = parse_int(need("in"), "in");
  b.mid = parse_int(need("mid"), "mid");
  b.out = parse_int(need("out"), "out");
  b.stride = parse_int3(need("stride"));
  if (kv.contains("K")) {
    CorrelationSettings c;
    c.kernel = parse_int(need("K"), "K");
    c.dilation = parse_int(need("D"), "D");
    c.groups = parse_int(need("G"), "G");
    c.learnable = parse_int(need("learnable"), "learnable") != 0;
    b.corr = c;
  }
  return b;
}

}  // namespace

NetSpec netspec_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  bool header = false, ended = false;
  NetSpec spec;
  spec.stages.clear();
  while (std::getline(in, raw)) {
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream line(raw);
    std::string key;
    if (!(line >> key)) continue;
    if (!header) {
      std::string version;
      line >> version;
      if (key != "netspec" || version != "v1") {
        throw ConfigError("netspec: expected header 'netspec v1'");
      }
      header = true;
      continue;
    }
    if (ended) throw ConfigError("netspec: content after 'end'");
    if (key == "name") {
      line >> spec.name;
    } else if (key == "input") {
      std::string c, l, h, w;
      line >> c >> l >> h >> w;
      spec.input = {parse_int(c, "input"), parse_int(l, "input"), parse_int(h, "input"),
                    parse_int(w, "input")};
    } else if (key == "classes") {
      std::string v;
      line >> v;
      spec.num_classes = parse_int(v, "classes");
    } else if (key == "stem") {
      std::string v;
      line >> v;
      spec.stem_channels = parse_int(v, "stem");
    } else if (key == "corr_insertions") {
      std::string s;
      while (line >> s) spec.corr_insertions.push_back(s);
    } else if (key == "stage") {
      StageSpec st;
      line >> st.name;
      spec.stages.push_back(st);
    } else if (key == "block") {
      if (spec.stages.empty()) throw ConfigError("netspec: block before any stage");
      spec.stages.back().blocks.push_back(parse_block(line));
    } else if (key == "end") {
      ended = true;
    } else {
      throw ConfigError("netspec: unknown key '" + key + "'");
    }
  }
  if (!header) throw ConfigError("netspec: empty input");
  if (!ended) throw ConfigError("netspec: missing 'end'");
  spec.validate();
  return spec;
}

NetSpec load_netspec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open netspec " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return netspec_from_text(os.str());
}

void save_netspec(const NetSpec& spec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write netspec " + path);
  f << to_text(spec);
  if (!f) throw IoError("write failed for " + path);
}

namespace {

struct StageLayout {
  const char* name;
  int out;
  Int3 stride;
};

BlockSpec residual(BlockKind kind, int in, int out, Int3 stride) {
  return BlockSpec{kind, in, out / 4, out, stride, std::nullopt};
}

BlockSpec correlation_block(int channels, const CorrNetOptions& o) {
  BlockSpec b;
  b.kind = o.block;
  b.in = b.out = channels;
  b.mid = channels / 4;
  CorrelationSettings c;
  c.kernel = o.kernel;
  c.dilation = o.dilation;
  c.learnable = o.learnable;
  if (o.grouping) {
    if (o.group_size < 1 || b.mid % o.group_size != 0) {
      throw ConfigError("group size " + std::to_string(o.group_size) +
                        " does not divide reduced width " + std::to_string(b.mid));
    }
    c.groups = b.mid / o.group_size;
  } else {
    c.groups = 1;
  }
  b.corr = c;
  return b;
}

constexpr StageLayout kTinyStages[] = {
    {"res2", 32, {1, 1, 1}},
    {"res3", 64, {1, 2, 2}},
    {"res4", 128, {2, 2, 2}},
    {"res5", 256, {2, 2, 2}},
};

constexpr StageLayout kPaperStages[] = {
    {"res2", 256, {1, 2, 2}},
    {"res3", 512, {1, 2, 2}},
    {"res4", 1024, {2, 2, 2}},
    {"res5", 2048, {2, 2, 2}},
};

// Stages with `blocks` residual blocks each. The stride sits on the first
// block of a stage.
std::vector<StageSpec> backbone(std::span<const StageLayout> layout, int blocks, int stem,
                                BlockKind res2_kind, BlockKind kind) {
  std::vector<StageSpec> stages;
  int in = stem;
  for (std::size_t s = 0; s < layout.size(); ++s) {
    StageSpec st{layout[s].name, {}};
    for (int b = 0; b < blocks; ++b) {
      const BlockKind k = s == 0 ? res2_kind : kind;
      st.blocks.push_back(residual(k, in, layout[s].out, b == 0 ? layout[s].stride : Int3{}));
      in = layout[s].out;
    }
    stages.push_back(std::move(st));
  }
  return stages;
}

void insert_correlation(NetSpec& spec, const CorrNetOptions& opts) {
  for (auto& st : spec.stages) {
    if (st.name == "res5") continue;
    st.blocks.push_back(correlation_block(st.blocks.back().out, opts));
    spec.corr_insertions.push_back(st.name);
  }
}

}  // namespace

NetSpec build_corrnet_tiny(const CorrNetOptions& opts) {
  NetSpec spec;
  spec.name = "corrnet-tiny";
  spec.input = {3, 8, 32, 32};
  spec.stem_channels = 16;
  spec.num_classes = opts.num_classes;
  spec.stages = backbone(kTinyStages, 1, spec.stem_channels, BlockKind::bottleneck_2d,
                         BlockKind::bottleneck_2plus1d);
  insert_correlation(spec, opts);
  spec.validate();
  return spec;
}

NetSpec build_corrnet_paper26(int clip_length, int num_classes) {
  NetSpec spec;
  spec.name = "corrnet-26";
  spec.input = {3, clip_length, 224, 224};
  spec.stem_channels = 32;
  spec.num_classes = num_classes;
  spec.stages = backbone(kPaperStages, 2, spec.stem_channels, BlockKind::bottleneck_2d,
                         BlockKind::bottleneck_2plus1d);
  CorrNetOptions opts;
  opts.kernel = 7;
  opts.dilation = 2;
  opts.group_size = 32;
  insert_correlation(spec, opts);
  spec.validate();
  return spec;
}

BaselineKind parse_baseline_kind(const std::string& s) {
  if (s == "r2d") return BaselineKind::r2d;
  if (s == "r2plus1d") return BaselineKind::r2plus1d;
  throw ConfigError("unknown baseline kind '" + s + "'");
}

NetSpec build_baseline(BaselineKind kind, Scale scale, int num_classes) {
  NetSpec spec;
  const bool tiny = scale == Scale::tiny;
  const BlockKind k =
      kind == BaselineKind::r2d ? BlockKind::bottleneck_2d : BlockKind::bottleneck_2plus1d;
  spec.name = std::string(kind == BaselineKind::r2d ? "r2d" : "r2plus1d") +
              (tiny ? "-tiny" : "-26");
  spec.input = tiny ? InputShape{3, 8, 32, 32} : InputShape{3, 32, 224, 224};
  // The correlation network halves the stem; baselines keep the full width.
  spec.stem_channels = tiny ? 32 : 64;
  spec.num_classes = num_classes;
  spec.stages = tiny ? backbone(kTinyStages, 1, spec.stem_channels, k, k)
                     : backbone(kPaperStages, 2, spec.stem_channels, k, k);
  spec.validate();
  return spec;
}

NetSpec resolve_netspec(const std::string& name_or_path) {
  if (name_or_path == "corrnet-tiny") return build_corrnet_tiny();
  if (name_or_path == "r2d-tiny") return build_baseline(BaselineKind::r2d, Scale::tiny);
  if (name_or_path == "r2plus1d-tiny") return build_baseline(BaselineKind::r2plus1d, Scale::tiny);
  if (name_or_path == "r2d-26") return build_baseline(BaselineKind::r2d, Scale::paper26, 400);
  if (name_or_path == "r2plus1d-26") {
    return build_baseline(BaselineKind::r2plus1d, Scale::paper26, 400);
  }
  if (name_or_path == "corrnet-26") return build_corrnet_paper26();
  if (name_or_path == "linear") {
    NetSpec spec;
    spec.name = "linear";
    spec.input = {3, 4, 8, 8};
    spec.stem_channels = 0;
    spec.num_classes = 4;
    spec.validate();
    return spec;
  }
  if (!std::filesystem::exists(name_or_path)) {
    throw IoError("netspec '" + name_or_path + "' is neither a preset nor a readable file");
  }
  return load_netspec(name_or_path);
}

NetSpec strip_correlation(const NetSpec& spec) {
  NetSpec out = spec;
  out.corr_insertions.clear();
  for (auto& st : out.stages) {
    std::erase_if(st.blocks, [](const BlockSpec& b) { return b.is_correlation(); });
  }
  out.validate();
  return out;
}

}  // namespace corrnet
