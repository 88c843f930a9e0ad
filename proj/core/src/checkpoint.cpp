#include <cstring>
#include <fstream>

#include "corrnet/error.hpp"
#include "corrnet/train.hpp"

namespace corrnet {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'C', 'K'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <class T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensors(const std::vector<NamedTensor>& ts) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) {
      str(t.name);
      pod<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
      for (std::size_t e : t.value.shape()) pod<std::uint64_t>(e);
      os_.write(reinterpret_cast<const char*>(t.value.data().data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    }
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <class T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 30)) fail();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::vector<NamedTensor> tensors() {
    const auto n = pod<std::uint32_t>();
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < n; ++i) {
      NamedTensor t;
      t.name = str();
      const auto rank = pod<std::uint32_t>();
      if (rank == 0 || rank > 8) fail();
      Shape shape(rank);
      for (auto& e : shape) e = pod<std::uint64_t>();
      std::vector<double> data(shape_product(shape));
      read(reinterpret_cast<char*>(data.data()), data.size() * sizeof(double));
      t.value = NDTensor(std::move(shape), std::move(data));
      out.push_back(std::move(t));
    }
    return out;
  }

 private:
  void read(char* dst, std::size_t n) {
    if (!is_.read(dst, static_cast<std::streamsize>(n))) fail();
  }
  [[noreturn]] void fail() { throw IoError(path_ + ": truncated or corrupt checkpoint"); }

  std::istream& is_;
  std::string path_;
};

}  // namespace

const NDTensor& Checkpoint::parameter(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("checkpoint has no parameter '" + name + "'");
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  Writer w(os);
  w.pod<std::uint32_t>(ck.version);
  w.str(ck.netspec_text);
  w.str(ck.config_text);
  w.pod<std::int32_t>(ck.epoch);
  w.str(ck.rng_state);
  w.tensors(ck.parameters);
  w.tensors(ck.buffers);
  w.tensors(ck.momentum);
  if (!os) throw IoError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path + ": not a checkpoint file");
  }
  Reader r(is, path);
  Checkpoint ck;
  ck.version = r.pod<std::uint32_t>();
  if (ck.version != Checkpoint::kVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.netspec_text = r.str();
  ck.config_text = r.str();
  ck.epoch = r.pod<std::int32_t>();
  ck.rng_state = r.str();
  ck.parameters = r.tensors();
  ck.buffers = r.tensors();
  ck.momentum = r.tensors();
  return ck;
}

namespace {

void copy_into(NDTensor& dst, const NDTensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw ConfigError("checkpoint tensor '" + name + "' has shape " + shape_to_string(src.shape()) +
                      ", network expects " + shape_to_string(dst.shape()));
  }
  dst = src;
}

const NamedTensor& find(const std::vector<NamedTensor>& ts, const std::string& name) {
  for (const auto& t : ts) {
    if (t.name == name) return t;
  }
  throw ConfigError("checkpoint is missing tensor '" + name + "'");
}

}  // namespace

Network network_from_checkpoint(const Checkpoint& ck) {
  Network net(netspec_from_text(ck.netspec_text), 0);
  for (const auto& p : net.parameters()) {
    copy_into(p.var->value, find(ck.parameters, p.name).value, p.name);
  }
  for (const auto& b : net.buffers()) copy_into(*b.tensor, find(ck.buffers, b.name).value, b.name);
  return net;
}

}  // namespace corrnet
