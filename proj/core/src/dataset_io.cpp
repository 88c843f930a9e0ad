#include <bit>
#include <cstring>
#include <fstream>

#include "corrnet/data.hpp"
#include "corrnet/error.hpp"

namespace corrnet {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'V', 'D', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(path + ": truncated dataset file");
  return v;
}

}  // namespace

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  Shape shape = d.samples.empty() ? Shape{3, 0, 0, 0} : d.samples.front().clip.shape();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d.samples.size()));
  for (std::size_t e : shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d.num_classes));
  std::vector<float> buf;
  for (const auto& s : d.samples) {
    if (s.clip.shape() != shape) throw ShapeError("write_dataset: clips differ in shape");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.label));
    put<std::uint64_t>(os, s.meta.seed);
    buf.assign(s.clip.data().begin(), s.clip.data().end());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path + ": not an SVD1 dataset");
  }
  const auto n = get<std::uint32_t>(is, path);
  Shape shape(4);
  for (auto& e : shape) e = get<std::uint32_t>(is, path);
  Dataset d;
  d.num_classes = static_cast<int>(get<std::uint32_t>(is, path));
  d.samples.reserve(n);
  std::vector<float> buf(shape_product(shape));
  for (std::uint32_t i = 0; i < n; ++i) {
    VideoSample s;
    s.label = static_cast<int>(get<std::uint32_t>(is, path));
    if (s.label >= d.num_classes) throw IoError(path + ": label out of range");
    s.meta.seed = get<std::uint64_t>(is, path);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw IoError(path + ": truncated dataset file");
    }
    s.clip = NDTensor(shape, std::vector<double>(buf.begin(), buf.end()));
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace corrnet
