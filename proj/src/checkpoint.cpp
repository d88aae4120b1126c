#include "bast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

BAST_NAMESPACE_BEGIN

namespace {

constexpr char kMagic[8] = {'B', 'A', 'S', 'T', 'T', 'N', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw RunError("truncated tensor file header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

std::uint32_t float_bits_le(float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return u;
}

float float_from_le(std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return std::bit_cast<float>(u);
}

}  // namespace

const Tensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  if (file.tag.find('\n') != std::string::npos) throw ParameterError("tensor file tag must be a single line");
  std::ostringstream manifest;
  manifest << "tag " << file.tag << '\n';
  std::size_t offset = 0;
  for (const auto& t : file.tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
      throw ParameterError("tensor name '" + t.name + "' must be non-empty without whitespace");
    }
    manifest << "tensor " << t.name << ' ' << t.tensor.rank();
    for (auto e : t.tensor.shape()) manifest << ' ' << e;
    manifest << ' ' << offset << '\n';
    offset += t.tensor.numel();
  }
  const std::string text = manifest.str();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RunError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<std::uint32_t> buf;
  for (const auto& t : file.tensors) {
    auto d = t.tensor.data();
    buf.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) buf[i] = float_bits_le(static_cast<float>(d[i]));
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!os) throw RunError("write failed for " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RunError("cannot open tensor file " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw RunError(path.string() + " is not a tensor file");
  if (get_u32(is) != kVersion) throw RunError("unsupported tensor file version in " + path.string());
  const std::uint32_t len = get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw RunError("truncated manifest in " + path.string());

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  TensorFile file;
  std::vector<Entry> entries;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "tag") {
      std::getline(ls >> std::ws, file.tag);
    } else if (kind == "tensor") {
      Entry e;
      std::size_t rank = 0;
      ls >> e.name >> rank;
      e.shape.resize(rank);
      for (auto& d : e.shape) ls >> d;
      ls >> e.offset;
      if (!ls) throw RunError("malformed manifest line '" + line + "' in " + path.string());
      entries.push_back(std::move(e));
    } else if (!kind.empty()) {
      throw RunError("unknown manifest record '" + kind + "' in " + path.string());
    }
  }
  const auto payload_start = is.tellg();
  std::vector<std::uint32_t> buf;
  for (const auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    buf.resize(n);
    is.seekg(payload_start + static_cast<std::streamoff>(e.offset * 4));
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4))) {
      throw RunError("truncated payload for '" + e.name + "' in " + path.string());
    }
    std::vector<Real> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<Real>(float_from_le(buf[i]));
    file.tensors.push_back({e.name, Tensor(e.shape, std::move(values))});
  }
  return file;
}

BAST_NAMESPACE_END
