#include "trackcast/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "trackcast/errors.hpp"

namespace trackcast::num {

namespace {

constexpr char kMagic[6] = {'T', 'C', 'K', 'P', 'T', '\n'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename U>
void write_raw(std::ofstream& os, const U& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(U));
}

template <typename U>
U read_raw(std::ifstream& is) {
  U x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(U));
  if (!is) throw SchemaError("checkpoint: truncated file");
  return x;
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;
}

template <typename T>
void save_impl(const std::string& path, const std::vector<Parameter<T>>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_raw(os, kCheckpointVersion);
  write_raw(os, static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    write_raw(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_raw(os, dtype_tag<T>());
    write_raw(os, static_cast<std::uint32_t>(p.value.shape.size()));
    for (std::size_t e : p.value.shape) write_raw(os, static_cast<std::uint64_t>(e));
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

void read_header(std::ifstream& is, const std::string& path, std::uint64_t& count) {
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError("checkpoint: bad magic bytes in " + path);
  }
  auto version = read_raw<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
  }
  count = read_raw<std::uint64_t>(is);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter<float>>& params) {
  save_impl(path, params);
}
void save_checkpoint(const std::string& path, const std::vector<Parameter<double>>& params) {
  save_impl(path, params);
}

template <typename T>
std::vector<Parameter<T>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint64_t count = 0;
  read_header(is, path, count);
  std::vector<Parameter<T>> params;
  params.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name_len = read_raw<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    auto tag = read_raw<std::uint8_t>(is);
    if (tag != dtype_tag<T>()) {
      throw SchemaError("checkpoint: dtype mismatch for parameter '" + name + "'");
    }
    auto ndim = read_raw<std::uint32_t>(is);
    Shape shape(ndim);
    for (auto& e : shape) e = static_cast<std::size_t>(read_raw<std::uint64_t>(is));
    Tensor<T> value(shape);
    is.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(T)));
    if (!is) throw SchemaError("checkpoint: truncated payload for '" + name + "'");
    params.emplace_back(std::move(name), std::move(value));
  }
  return params;
}

template std::vector<Parameter<float>> load_checkpoint<float>(const std::string&);
template std::vector<Parameter<double>> load_checkpoint<double>(const std::string&);

int checkpoint_dtype(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint64_t count = 0;
  read_header(is, path, count);
  if (count == 0) return -1;
  auto name_len = read_raw<std::uint32_t>(is);
  is.seekg(name_len, std::ios::cur);
  return static_cast<int>(read_raw<std::uint8_t>(is));
}

}  // namespace trackcast::num
