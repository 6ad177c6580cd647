#pragma once

// MSDG container: a flat list of named float32 arrays.
//
//   "MSDG"                      4 bytes magic
//   version                     u32 LE
//   array count                 u32 LE
//   per array:
//     name length               u32 LE
//     name                      UTF-8 bytes, no terminator
//     rank                      u32 LE
//     dims                      rank x u32 LE
//     data                      prod(dims) x IEEE-754 float32 LE, row-major
//
// Arrays keep their insertion order so a read/write cycle reproduces the
// input bytes exactly. A file may hold several containers back to back.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

inline constexpr char kContainerMagic[4] = {'M', 'S', 'D', 'G'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

inline std::string shape_string(const std::vector<std::uint32_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
  os << "]";
  return os.str();
}

// Named arrays with exact-shape lookup. Read-only after load in normal use.
class WeightStore {
 public:
  void add(NamedArray array) {
    if (array.data.size() != array.element_count()) {
      throw ShapeError("array '" + array.name + "' data length does not match shape " +
                       shape_string(array.shape));
    }
    if (index_.count(array.name)) {
      throw FormatError("duplicate array name '" + array.name + "'");
    }
    index_.emplace(array.name, arrays_.size());
    arrays_.push_back(std::move(array));
  }

  void add(std::string name, std::vector<std::uint32_t> shape, std::vector<float> data) {
    add(NamedArray{std::move(name), std::move(shape), std::move(data)});
  }

  void add_matrix(std::string name, const Matrix& m) {
    std::vector<float> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        data[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
    add(std::move(name),
        {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
        std::move(data));
  }

  void add_vector(std::string name, const Vector& v) {
    std::vector<float> data(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) data[static_cast<std::size_t>(k)] = static_cast<float>(v(k));
    add(std::move(name), {static_cast<std::uint32_t>(v.size())}, std::move(data));
  }

  void add_scalar(std::string name, double value) {
    add(std::move(name), {1}, {static_cast<float>(value)});
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  const NamedArray& get(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw MissingWeightsError("missing array '" + std::string(name) + "'");
    }
    return arrays_[it->second];
  }

  // Fails loudly unless the stored shape equals `shape` exactly.
  const NamedArray& get(std::string_view name, const std::vector<std::uint32_t>& shape) const {
    const NamedArray& a = get(name);
    if (a.shape != shape) {
      throw ShapeError("array '" + std::string(name) + "' has shape " + shape_string(a.shape) +
                       ", expected " + shape_string(shape));
    }
    return a;
  }

  Matrix matrix(std::string_view name, std::uint32_t rows, std::uint32_t cols) const {
    const NamedArray& a = get(name, {rows, cols});
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = a.data[std::size_t{r} * cols + c];
    return m;
  }

  Matrix matrix(std::string_view name) const {
    const NamedArray& a = get(name);
    if (a.shape.size() != 2) {
      throw ShapeError("array '" + std::string(name) + "' is not a matrix");
    }
    return matrix(name, a.shape[0], a.shape[1]);
  }

  Vector vector(std::string_view name) const {
    const NamedArray& a = get(name);
    if (a.shape.size() != 1) {
      throw ShapeError("array '" + std::string(name) + "' is not a vector");
    }
    Vector v(static_cast<Eigen::Index>(a.data.size()));
    for (std::size_t k = 0; k < a.data.size(); ++k) v(static_cast<Eigen::Index>(k)) = a.data[k];
    return v;
  }

  double scalar(std::string_view name) const { return get(name, {1}).data[0]; }

  const std::vector<NamedArray>& arrays() const { return arrays_; }
  std::size_t size() const { return arrays_.size(); }

  friend bool operator==(const WeightStore& a, const WeightStore& b) {
    if (a.arrays_.size() != b.arrays_.size()) return false;
    for (std::size_t k = 0; k < a.arrays_.size(); ++k) {
      const auto& x = a.arrays_[k];
      const auto& y = b.arrays_[k];
      if (x.name != y.name || x.shape != y.shape || x.data.size() != y.data.size()) return false;
      if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0)
        return false;
    }
    return true;
  }

 private:
  std::vector<NamedArray> arrays_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = std::uint32_t{bytes[0]} | (std::uint32_t{bytes[1]} << 8) | (std::uint32_t{bytes[2]} << 16) |
      (std::uint32_t{bytes[3]} << 24);
  return true;
}

inline std::uint32_t require_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw FormatError(std::string("truncated MSDG container while reading ") + what);
  return v;
}

}  // namespace detail

inline void write_container(std::ostream& out, const WeightStore& store) {
  out.write(kContainerMagic, 4);
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const NamedArray& a : store.arrays()) {
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) detail::put_u32(out, d);
    for (float f : a.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw FormatError("failed writing MSDG container");
}

// Reads one container. Returns false on clean end-of-stream before the magic.
inline bool read_container(std::istream& in, WeightStore& store) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() == 0 && in.eof()) return false;
  if (in.gcount() != 4 || std::memcmp(magic, kContainerMagic, 4) != 0) {
    throw FormatError("bad MSDG magic");
  }
  const std::uint32_t version = detail::require_u32(in, "version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported MSDG version " + std::to_string(version));
  }
  const std::uint32_t count = detail::require_u32(in, "array count");
  WeightStore result;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    const std::uint32_t name_len = detail::require_u32(in, "name length");
    a.name.resize(name_len);
    if (!in.read(a.name.data(), name_len)) throw FormatError("truncated MSDG array name");
    const std::uint32_t rank = detail::require_u32(in, "rank");
    a.shape.resize(rank);
    std::uint64_t n = 1;
    for (auto& d : a.shape) {
      d = detail::require_u32(in, "dims");
      n *= d;
    }
    if (n > (std::uint64_t{1} << 32)) throw FormatError("MSDG array '" + a.name + "' too large");
    a.data.resize(static_cast<std::size_t>(n));
    for (auto& f : a.data) f = std::bit_cast<float>(detail::require_u32(in, "data"));
    result.add(std::move(a));
  }
  store = std::move(result);
  return true;
}

inline void save_container(const std::string& path, const WeightStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_container(out, store);
}

inline WeightStore load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  WeightStore store;
  if (!read_container(in, store)) throw FormatError("'" + path + "' is empty");
  return store;
}

inline std::vector<WeightStore> load_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<WeightStore> records;
  WeightStore store;
  while (read_container(in, store)) records.push_back(std::move(store));
  return records;
}

}  // namespace msdgr
