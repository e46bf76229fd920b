#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgkit/errors.hpp"

namespace stgkit {

// Dense row-major tensor of rank 1..3.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(element_count(), 0.0);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != element_count())
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  const std::vector<std::size_t>& shape() const { return shape_; }

  double& operator()(std::size_t i) { return data_[i]; }
  double operator()(std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Rank-2 row view.
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * shape_[1], shape_[1]};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * shape_[1], shape_[1]}; }

  std::span<const double> flat() const { return data_; }
  std::span<double> flat() { return data_; }

  bool finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 3)
      throw std::invalid_argument("Tensor: rank must be 1, 2, or 3");
    for (std::size_t d : shape_)
      if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
  }

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

static_assert(std::endian::native == std::endian::little,
              "tensor file format assumes a little-endian host");

// File layout: one JSON header line {"shape":[...]}, then the payload as
// little-endian float64, row-major.
inline void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_tensor: cannot open " + path);
  std::string header = "{\"shape\":[";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i > 0) header += ',';
    header += std::to_string(t.dim(i));
  }
  header += "]}\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.flat().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_tensor: write failed for " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_tensor: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw schema_error("load_tensor: missing header line");
  const std::size_t open = header.find('[');
  const std::size_t close = header.find(']');
  if (header.rfind("{\"shape\":", 0) != 0 || open == std::string::npos || close == std::string::npos)
    throw schema_error("load_tensor: malformed header: " + header);
  std::vector<std::size_t> shape;
  std::size_t pos = open + 1;
  while (pos < close) {
    std::size_t next = header.find(',', pos);
    if (next == std::string::npos || next > close) next = close;
    shape.push_back(static_cast<std::size_t>(std::stoull(header.substr(pos, next - pos))));
    pos = next + 1;
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.flat().data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(double))
    throw schema_error("load_tensor: truncated payload in " + path);
  return t;
}

}  // namespace stgkit
