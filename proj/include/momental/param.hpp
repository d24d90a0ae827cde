#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "momental/error.hpp"

namespace momental {

/// A named contiguous slice of a flat parameter buffer.
struct ShapeEntry {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const ShapeEntry &) const = default;
};

/// Flat buffer of parameters plus a manifest describing its logical groups.
///
/// The manifest is metadata only: every optimizer operates elementwise on
/// the flat buffer. Manifest entries must tile the buffer contiguously from
/// offset zero.
class ParamVector {
public:
  ParamVector() = default;

  /// Single anonymous group covering all of `data`.
  explicit ParamVector(std::vector<double> data)
      : data_(std::move(data)), manifest_{{"params", 0, data_.size()}} {}

  ParamVector(std::vector<double> data, std::vector<ShapeEntry> manifest)
      : data_(std::move(data)), manifest_(std::move(manifest)) {
    std::size_t expected_offset = 0;
    for (const auto &entry : manifest_) {
      if (entry.offset != expected_offset)
        throw DimensionError(expected_offset, entry.offset);
      expected_offset += entry.length;
    }
    if (expected_offset != data_.size())
      throw DimensionError(data_.size(), expected_offset);
  }

  std::size_t size() const noexcept { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double &operator[](std::size_t i) { return data_[i]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<ShapeEntry> &manifest() const noexcept { return manifest_; }

  /// Same manifest, new values. Length must match.
  ParamVector with_values(std::vector<double> data) const {
    if (data.size() != data_.size())
      throw DimensionError(data_.size(), data.size());
    ParamVector out;
    out.data_ = std::move(data);
    out.manifest_ = manifest_;
    return out;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

  bool operator==(const ParamVector &) const = default;

private:
  std::vector<double> data_;
  std::vector<ShapeEntry> manifest_;
};

/// Gradient with respect to a ParamVector; same length, no manifest.
using GradVector = std::vector<double>;

/// Returns y + a*x elementwise.
inline ParamVector axpy(double a, std::span<const double> x,
                        const ParamVector &y) {
  if (x.size() != y.size())
    throw DimensionError(y.size(), x.size());
  std::vector<double> out(y.values().begin(), y.values().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += a * x[i];
  return y.with_values(std::move(out));
}

inline std::vector<double> elementwise_min(std::span<const double> x,
                                           std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError(x.size(), y.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::min(x[i], y[i]);
  return out;
}

} // namespace momental
