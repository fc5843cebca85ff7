#pragma once

// Core value types shared by every module: image shapes, normalized
// attribution maps, stacked attributions and simplex weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace xagg {

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateCorrelation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File-format violations carry the byte offset of the first failing check.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  Shape() = default;
  Shape(std::size_t h, std::size_t w, std::size_t c = 1) : height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || c < 1) throw InvalidInput("Shape: all dimensions must be >= 1");
  }

  std::size_t d() const { return height * width * channels; }
  std::size_t pixels() const { return height * width; }

  bool operator==(const Shape&) const = default;
};

// A per-feature importance map. `normalized` marks maps produced by
// normalize(): values in [0,1] with max exactly 1 (or an all-zero map).
struct AttributionMap {
  Shape shape;
  std::vector<double> values;
  bool normalized = false;
};

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite entry");
}

// |raw| rescaled by its maximum; an all-zero input is its own fixed point.
inline AttributionMap normalize(const std::vector<double>& raw, const Shape& shape) {
  if (raw.size() != shape.d()) throw InvalidInput("normalize: length != shape.d()");
  double mx = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x)) throw InvalidInput("normalize: non-finite entry");
    mx = std::max(mx, std::abs(x));
  }
  AttributionMap out{shape, std::vector<double>(raw.size(), 0.0), true};
  if (mx > 0.0)
    for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = std::abs(raw[i]) / mx;
  return out;
}

// Nonnegative weights summing to one. Entries below 1e-12 in magnitude are
// clamped to zero on construction (solver round-off hygiene).
class SimplexWeights {
 public:
  explicit SimplexWeights(std::vector<double> w) : omega_(std::move(w)) {
    if (omega_.empty()) throw InvalidInput("SimplexWeights: empty");
    double sum = 0.0;
    for (double& x : omega_) {
      if (!std::isfinite(x)) throw InvalidInput("SimplexWeights: non-finite entry");
      if (std::abs(x) <= 1e-12) x = 0.0;
      if (x < 0.0) throw InvalidInput("SimplexWeights: negative entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("SimplexWeights: sum != 1");
  }

  static SimplexWeights uniform(std::size_t k) {
    if (k == 0) throw InvalidInput("SimplexWeights: k == 0");
    return SimplexWeights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  static SimplexWeights vertex(std::size_t k, std::size_t i) {
    std::vector<double> w(k, 0.0);
    w.at(i) = 1.0;
    return SimplexWeights(std::move(w));
  }

  const std::vector<double>& omega() const { return omega_; }
  std::size_t k() const { return omega_.size(); }
  double operator[](std::size_t i) const { return omega_[i]; }

 private:
  std::vector<double> omega_;
};

// k normalized maps over one shape, column-stacked.
class AttributionStack {
 public:
  AttributionStack(Shape shape, std::vector<std::string> method_names,
                   std::vector<AttributionMap> columns)
      : shape_(shape), names_(std::move(method_names)), columns_(std::move(columns)) {
    if (columns_.empty()) throw InvalidInput("AttributionStack: k must be >= 1");
    if (names_.size() != columns_.size())
      throw InvalidInput("AttributionStack: name/column count mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
      if (!seen.insert(n).second) throw InvalidInput("AttributionStack: duplicate method name");
    for (const auto& c : columns_) {
      if (!(c.shape == shape_)) throw InvalidInput("AttributionStack: shape mismatch");
      if (c.values.size() != shape_.d())
        throw InvalidInput("AttributionStack: column length mismatch");
      if (!c.normalized) throw InvalidInput("AttributionStack: column not normalized");
    }
  }

  std::size_t k() const { return columns_.size(); }
  const Shape& shape() const { return shape_; }
  std::size_t d() const { return shape_.d(); }
  const std::vector<std::string>& method_names() const { return names_; }
  const AttributionMap& column(std::size_t i) const { return columns_.at(i); }
  const std::vector<AttributionMap>& columns() const { return columns_; }

 private:
  Shape shape_;
  std::vector<std::string> names_;
  std::vector<AttributionMap> columns_;
};

// phi^w = sum_i w_i phi^i. The result is a convex combination, not max-rescaled,
// so the normalized flag stays unset.
inline AttributionMap aggregate_linear(const AttributionStack& stack, const SimplexWeights& w) {
  if (w.k() != stack.k()) throw InvalidInput("aggregate_linear: weight/stack k mismatch");
  AttributionMap out{stack.shape(), std::vector<double>(stack.d(), 0.0), false};
  for (std::size_t i = 0; i < stack.k(); ++i) {
    const double wi = w[i];
    if (wi == 0.0) continue;
    const auto& col = stack.column(i).values;
    for (std::size_t j = 0; j < col.size(); ++j) out.values[j] += wi * col[j];
  }
  return out;
}

}  // namespace xagg
