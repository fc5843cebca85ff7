#pragma once

// Model contracts and the built-in toy models. Scores are scalar; gradients
// are analytic reverse-mode and advertised via a capability flag.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "xagg/core.hpp"
#include "xagg/rng.hpp"

namespace xagg {

class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t input_dim() const = 0;
  virtual const std::string& name() const = 0;
  virtual bool has_gradient() const { return false; }

  virtual std::vector<double> predict_batch(const std::vector<std::vector<double>>& inputs) const = 0;

  virtual std::vector<double> gradient(const std::vector<double>&) const {
    throw Unsupported("model '" + name() + "' does not expose gradients");
  }

  double predict(const std::vector<double>& x) const { return predict_batch({x}).front(); }

 protected:
  void check_input(const std::vector<double>& x) const {
    if (x.size() != input_dim()) throw InvalidInput("model input has wrong dimension");
    check_finite(x, "model input");
  }
};

// f(x) = w.x + b; gradient is w everywhere.
class ToyLinear final : public Model {
 public:
  ToyLinear(std::vector<double> w, double b, std::string name = "toy_linear")
      : w_(std::move(w)), b_(b), name_(std::move(name)) {
    if (w_.empty()) throw InvalidInput("ToyLinear: empty weights");
    check_finite(w_, "ToyLinear weights");
  }

  std::size_t input_dim() const override { return w_.size(); }
  const std::string& name() const override { return name_; }
  bool has_gradient() const override { return true; }

  std::vector<double> predict_batch(const std::vector<std::vector<double>>& inputs) const override {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) {
      check_input(x);
      double s = b_;
      for (std::size_t i = 0; i < w_.size(); ++i) s += w_[i] * x[i];
      out.push_back(s);
    }
    return out;
  }

  std::vector<double> gradient(const std::vector<double>& x) const override {
    check_input(x);
    return w_;
  }

  const std::vector<double>& weights() const { return w_; }
  double bias() const { return b_; }

 private:
  std::vector<double> w_;
  double b_;
  std::string name_;
};

enum class Activation { tanh, relu };

// Fully-connected scalar-output network with seeded Gaussian(0, 1/fan_in)
// weights and zero biases. No training; fixed random models are enough for
// metrics defined over arbitrary f.
class ToyMlp final : public Model {
 public:
  struct Layer {
    std::size_t in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
  };

  ToyMlp(const std::vector<std::size_t>& layer_sizes, Activation act, std::uint64_t seed,
         std::string name = "toy_mlp")
      : act_(act), seed_(seed), name_(std::move(name)) {
    if (layer_sizes.size() < 2) throw InvalidInput("ToyMlp: need at least input and output sizes");
    if (layer_sizes.back() != 1) throw InvalidInput("ToyMlp: output size must be 1");
    for (std::size_t s : layer_sizes)
      if (s < 1) throw InvalidInput("ToyMlp: zero layer size");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      Layer layer;
      layer.in = layer_sizes[l];
      layer.out = layer_sizes[l + 1];
      layer.w.resize(layer.in * layer.out);
      layer.b.assign(layer.out, 0.0);
      const double stddev = 1.0 / std::sqrt(static_cast<double>(layer.in));
      for (double& w : layer.w) w = rng.gaussian(0.0, stddev);
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t input_dim() const override { return layers_.front().in; }
  const std::string& name() const override { return name_; }
  bool has_gradient() const override { return true; }
  Activation activation() const { return act_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t l) const { return layers_.at(l); }
  Layer& mutable_layer(std::size_t l) { return layers_.at(l); }

  std::vector<double> predict_batch(const std::vector<std::vector<double>>& inputs) const override {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) {
      check_input(x);
      out.push_back(forward(x, nullptr));
    }
    return out;
  }

  std::vector<double> gradient(const std::vector<double>& x) const override {
    check_input(x);
    std::vector<std::vector<double>> pre;  // pre-activations per layer
    forward(x, &pre);

    // Backprop from the scalar output; relu uses subgradient 0 at 0.
    std::vector<double> delta{1.0};
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Layer& layer = layers_[l];
      if (l + 1 < layers_.size()) {
        for (std::size_t i = 0; i < layer.out; ++i) delta[i] *= act_deriv(pre[l][i]);
      }
      std::vector<double> prev(layer.in, 0.0);
      for (std::size_t i = 0; i < layer.out; ++i)
        for (std::size_t j = 0; j < layer.in; ++j) prev[j] += layer.w[i * layer.in + j] * delta[i];
      delta = std::move(prev);
    }
    return delta;
  }

 private:
  double act_value(double z) const {
    return act_ == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
  }
  double act_deriv(double z) const {
    if (act_ == Activation::tanh) {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    return z > 0.0 ? 1.0 : 0.0;
  }

  double forward(const std::vector<double>& x, std::vector<std::vector<double>>* pre_out) const {
    std::vector<double> a = x;
    if (pre_out) pre_out->clear();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      std::vector<double> z(layer.out);
      for (std::size_t i = 0; i < layer.out; ++i) {
        double s = layer.b[i];
        const double* row = layer.w.data() + i * layer.in;
        for (std::size_t j = 0; j < layer.in; ++j) s += row[j] * a[j];
        z[i] = s;
      }
      if (pre_out) pre_out->push_back(z);
      if (l + 1 < layers_.size())
        for (double& v : z) v = act_value(v);
      a = std::move(z);
    }
    return a.front();
  }

  Activation act_;
  std::uint64_t seed_;
  std::string name_;
  std::vector<Layer> layers_;
};

// A copy of a ToyMlp where the listed layers were resampled i.i.d. Gaussian
// with the base layer's empirical standard deviation; other layers are
// bit-identical to the base.
class RandomizedModel final : public Model {
 public:
  RandomizedModel(const ToyMlp& base, const std::vector<std::size_t>& layers, std::uint64_t seed)
      : mlp_(base), seed_(seed), layers_(layers), name_(base.name() + "_randomized") {
    if (layers_.empty()) throw InvalidInput("randomize_parameters: empty layer subset");
    Rng rng(seed);
    for (std::size_t l : layers_) {
      if (l >= mlp_.layer_count()) throw InvalidInput("randomize_parameters: layer out of range");
      auto& layer = mlp_.mutable_layer(l);
      resample(layer.w, rng);
      resample(layer.b, rng);
    }
  }

  std::size_t input_dim() const override { return mlp_.input_dim(); }
  const std::string& name() const override { return name_; }
  bool has_gradient() const override { return true; }
  std::vector<double> predict_batch(const std::vector<std::vector<double>>& inputs) const override {
    return mlp_.predict_batch(inputs);
  }
  std::vector<double> gradient(const std::vector<double>& x) const override {
    return mlp_.gradient(x);
  }

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::size_t>& randomized_layers() const { return layers_; }
  const ToyMlp& mlp() const { return mlp_; }

 private:
  static void resample(std::vector<double>& v, Rng& rng) {
    if (v.empty()) return;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const double stddev = std::sqrt(var);
    for (double& x : v) x = rng.gaussian(0.0, stddev);
  }

  ToyMlp mlp_;
  std::uint64_t seed_;
  std::vector<std::size_t> layers_;
  std::string name_;
};

inline RandomizedModel randomize_parameters(const ToyMlp& base,
                                            const std::vector<std::size_t>& layers,
                                            std::uint64_t seed) {
  return RandomizedModel(base, layers, seed);
}

}  // namespace xagg
