#pragma once

// Dense feed-forward networks with an explicit reverse pass, an Adam
// optimizer and Polyak (soft) target updates. Batches are column-major:
// one sample per column.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavtraj/rng.hpp"

namespace uavtraj {

enum class Activation : std::uint8_t { linear = 0, relu = 1, tanh = 2 };

inline Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::linear: return z;
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
  }
  throw std::logic_error("unknown activation");
}

/// dL/dz given dL/da, the pre-activation z and the activation a = act(z).
inline Eigen::MatrixXd activation_backward(Activation act, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                                           const Eigen::MatrixXd& grad_a) {
  switch (act) {
    case Activation::linear: return grad_a;
    case Activation::relu: return (z.array() > 0.0).select(grad_a, 0.0);
    case Activation::tanh: return (grad_a.array() * (1.0 - a.array().square())).matrix();
  }
  throw std::logic_error("unknown activation");
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
  Gradients& operator*=(double s) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] *= s;
      bias[i] *= s;
    }
    return *this;
  }
  bool all_finite() const {
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (!weight[i].allFinite() || !bias[i].allFinite()) return false;
    return true;
  }
};

class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;       // input to each layer
    std::vector<Eigen::MatrixXd> pre;          // pre-activations
    Eigen::MatrixXd output;
  };

  Mlp() = default;

  /// Zero-initialized network.
  Mlp(std::vector<int> widths, Activation hidden, Activation output)
      : widths_(std::move(widths)), hidden_(hidden), output_(output) {
    if (widths_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i)
      layers_.push_back({Eigen::MatrixXd::Zero(widths_[i + 1], widths_[i]), Eigen::VectorXd::Zero(widths_[i + 1])});
  }

  /// Hidden layers uniform in +-1/sqrt(fan_in); the last layer uniform in
  /// +-final_scale.
  Mlp(std::vector<int> widths, Activation hidden, Activation output, Rng& rng, double final_scale = 3e-3)
      : Mlp(std::move(widths), hidden, output) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const bool last = l + 1 == layers_.size();
      const double bound = last ? final_scale : 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      auto& layer = layers_[l];
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = rng.uniform(-bound, bound);
    }
  }

  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
    if (x.rows() != input_size()) throw std::invalid_argument("input width mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (cache) {
        cache->inputs.push_back(std::move(a));
        cache->pre.push_back(z);
      }
      a = activate(l + 1 == layers_.size() ? output_ : hidden_, z);
    }
    if (cache) cache->output = a;
    return a;
  }

  Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const { return forward(x); }

  /// Reverse pass for the cached forward call. Gradients are summed over the
  /// batch columns; scale grad_y for means.
  Gradients backward(const Cache& cache, const Eigen::MatrixXd& grad_y, Eigen::MatrixXd* grad_x = nullptr) const {
    Gradients g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Eigen::MatrixXd grad_a = grad_y;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const bool last = i + 1 == layers_.size();
      const Eigen::MatrixXd& act_out = last ? cache.output : cache.inputs[i + 1];
      const Eigen::MatrixXd grad_z = activation_backward(last ? output_ : hidden_, cache.pre[i], act_out, grad_a);
      g.weight[i].noalias() = grad_z * cache.inputs[i].transpose();
      g.bias[i] = grad_z.rowwise().sum();
      if (i > 0 || grad_x) grad_a.noalias() = layers_[i].weight.transpose() * grad_z;
    }
    if (grad_x) *grad_x = std::move(grad_a);
    return g;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Parameters in a fixed order (per layer: weight column-major, then bias).
  std::vector<double*> parameter_pointers() {
    std::vector<double*> ptrs;
    for (auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) ptrs.push_back(l.weight.data() + i);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) ptrs.push_back(l.bias.data() + i);
    }
    return ptrs;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.widths_ != b.widths_ || a.hidden_ != b.hidden_ || a.output_ != b.output_) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i)
      if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
    return true;
  }

 private:
  std::vector<int> widths_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::linear;
  std::vector<DenseLayer> layers_;
};

/// Flattened view of a gradient in parameter_pointers() order.
inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.insert(out.end(), g.weight[i].data(), g.weight[i].data() + g.weight[i].size());
    out.insert(out.end(), g.bias[i].data(), g.bias[i].data() + g.bias[i].size());
  }
  return out;
}

/// target <- tau * online + (1 - tau) * target
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  auto& t = target.layers();
  const auto& o = online.layers();
  if (t.size() != o.size()) throw std::invalid_argument("soft_update: topology mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].weight.rows() != o[i].weight.rows() || t[i].weight.cols() != o[i].weight.cols())
      throw std::invalid_argument("soft_update: shape mismatch");
    t[i].weight = tau * o[i].weight + (1.0 - tau) * t[i].weight;
    t[i].bias = tau * o[i].bias + (1.0 - tau) * t[i].bias;
  }
}

class Adam {
 public:
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  Adam() = default;
  Adam(const Mlp& net, double lr) : learning_rate(lr), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

  std::uint64_t steps() const { return t_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

  /// One descent step on `net` along `grad`.
  void step(Mlp& net, const Gradients& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weight, m_.weight[i], v_.weight[i], grad.weight[i], c1, c2);
      update(layers[i].bias, m_.bias[i], v_.bias[i], grad.bias[i], c1, c2);
    }
  }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  template <typename P, typename G>
  void update(P& param, P& m, P& v, const G& g, double c1, double c2) const {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }

  std::uint64_t t_ = 0;
  Gradients m_;
  Gradients v_;
};

// ---- binary checkpoints ---------------------------------------------------
// Little-endian host layout; doubles are written verbatim so a round trip is
// bit-exact.

namespace io {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint");
}

inline void expect_magic(std::istream& is, const std::string& magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) throw std::runtime_error("bad checkpoint header, expected " + magic);
}

}  // namespace io

inline void save_mlp(std::ostream& os, const Mlp& net) {
  os.write("UAVMLP01", 8);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(net.widths().size()));
  for (int w : net.widths()) io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(net.hidden_activation()));
  io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(net.output_activation()));
  for (const auto& l : net.layers()) {
    io::write_doubles(os, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    io::write_doubles(os, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

inline Mlp load_mlp(std::istream& is) {
  io::expect_magic(is, "UAVMLP01");
  const auto n = io::read_pod<std::uint32_t>(is);
  if (n < 2 || n > 64) throw std::runtime_error("implausible layer count in checkpoint");
  std::vector<int> widths;
  for (std::uint32_t i = 0; i < n; ++i) widths.push_back(static_cast<int>(io::read_pod<std::uint32_t>(is)));
  const auto hidden = static_cast<Activation>(io::read_pod<std::uint8_t>(is));
  const auto output = static_cast<Activation>(io::read_pod<std::uint8_t>(is));
  Mlp net(widths, hidden, output);
  for (auto& l : net.layers()) {
    io::read_doubles(is, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    io::read_doubles(is, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return net;
}

inline void Adam::save(std::ostream& os) const {
  os.write("UAVADAM1", 8);
  io::write_pod(os, t_);
  io::write_pod(os, learning_rate);
  io::write_pod(os, beta1);
  io::write_pod(os, beta2);
  io::write_pod(os, epsilon);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m_.weight.size()));
  for (const Gradients* g : {&m_, &v_})
    for (std::size_t i = 0; i < g->weight.size(); ++i) {
      io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g->weight[i].rows()));
      io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g->weight[i].cols()));
      io::write_doubles(os, g->weight[i].data(), static_cast<std::size_t>(g->weight[i].size()));
      io::write_doubles(os, g->bias[i].data(), static_cast<std::size_t>(g->bias[i].size()));
    }
}

inline void Adam::load(std::istream& is) {
  io::expect_magic(is, "UAVADAM1");
  t_ = io::read_pod<std::uint64_t>(is);
  learning_rate = io::read_pod<double>(is);
  beta1 = io::read_pod<double>(is);
  beta2 = io::read_pod<double>(is);
  epsilon = io::read_pod<double>(is);
  const auto layers = io::read_pod<std::uint32_t>(is);
  for (Gradients* g : {&m_, &v_}) {
    g->weight.assign(layers, {});
    g->bias.assign(layers, {});
    for (std::size_t i = 0; i < layers; ++i) {
      const auto rows = io::read_pod<std::uint32_t>(is);
      const auto cols = io::read_pod<std::uint32_t>(is);
      g->weight[i].resize(rows, cols);
      g->bias[i].resize(rows);
      io::read_doubles(is, g->weight[i].data(), static_cast<std::size_t>(g->weight[i].size()));
      io::read_doubles(is, g->bias[i].data(), static_cast<std::size_t>(g->bias[i].size()));
    }
  }
}

}  // namespace uavtraj
