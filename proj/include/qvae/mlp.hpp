#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qvae/error.hpp"
#include "qvae/rng.hpp"

namespace qvae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation \"" + s + "\"");
}

/// Fully connected network. Layer k maps widths[k] -> widths[k+1] as
/// y = x W_k + b_k on row-vector batches; hidden layers apply the
/// activation, the output layer is linear.
struct Mlp {
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;
  std::vector<Matrix> w;  // widths[k] x widths[k+1]
  std::vector<Vector> b;
  // Bumped on every parameter update; tapes remember the value they saw.
  std::uint64_t version = 0;

  std::size_t layers() const { return w.size(); }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < w.size(); ++k) n += w[k].size() + b[k].size();
    return n;
  }
  void validate() const {
    if (widths.size() < 2) throw DimensionError("network needs at least one layer");
    if (w.size() != widths.size() - 1 || b.size() != w.size()) throw DimensionError("layer count does not match widths");
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (static_cast<std::size_t>(w[k].rows()) != widths[k] || static_cast<std::size_t>(w[k].cols()) != widths[k + 1] ||
          static_cast<std::size_t>(b[k].size()) != widths[k + 1])
        throw DimensionError("layer " + std::to_string(k) + " does not chain with its neighbours");
      if (!w[k].allFinite() || !b[k].allFinite())
        throw NumericalError("layer " + std::to_string(k) + " has non-finite parameters");
    }
  }
};

/// Same layout as Mlp; used for gradients and optimizer moments.
struct MlpGrads {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  static MlpGrads zeros_like(const Mlp& p) {
    MlpGrads g;
    for (std::size_t k = 0; k < p.layers(); ++k) {
      g.w.push_back(Matrix::Zero(p.w[k].rows(), p.w[k].cols()));
      g.b.push_back(Vector::Zero(p.b[k].size()));
    }
    return g;
  }
  MlpGrads& operator+=(const MlpGrads& o) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] += o.w[k];
      b[k] += o.b[k];
    }
    return *this;
  }
  MlpGrads& operator*=(double s) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] *= s;
      b[k] *= s;
    }
    return *this;
  }
};

/// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
inline Mlp init_mlp(const std::vector<std::size_t>& widths, Activation act, Rng& rng) {
  Mlp p;
  p.widths = widths;
  p.activation = act;
  if (widths.size() < 2) throw DimensionError("network needs at least one layer");
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    if (widths[k] == 0 || widths[k + 1] == 0) throw DimensionError("layer widths must be positive");
    const double lim = std::sqrt(6.0 / static_cast<double>(widths[k] + widths[k + 1]));
    Matrix w(widths[k], widths[k + 1]);
    // Row-major fill order so the draw sequence does not depend on storage.
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-lim, lim);
    p.w.push_back(std::move(w));
    p.b.push_back(Vector::Zero(widths[k + 1]));
  }
  return p;
}

/// Activations recorded by a forward pass.
struct MlpTape {
  const Mlp* params = nullptr;
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;  // input to each layer (batch x width)
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
};

namespace detail {

inline void activate(Activation a, Matrix& x) {
  switch (a) {
    case Activation::relu: x = x.cwiseMax(0.0); break;
    case Activation::tanh: x = x.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

inline void activation_backward(Activation a, const Matrix& pre, Matrix& grad) {
  switch (a) {
    case Activation::relu: grad = (pre.array() > 0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= 1.0 - pre.array().tanh().square(); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Batched forward pass; rows of `x` are independent inputs.
inline Matrix mlp_forward(const Mlp& p, const Matrix& x, MlpTape* tape = nullptr) {
  if (p.layers() == 0) throw DimensionError("network has no layers");
  if (static_cast<std::size_t>(x.cols()) != p.input_width())
    throw DimensionError("input width " + std::to_string(x.cols()) + " does not match network input " +
                         std::to_string(p.input_width()));
  if (tape) {
    tape->params = &p;
    tape->version = p.version;
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix a = x;
  for (std::size_t k = 0; k < p.layers(); ++k) {
    Matrix z = a * p.w[k];
    z.rowwise() += p.b[k].transpose();
    if (tape) tape->inputs.push_back(std::move(a));
    if (k + 1 < p.layers()) {
      if (tape) tape->pre.push_back(z);
      detail::activate(p.activation, z);
    }
    a = std::move(z);
  }
  return a;
}

inline Vector mlp_forward_one(const Mlp& p, const Vector& x) {
  Matrix row = x.transpose();
  return mlp_forward(p, row).row(0).transpose();
}

/// Reverse-mode pass for the recorded forward computation. Parameter
/// gradients are summed over the batch; `input_grad`, if given, receives
/// d/dx per row.
inline MlpGrads mlp_backward(const MlpTape& tape, const Matrix& output_grad, Matrix* input_grad = nullptr) {
  if (!tape.params) throw ValidationError("backward pass without a forward tape");
  const Mlp& p = *tape.params;
  if (tape.version != p.version) throw ValidationError("stale tape: parameters changed after the forward pass");
  if (tape.inputs.size() != p.layers()) throw ValidationError("tape does not match the network");
  if (static_cast<std::size_t>(output_grad.cols()) != p.output_width() || output_grad.rows() != tape.inputs[0].rows())
    throw DimensionError("output gradient shape does not match the forward batch");
  MlpGrads g = MlpGrads::zeros_like(p);
  Matrix d = output_grad;
  for (std::size_t k = p.layers(); k-- > 0;) {
    g.w[k].noalias() = tape.inputs[k].transpose() * d;
    g.b[k] = d.colwise().sum().transpose();
    if (k == 0 && !input_grad) break;
    Matrix prev = d * p.w[k].transpose();
    if (k > 0) detail::activation_backward(p.activation, tape.pre[k - 1], prev);
    d = std::move(prev);
  }
  if (input_grad) *input_grad = std::move(d);
  return g;
}

/// Flattened parameters (layer by layer, W row-major then b).
inline std::vector<double> mlp_parameters(const Mlp& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for (std::size_t k = 0; k < p.layers(); ++k) {
    for (Eigen::Index i = 0; i < p.w[k].rows(); ++i)
      for (Eigen::Index j = 0; j < p.w[k].cols(); ++j) out.push_back(p.w[k](i, j));
    for (Eigen::Index j = 0; j < p.b[k].size(); ++j) out.push_back(p.b[k](j));
  }
  return out;
}

inline std::vector<double> flatten(const MlpGrads& g) {
  std::vector<double> out;
  for (std::size_t k = 0; k < g.w.size(); ++k) {
    for (Eigen::Index i = 0; i < g.w[k].rows(); ++i)
      for (Eigen::Index j = 0; j < g.w[k].cols(); ++j) out.push_back(g.w[k](i, j));
    for (Eigen::Index j = 0; j < g.b[k].size(); ++j) out.push_back(g.b[k](j));
  }
  return out;
}

inline void set_mlp_parameters(Mlp& p, const std::vector<double>& v) {
  if (v.size() != p.parameter_count()) throw DimensionError("parameter vector has the wrong length");
  std::size_t at = 0;
  for (std::size_t k = 0; k < p.layers(); ++k) {
    for (Eigen::Index i = 0; i < p.w[k].rows(); ++i)
      for (Eigen::Index j = 0; j < p.w[k].cols(); ++j) p.w[k](i, j) = v[at++];
    for (Eigen::Index j = 0; j < p.b[k].size(); ++j) p.b[k](j) = v[at++];
  }
  ++p.version;
}

struct AdamState {
  std::uint64_t step = 0;
  MlpGrads m, v;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  static AdamState fresh(const Mlp& p) {
    AdamState s;
    s.m = MlpGrads::zeros_like(p);
    s.v = MlpGrads::zeros_like(p);
    return s;
  }
};

/// One bias-corrected Adam step that decreases the objective whose gradient
/// is `g`.
inline void adam_step(Mlp& p, const MlpGrads& g, AdamState& s) {
  if (g.w.size() != p.layers() || s.m.w.size() != p.layers() || s.v.w.size() != p.layers())
    throw DimensionError("gradient or optimizer state does not match the network");
  for (std::size_t k = 0; k < p.layers(); ++k) {
    if (g.w[k].rows() != p.w[k].rows() || g.w[k].cols() != p.w[k].cols() || g.b[k].size() != p.b[k].size())
      throw DimensionError("gradient of layer " + std::to_string(k) + " has the wrong shape");
    if (!g.w[k].allFinite() || !g.b[k].allFinite())
      throw NumericalError("non-finite gradient in layer " + std::to_string(k));
  }
  ++s.step;
  const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (1 - s.beta1) * grad;
    v = s.beta2 * v + (1 - s.beta2) * grad.cwiseProduct(grad);
    param.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
  };
  for (std::size_t k = 0; k < p.layers(); ++k) {
    update(p.w[k], g.w[k], s.m.w[k], s.v.w[k]);
    update(p.b[k], g.b[k], s.m.b[k], s.v.b[k]);
  }
  ++p.version;
}

}  // namespace qvae
