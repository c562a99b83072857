// Dense ReLU networks with parameter gradients, the softmax-across-options
// Jacobian used by the priority policy, and Adam.
//
// Everything here is templated on the scalar type; the trainer uses double.
// A network maps an input column to an output column; batched entry points
// take one sample per column.

#ifndef SDNRD_NEURAL_HPP_
#define SDNRD_NEURAL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace sdnrd {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;    // out
};

// Same layer structure as a network; also used for Adam moments.
template <typename Scalar>
struct MlpGradient {
  std::vector<DenseLayer<Scalar>> layers;

  MlpGradient& operator+=(const MlpGradient& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += o.layers[l].weight;
      layers[l].bias += o.layers[l].bias;
    }
    return *this;
  }
  MlpGradient& operator-=(const MlpGradient& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= o.layers[l].weight;
      layers[l].bias -= o.layers[l].bias;
    }
    return *this;
  }
  MlpGradient& operator*=(Scalar s) {
    for (auto& layer : layers) {
      layer.weight *= s;
      layer.bias *= s;
    }
    return *this;
  }
  // this += s * o
  void add_scaled(Scalar s, const MlpGradient& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += s * o.layers[l].weight;
      layers[l].bias += s * o.layers[l].bias;
    }
  }
  void set_zero() {
    for (auto& layer : layers) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
  }
  Scalar squared_norm() const {
    Scalar s(0);
    for (const auto& layer : layers) s += layer.weight.squaredNorm() + layer.bias.squaredNorm();
    return s;
  }
  bool all_finite() const {
    for (const auto& layer : layers) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  }
  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
  }
  // Weights (column-major) then bias, layer by layer.
  Vec<Scalar> flatten() const {
    Vec<Scalar> v(size());
    Eigen::Index k = 0;
    for (const auto& layer : layers) {
      v.segment(k, layer.weight.size()) = layer.weight.reshaped();
      k += layer.weight.size();
      v.segment(k, layer.bias.size()) = layer.bias;
      k += layer.bias.size();
    }
    return v;
  }
  void unflatten(const Vec<Scalar>& v) {
    if (v.size() != size()) throw std::invalid_argument("flat vector has the wrong length");
    Eigen::Index k = 0;
    for (auto& layer : layers) {
      layer.weight.reshaped() = v.segment(k, layer.weight.size());
      k += layer.weight.size();
      layer.bias = v.segment(k, layer.bias.size());
      k += layer.bias.size();
    }
  }
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Fully connected network: ReLU on hidden layers, linear output. Owns its
// Adam moment buffers and step counter.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  // sizes = {input, hidden..., output}; all parameters zero.
  explicit Mlp(const std::vector<Eigen::Index>& sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("an MLP needs input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      if (sizes[l] <= 0 || sizes[l + 1] <= 0) throw std::invalid_argument("layer sizes must be positive");
      params_.layers.push_back(
          {Mat<Scalar>::Zero(sizes[l + 1], sizes[l]), Vec<Scalar>::Zero(sizes[l + 1])});
    }
    reset_optimizer();
  }

  // Orthogonal weights with `hidden_gain` on hidden layers and
  // `output_gain` on the last one; zero biases.
  template <typename Urng>
  static Mlp orthogonal(const std::vector<Eigen::Index>& sizes, Scalar hidden_gain,
                        Scalar output_gain, Urng& rng) {
    Mlp net(sizes);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < net.params_.layers.size(); ++l) {
      auto& w = net.params_.layers[l].weight;
      const Eigen::Index rows = w.rows(), cols = w.cols();
      const Eigen::Index big = std::max(rows, cols), small = std::min(rows, cols);
      Mat<Scalar> g(big, small);
      for (Eigen::Index j = 0; j < small; ++j) {
        for (Eigen::Index i = 0; i < big; ++i) g(i, j) = static_cast<Scalar>(normal(rng));
      }
      Eigen::HouseholderQR<Mat<Scalar>> qr(g);
      Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(big, small);
      // Sign fix so the distribution is uniform over orthogonal matrices.
      const Mat<Scalar> r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
      for (Eigen::Index j = 0; j < small; ++j) {
        if (r(j, j) < Scalar(0)) q.col(j) = -q.col(j);
      }
      const Scalar gain = (l + 1 == net.params_.layers.size()) ? output_gain : hidden_gain;
      w = gain * (rows >= cols ? q : Mat<Scalar>(q.transpose()));
    }
    return net;
  }

  Eigen::Index input_size() const { return params_.layers.front().weight.cols(); }
  Eigen::Index output_size() const { return params_.layers.back().weight.rows(); }
  std::size_t num_layers() const { return params_.layers.size(); }
  Eigen::Index num_parameters() const { return params_.size(); }
  std::vector<Eigen::Index> sizes() const {
    std::vector<Eigen::Index> s{input_size()};
    for (const auto& layer : params_.layers) s.push_back(layer.weight.rows());
    return s;
  }

  const MlpGradient<Scalar>& params() const { return params_; }
  MlpGradient<Scalar>& params() { return params_; }
  const MlpGradient<Scalar>& first_moment() const { return m_; }
  MlpGradient<Scalar>& first_moment() { return m_; }
  const MlpGradient<Scalar>& second_moment() const { return v_; }
  MlpGradient<Scalar>& second_moment() { return v_; }
  std::uint64_t adam_step() const { return step_; }
  void set_adam_step(std::uint64_t s) { step_ = s; }

  const DenseLayer<Scalar>& layer(std::size_t l) const { return params_.layers[l]; }
  DenseLayer<Scalar>& layer(std::size_t l) { return params_.layers[l]; }

  MlpGradient<Scalar> zero_gradient() const {
    MlpGradient<Scalar> g = params_;
    g.set_zero();
    return g;
  }

  void reset_optimizer() {
    m_ = zero_gradient();
    v_ = zero_gradient();
    step_ = 0;
  }

 private:
  MlpGradient<Scalar> params_;
  MlpGradient<Scalar> m_;
  MlpGradient<Scalar> v_;
  std::uint64_t step_ = 0;
};

namespace detail {

template <typename Scalar>
void check_input(const Mlp<Scalar>& net, Eigen::Index rows) {
  if (net.num_layers() == 0) throw std::invalid_argument("empty network");
  if (rows != net.input_size()) {
    throw std::invalid_argument("input length " + std::to_string(rows) +
                                " does not match network input " +
                                std::to_string(net.input_size()));
  }
}

}  // namespace detail

// Batched forward pass, one sample per column.
template <typename Scalar, typename Derived>
Mat<Scalar> forward_batch(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& inputs) {
  detail::check_input(net, inputs.rows());
  Mat<Scalar> h = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& layer = net.layer(l);
    Mat<Scalar> z = (layer.weight * h).colwise() + layer.bias;
    if (l + 1 < net.num_layers()) z = z.cwiseMax(Scalar(0));
    h = std::move(z);
  }
  return h;
}

template <typename Scalar, typename Derived>
Vec<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  if (input.cols() != 1) throw std::invalid_argument("forward expects a single column");
  return forward_batch(net, input).col(0);
}

// f(x) of a scalar-output network.
template <typename Scalar, typename Derived>
Scalar forward_scalar(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  if (net.output_size() != 1) throw std::invalid_argument("network output is not scalar");
  return forward(net, input)[0];
}

// sum_k weights[k] * grad_theta f(inputs.col(k)) for a scalar-output network,
// computed as one batched vector-Jacobian product.
template <typename Scalar, typename Derived, typename WDerived>
MlpGradient<Scalar> backward_weighted(const Mlp<Scalar>& net,
                                      const Eigen::MatrixBase<Derived>& inputs,
                                      const Eigen::MatrixBase<WDerived>& weights) {
  detail::check_input(net, inputs.rows());
  if (net.output_size() != 1) throw std::invalid_argument("backward needs a scalar-output network");
  if (weights.size() != inputs.cols()) throw std::invalid_argument("one weight per input column");
  const std::size_t layers = net.num_layers();
  std::vector<Mat<Scalar>> acts;  // acts[l] = input to layer l
  acts.reserve(layers);
  acts.emplace_back(inputs);
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const auto& layer = net.layer(l);
    acts.emplace_back(((layer.weight * acts.back()).colwise() + layer.bias).cwiseMax(Scalar(0)));
  }
  MlpGradient<Scalar> grad;
  grad.layers.resize(layers);
  Mat<Scalar> delta = weights.derived().transpose();  // 1 x K
  for (std::size_t l = layers; l-- > 0;) {
    grad.layers[l].weight = delta * acts[l].transpose();
    grad.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Mat<Scalar> back = net.layer(l).weight.transpose() * delta;
    // ReLU derivative: the unit passes gradient only where its output is positive.
    delta = back.cwiseProduct((acts[l].array() > Scalar(0)).template cast<Scalar>().matrix());
  }
  return grad;
}

// grad_theta f(x) of a scalar-output network.
template <typename Scalar, typename Derived>
MlpGradient<Scalar> backward_params(const Mlp<Scalar>& net,
                                    const Eigen::MatrixBase<Derived>& input) {
  if (input.cols() != 1) throw std::invalid_argument("backward_params expects a single column");
  return backward_weighted(net, input, Vec<Scalar>::Ones(1));
}

template <typename Derived>
Vec<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  const Scalar top = logits.maxCoeff();
  Vec<Scalar> e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

// Gradient of mu_m = softmax_m(f(z_1), ..., f(z_M)) for every option m,
// as mu_m * (grad f(z_m) - sum_i mu_i grad f(z_i)).
template <typename Scalar, typename Derived>
std::vector<MlpGradient<Scalar>> softmax_mean_gradient(
    const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& observations) {
  const Eigen::Index options = observations.cols();
  if (options == 0) throw std::invalid_argument("softmax gradient needs at least one option");
  const Vec<Scalar> mu = softmax(Vec<Scalar>(forward_batch(net, observations).row(0).transpose()));
  std::vector<MlpGradient<Scalar>> per_option;
  per_option.reserve(options);
  for (Eigen::Index m = 0; m < options; ++m) {
    per_option.push_back(backward_params(net, observations.col(m)));
  }
  MlpGradient<Scalar> mean = net.zero_gradient();
  for (Eigen::Index i = 0; i < options; ++i) mean.add_scaled(mu[i], per_option[i]);
  for (Eigen::Index m = 0; m < options; ++m) {
    per_option[m] -= mean;
    per_option[m] *= mu[m];
  }
  return per_option;
}

// One bias-corrected Adam descent step: params -= lr * mhat / (sqrt(vhat) + eps).
template <typename Scalar>
void adam_update(Mlp<Scalar>& net, const MlpGradient<Scalar>& grad, const AdamConfig& cfg) {
  if (grad.layers.size() != net.num_layers()) throw std::invalid_argument("gradient shape mismatch");
  if (!grad.all_finite()) throw std::domain_error("non-finite gradient in Adam update");
  net.set_adam_step(net.adam_step() + 1);
  const double t = static_cast<double>(net.adam_step());
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, t));
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate), eps = static_cast<Scalar>(cfg.epsilon);
  auto step = [&](auto& p, auto& m, auto& v, const auto& g) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw std::invalid_argument("gradient shape mismatch");
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    step(net.params().layers[l].weight, net.first_moment().layers[l].weight,
         net.second_moment().layers[l].weight, grad.layers[l].weight);
    step(net.params().layers[l].bias, net.first_moment().layers[l].bias,
         net.second_moment().layers[l].bias, grad.layers[l].bias);
  }
}

}  // namespace sdnrd

#endif  // SDNRD_NEURAL_HPP_
