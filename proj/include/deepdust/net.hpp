#pragma once

// Stacked LSTM regressor with a linear head: parameter layout and
// initialization, forward pass, backpropagation through time and a
// central-difference gradient estimator.
//
// Gate order inside every 4H block is [input i, forget f, candidate g, output o]:
//   i = sigma(z_i), f = sigma(z_f), g = tanh(z_g), o = sigma(z_o)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
// with z = W_x x_t + W_h h_{t-1} + b. Hidden and cell states start at zero for
// every window, and the head reads the last layer's final hidden state.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/ingest.hpp"
#include "deepdust/loss.hpp"

namespace deepdust {

struct ModelShape {
  int input_dim = kFeatureDim;
  int hidden = 42;
  int layers = 3;
  int output = 2;

  int layer_input_dim(int layer) const { return layer == 0 ? input_dim : hidden; }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Offsets of every parameter array within the flat parameter vector.
struct ParamLayout {
  struct Layer {
    std::size_t w_x, w_h, b;
  };
  std::vector<Layer> layers;
  std::size_t head_w = 0;
  std::size_t head_b = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ModelShape& s) {
    if (s.input_dim < 1 || s.hidden < 1 || s.layers < 1 || s.output != 2) {
      throw argument_error("invalid model shape");
    }
    const auto h4 = static_cast<std::size_t>(4 * s.hidden);
    std::size_t at = 0;
    for (int l = 0; l < s.layers; ++l) {
      Layer layer{};
      layer.w_x = at;
      at += h4 * static_cast<std::size_t>(s.layer_input_dim(l));
      layer.w_h = at;
      at += h4 * static_cast<std::size_t>(s.hidden);
      layer.b = at;
      at += h4;
      layers.push_back(layer);
    }
    head_w = at;
    at += static_cast<std::size_t>(s.output * s.hidden);
    head_b = at;
    at += static_cast<std::size_t>(s.output);
    total = at;
  }
};

template <typename Scalar>
struct LayerView {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Eigen::Map<const Matrix> w_x;  // 4H x D_in
  Eigen::Map<const Matrix> w_h;  // 4H x H
  Eigen::Map<const Vector> b;    // 4H
};

// Flat parameter storage with column-major Eigen views. Used both for model
// parameters and for gradients of identical shape.
template <typename Scalar>
class ParameterSet {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ParameterSet() : ParameterSet(ModelShape{}) {}
  explicit ParameterSet(const ModelShape& shape) : shape_(shape), layout_(shape), data_(layout_.total, Scalar(0)) {}

  const ModelShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  Eigen::Map<Matrix> w_x(int l) { return {ptr(layout_.layers.at(l).w_x), rows4(), shape_.layer_input_dim(l)}; }
  Eigen::Map<Matrix> w_h(int l) { return {ptr(layout_.layers.at(l).w_h), rows4(), shape_.hidden}; }
  Eigen::Map<Vector> b(int l) { return {ptr(layout_.layers.at(l).b), rows4()}; }
  Eigen::Map<Matrix> head_w() { return {ptr(layout_.head_w), shape_.output, shape_.hidden}; }
  Eigen::Map<Vector> head_b() { return {ptr(layout_.head_b), shape_.output}; }

  Eigen::Map<const Matrix> w_x(int l) const {
    return {cptr(layout_.layers.at(l).w_x), rows4(), shape_.layer_input_dim(l)};
  }
  Eigen::Map<const Matrix> w_h(int l) const { return {cptr(layout_.layers.at(l).w_h), rows4(), shape_.hidden}; }
  Eigen::Map<const Vector> b(int l) const { return {cptr(layout_.layers.at(l).b), rows4()}; }
  Eigen::Map<const Matrix> head_w() const { return {cptr(layout_.head_w), shape_.output, shape_.hidden}; }
  Eigen::Map<const Vector> head_b() const { return {cptr(layout_.head_b), shape_.output}; }

  LayerView<Scalar> layer(int l) const { return {w_x(l), w_h(l), b(l)}; }

  void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  ParameterSet& operator+=(const ParameterSet& other) {
    if (other.size() != size()) throw argument_error("parameter sets differ in shape");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Eigen::Index rows4() const { return 4 * shape_.hidden; }
  Scalar* ptr(std::size_t off) { return data_.data() + off; }
  const Scalar* cptr(std::size_t off) const { return data_.data() + off; }

  ModelShape shape_;
  ParamLayout layout_;
  std::vector<Scalar> data_;
};

template <typename Scalar>
using Gradients = ParameterSet<Scalar>;

template <typename Scalar = double>
class LstmModel : public ParameterSet<Scalar> {
 public:
  LstmModel() = default;
  explicit LstmModel(const ModelShape& shape, std::uint64_t seed = 0) : ParameterSet<Scalar>(shape), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
};

// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases except the
// forget-gate slice, which is 1.
template <typename Scalar = double>
LstmModel<Scalar> init_params(std::uint64_t seed, const ModelShape& shape = {}) {
  LstmModel<Scalar> model(shape, seed);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](auto&& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(dist(rng));
    }
  };
  for (int l = 0; l < shape.layers; ++l) {
    fill_uniform(model.w_x(l), shape.layer_input_dim(l));
    fill_uniform(model.w_h(l), shape.hidden);
    model.b(l).segment(shape.hidden, shape.hidden).setConstant(Scalar(1));
  }
  fill_uniform(model.head_w(), shape.hidden);
  return model;
}

template <typename Scalar>
struct CellState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector h;
  Vector c;
  Vector gates;  // activated [i, f, g, o]
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

// Turns pre-activations z (4H) into activated gates in place and returns the
// new (h, c).
template <typename Scalar, typename ZVec, typename CVec, typename HOut, typename COut>
void activate_cell(ZVec&& z, const CVec& c_prev, HOut&& h, COut&& c) {
  const auto H = c_prev.size();
  for (Eigen::Index k = 0; k < H; ++k) {
    const Scalar i = sigmoid(z(k));
    const Scalar f = sigmoid(z(H + k));
    const Scalar g = std::tanh(z(2 * H + k));
    const Scalar o = sigmoid(z(3 * H + k));
    z(k) = i;
    z(H + k) = f;
    z(2 * H + k) = g;
    z(3 * H + k) = o;
    c(k) = f * c_prev(k) + i * g;
    h(k) = o * std::tanh(c(k));
  }
}

}  // namespace detail

template <typename Scalar>
CellState<Scalar> lstm_cell_forward(const LayerView<Scalar>& layer, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& h_prev,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& c_prev) {
  const auto H = layer.w_h.cols();
  if (x.size() != layer.w_x.cols() || h_prev.size() != H || c_prev.size() != H) {
    throw argument_error("lstm_cell_forward: shape mismatch");
  }
  if (!x.allFinite() || !h_prev.allFinite() || !c_prev.allFinite()) {
    throw argument_error("lstm_cell_forward: non-finite input");
  }
  CellState<Scalar> out;
  out.gates = layer.w_x * x + layer.w_h * h_prev + layer.b;
  out.h.resize(H);
  out.c.resize(H);
  detail::activate_cell<Scalar>(out.gates, c_prev, out.h, out.c);
  return out;
}

template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  struct Layer {
    Matrix input;  // D_in x T
    Matrix gates;  // 4H x T, activated [i, f, g, o]
    Matrix c;      // H x T
    Matrix h;      // H x T
  };
  std::vector<Layer> layers;
  std::array<Scalar, 2> y_hat{};

  int steps() const { return layers.empty() ? 0 : static_cast<int>(layers.front().h.cols()); }
};

// `window` holds T consecutive input vectors of length input_dim, hour-major.
template <typename Scalar>
std::array<Scalar, 2> model_forward(const LstmModel<Scalar>& model, std::span<const double> window,
                                    ForwardCache<Scalar>& cache) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto& shape = model.shape();
  const auto D = static_cast<std::size_t>(shape.input_dim);
  if (window.empty() || window.size() % D != 0) {
    throw argument_error("model_forward: window size " + std::to_string(window.size()) +
                         " is not a positive multiple of input_dim " + std::to_string(D));
  }
  const auto T = static_cast<Eigen::Index>(window.size() / D);
  const auto H = static_cast<Eigen::Index>(shape.hidden);
  Eigen::Map<const Eigen::MatrixXd> raw(window.data(), static_cast<Eigen::Index>(D), T);
  if (!raw.allFinite()) throw argument_error("model_forward: non-finite window entry");

  cache.layers.resize(static_cast<std::size_t>(shape.layers));
  Vector zero = Vector::Zero(H);
  for (int l = 0; l < shape.layers; ++l) {
    auto& lc = cache.layers[static_cast<std::size_t>(l)];
    if (l == 0) {
      lc.input = raw.template cast<Scalar>();
    } else {
      lc.input = cache.layers[static_cast<std::size_t>(l - 1)].h;
    }
    const auto layer = model.layer(l);
    lc.gates.noalias() = layer.w_x * lc.input;
    lc.gates.colwise() += layer.b;
    lc.c.resize(H, T);
    lc.h.resize(H, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (t > 0) lc.gates.col(t).noalias() += layer.w_h * lc.h.col(t - 1);
      if (t == 0) {
        detail::activate_cell<Scalar>(lc.gates.col(t), zero, lc.h.col(t), lc.c.col(t));
      } else {
        detail::activate_cell<Scalar>(lc.gates.col(t), lc.c.col(t - 1), lc.h.col(t), lc.c.col(t));
      }
    }
  }
  const Vector y = model.head_w() * cache.layers.back().h.col(T - 1) + model.head_b();
  cache.y_hat = {y(0), y(1)};
  return cache.y_hat;
}

template <typename Scalar>
std::array<Scalar, 2> model_forward(const LstmModel<Scalar>& model, std::span<const double> window) {
  ForwardCache<Scalar> cache;
  return model_forward(model, window, cache);
}

// Samples are independent; each gets fresh zero states.
template <typename Scalar>
std::vector<std::array<Scalar, 2>> model_forward_batch(const LstmModel<Scalar>& model,
                                                       std::span<const std::span<const double>> windows) {
  std::vector<std::array<Scalar, 2>> out;
  out.reserve(windows.size());
  ForwardCache<Scalar> cache;
  for (const auto& w : windows) out.push_back(model_forward(model, w, cache));
  return out;
}

// Adds dL/dTheta for one sample into `grads`, given dL/dy_hat.
template <typename Scalar>
void model_backward_accumulate(const LstmModel<Scalar>& model, const ForwardCache<Scalar>& cache,
                               const std::array<Scalar, 2>& dl_dy, Gradients<Scalar>& grads) {
  using Matrix = typename ForwardCache<Scalar>::Matrix;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (!std::isfinite(dl_dy[0]) || !std::isfinite(dl_dy[1])) {
    throw argument_error("model_backward: non-finite upstream gradient");
  }
  const auto& shape = model.shape();
  if (grads.shape() != shape) throw argument_error("model_backward: gradient shape mismatch");
  if (cache.layers.size() != static_cast<std::size_t>(shape.layers)) {
    throw argument_error("model_backward: cache does not match model");
  }
  const auto H = static_cast<Eigen::Index>(shape.hidden);
  const auto T = static_cast<Eigen::Index>(cache.steps());

  Vector dy(2);
  dy << dl_dy[0], dl_dy[1];
  const auto& h_last = cache.layers.back().h;
  grads.head_w().noalias() += dy * h_last.col(T - 1).transpose();
  grads.head_b() += dy;

  // Gradient w.r.t. the current layer's hidden outputs, H x T.
  Matrix dh_seq = Matrix::Zero(H, T);
  dh_seq.col(T - 1).noalias() = model.head_w().transpose() * dy;

  Matrix dz(4 * H, T);
  Vector dh_next(H), dc_next(H);
  for (int l = shape.layers - 1; l >= 0; --l) {
    const auto& lc = cache.layers[static_cast<std::size_t>(l)];
    const auto layer = model.layer(l);
    dh_next.setZero();
    dc_next.setZero();
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      for (Eigen::Index k = 0; k < H; ++k) {
        const Scalar i = lc.gates(k, t);
        const Scalar f = lc.gates(H + k, t);
        const Scalar g = lc.gates(2 * H + k, t);
        const Scalar o = lc.gates(3 * H + k, t);
        const Scalar c_prev = t > 0 ? lc.c(k, t - 1) : Scalar(0);
        const Scalar tanh_c = std::tanh(lc.c(k, t));
        const Scalar dh = dh_seq(k, t) + dh_next(k);
        const Scalar dc = dc_next(k) + dh * o * (Scalar(1) - tanh_c * tanh_c);
        dz(k, t) = dc * g * i * (Scalar(1) - i);
        dz(H + k, t) = dc * c_prev * f * (Scalar(1) - f);
        dz(2 * H + k, t) = dc * i * (Scalar(1) - g * g);
        dz(3 * H + k, t) = dh * tanh_c * o * (Scalar(1) - o);
        dc_next(k) = dc * f;
      }
      dh_next.noalias() = layer.w_h.transpose() * dz.col(t);
    }
    grads.w_x(l).noalias() += dz * lc.input.transpose();
    if (T > 1) {
      grads.w_h(l).noalias() += dz.rightCols(T - 1) * lc.h.leftCols(T - 1).transpose();
    }
    grads.b(l) += dz.rowwise().sum();
    if (l > 0) dh_seq.noalias() = layer.w_x.transpose() * dz;
  }
}

template <typename Scalar>
Gradients<Scalar> model_backward(const LstmModel<Scalar>& model, const ForwardCache<Scalar>& cache,
                                 const std::array<Scalar, 2>& dl_dy) {
  Gradients<Scalar> grads(model.shape());
  model_backward_accumulate(model, cache, dl_dy, grads);
  return grads;
}

// Central differences (L(theta + eps) - L(theta - eps)) / 2 eps of the
// squared-error loss, one scalar parameter at a time.
template <typename Scalar>
Gradients<Scalar> numerical_gradient(const LstmModel<Scalar>& model, std::span<const double> window,
                                     const std::array<Scalar, 2>& target, Scalar eps) {
  if (!(eps > 0)) throw argument_error("numerical_gradient: eps must be positive");
  LstmModel<Scalar> probe = model;
  Gradients<Scalar> grads(model.shape());
  ForwardCache<Scalar> cache;
  auto values = probe.values();
  for (std::size_t p = 0; p < values.size(); ++p) {
    const Scalar saved = values[p];
    values[p] = saved + eps;
    const Scalar plus = mse_loss(model_forward(probe, window, cache), target);
    values[p] = saved - eps;
    const Scalar minus = mse_loss(model_forward(probe, window, cache), target);
    values[p] = saved;
    grads.values()[p] = (plus - minus) / (2 * eps);
  }
  return grads;
}

// Text checkpoint: a header with shape, gate order and seed, then one
// parameter per line in shortest round-trip form.
inline constexpr std::string_view kCheckpointMagic = "deepdust-checkpoint 1";

template <typename Scalar>
void save_checkpoint(std::ostream& out, const LstmModel<Scalar>& model) {
  const auto& s = model.shape();
  out << kCheckpointMagic << '\n'
      << "scalar " << (sizeof(Scalar) == sizeof(double) ? "f64" : "f32") << '\n'
      << "gate_order ifgo\n"
      << "input_dim " << s.input_dim << '\n'
      << "hidden " << s.hidden << '\n'
      << "layers " << s.layers << '\n'
      << "output " << s.output << '\n'
      << "seed " << model.seed() << '\n'
      << "params " << model.size() << '\n';
  char buf[64];
  for (Scalar v : model.values()) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, ptr - buf);
    out.put('\n');
  }
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const LstmModel<Scalar>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, model);
  if (!out) throw data_error("failed writing checkpoint '" + path + "'");
}

template <typename Scalar = double>
LstmModel<Scalar> load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw data_error("checkpoint: bad magic line");
  auto expect = [&](std::string_view key) -> std::string {
    if (!std::getline(in, line) || line.rfind(std::string(key) + " ", 0) != 0) {
      throw data_error("checkpoint: expected '" + std::string(key) + "' line");
    }
    return line.substr(key.size() + 1);
  };
  auto expect_int = [&](std::string_view key) -> std::int64_t {
    auto text = expect(key);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw data_error("checkpoint: malformed value for '" + std::string(key) + "'");
    }
    return v;
  };
  const std::string scalar = expect("scalar");
  if (scalar != (sizeof(Scalar) == sizeof(double) ? "f64" : "f32")) {
    throw data_error("checkpoint: scalar type '" + scalar + "' does not match");
  }
  if (expect("gate_order") != "ifgo") throw data_error("checkpoint: unsupported gate order");
  ModelShape shape;
  shape.input_dim = static_cast<int>(expect_int("input_dim"));
  shape.hidden = static_cast<int>(expect_int("hidden"));
  shape.layers = static_cast<int>(expect_int("layers"));
  shape.output = static_cast<int>(expect_int("output"));
  if (shape.input_dim < 1 || shape.hidden < 1 || shape.layers < 1 || shape.output != 2) {
    throw data_error("checkpoint: invalid dimensions");
  }
  std::uint64_t seed = 0;
  {
    auto text = expect("seed");
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw data_error("checkpoint: malformed seed");
  }
  const auto count = expect_int("params");
  LstmModel<Scalar> model(shape, seed);
  if (count < 0 || static_cast<std::size_t>(count) != model.size()) {
    throw data_error("checkpoint: parameter count " + std::to_string(count) + " does not match shape (" +
                     std::to_string(model.size()) + ")");
  }
  for (auto& v : model.values()) {
    if (!std::getline(in, line)) throw data_error("checkpoint: truncated parameter list");
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc{} || ptr != line.data() + line.size() || !std::isfinite(v)) {
      throw data_error("checkpoint: malformed parameter '" + line + "'");
    }
  }
  return model;
}

template <typename Scalar = double>
LstmModel<Scalar> load_checkpoint(const std::string& path) {
  auto in = detail::open_input(path);
  return load_checkpoint<Scalar>(in);
}

}  // namespace deepdust
