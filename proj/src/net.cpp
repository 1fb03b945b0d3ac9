#include "pegsim/net.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace pegsim {

namespace bio {

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint stream");
  return v;
}

}  // namespace

void write_u32(std::ostream& out, uint32_t v) { write_raw(out, v); }
uint32_t read_u32(std::istream& in) { return read_raw<uint32_t>(in); }
void write_i64(std::ostream& out, int64_t v) { write_raw(out, v); }
int64_t read_i64(std::istream& in) { return read_raw<int64_t>(in); }
void write_f64(std::ostream& out, double v) { write_raw(out, v); }
double read_f64(std::istream& in) { return read_raw<double>(in); }

void write_vec(std::ostream& out, const VectorXd& v) {
  write_i64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double)) * v.size());
}

VectorXd read_vec(std::istream& in) {
  const int64_t n = read_i64(in);
  if (n < 0 || n > (1LL << 32)) throw std::runtime_error("corrupt checkpoint vector size");
  VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double)) * n);
  if (!in) throw std::runtime_error("truncated checkpoint stream");
  return v;
}

}  // namespace bio

Mlp::Mlp(int input, const std::vector<int>& hidden, int output, Rng& rng) {
  if (input < 1 || output < 1) throw std::invalid_argument("bad network shape");
  std::vector<int> dims;
  dims.push_back(input);
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("bad network shape");
    dims.push_back(h);
  }
  dims.push_back(output);

  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const bool last = l + 2 == dims.size();
    const double limit = last ? 3e-3 : std::sqrt(6.0 / in);
    MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-limit, limit);
    w_.push_back(std::move(w));
    b_.push_back(VectorXd::Zero(out));
  }
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache* cache) const {
  if (x.cols() != input_dim()) throw std::invalid_argument("network input dimension mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(w_.size());
  }
  MatrixXd h = x;
  for (size_t l = 0; l < w_.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    MatrixXd z = (h * w_[l].transpose()).rowwise() + b_[l].transpose();
    if (l + 1 < w_.size()) z = z.cwiseMax(0.0);  // ReLU on hidden layers
    h = std::move(z);
  }
  return h;
}

MatrixXd Mlp::backward(const Cache& cache, const MatrixXd& grad_out,
                       MlpGrads* grads) const {
  MatrixXd g = grad_out;
  for (size_t li = w_.size(); li-- > 0;) {
    if (li + 1 < w_.size()) {
      // Through the ReLU of this layer: its output is the next layer's input.
      const MatrixXd& activated = cache.inputs[li + 1];
      g = g.cwiseProduct((activated.array() > 0.0).cast<double>().matrix());
    }
    if (grads) {
      grads->w[li].noalias() += g.transpose() * cache.inputs[li];
      grads->b[li] += g.colwise().sum().transpose();
    }
    g = g * w_[li];
  }
  return g;  // dL/dx
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (size_t l = 0; l < w_.size(); ++l) {
    g.w.push_back(MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    g.b.push_back(VectorXd::Zero(b_[l].size()));
  }
  return g;
}

AdamState Mlp::zero_adam() const {
  AdamState s;
  for (size_t l = 0; l < w_.size(); ++l) {
    s.mw.push_back(MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    s.vw.push_back(MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    s.mb.push_back(VectorXd::Zero(b_[l].size()));
    s.vb.push_back(VectorXd::Zero(b_[l].size()));
  }
  return s;
}

void Mlp::adam_step(const MlpGrads& grads, AdamState& state, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++state.steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.steps));
  for (size_t l = 0; l < w_.size(); ++l) {
    state.mw[l] = beta1 * state.mw[l] + (1.0 - beta1) * grads.w[l];
    state.vw[l] = beta2 * state.vw[l] + (1.0 - beta2) * grads.w[l].cwiseProduct(grads.w[l]);
    w_[l] -= (lr / c1) * state.mw[l].cwiseQuotient(
                             ((state.vw[l] / c2).cwiseSqrt().array() + eps).matrix());
    state.mb[l] = beta1 * state.mb[l] + (1.0 - beta1) * grads.b[l];
    state.vb[l] = beta2 * state.vb[l] + (1.0 - beta2) * grads.b[l].cwiseProduct(grads.b[l]);
    b_[l] -= (lr / c1) * state.mb[l].cwiseQuotient(
                             ((state.vb[l] / c2).cwiseSqrt().array() + eps).matrix());
  }
}

void Mlp::blend_from(const Mlp& src, double tau) {
  for (size_t l = 0; l < w_.size(); ++l) {
    w_[l] = (1.0 - tau) * w_[l] + tau * src.w_[l];
    b_[l] = (1.0 - tau) * b_[l] + tau * src.b_[l];
  }
}

int Mlp::n_params() const {
  int n = 0;
  for (size_t l = 0; l < w_.size(); ++l)
    n += static_cast<int>(w_[l].size() + b_[l].size());
  return n;
}

VectorXd Mlp::flat_params() const {
  VectorXd p(n_params());
  int at = 0;
  for (size_t l = 0; l < w_.size(); ++l) {
    p.segment(at, w_[l].size()) = Eigen::Map<const VectorXd>(w_[l].data(), w_[l].size());
    at += static_cast<int>(w_[l].size());
    p.segment(at, b_[l].size()) = b_[l];
    at += static_cast<int>(b_[l].size());
  }
  return p;
}

void Mlp::set_flat_params(const VectorXd& p) {
  if (p.size() != n_params()) throw std::invalid_argument("parameter vector size mismatch");
  int at = 0;
  for (size_t l = 0; l < w_.size(); ++l) {
    Eigen::Map<VectorXd>(w_[l].data(), w_[l].size()) = p.segment(at, w_[l].size());
    at += static_cast<int>(w_[l].size());
    b_[l] = p.segment(at, b_[l].size());
    at += static_cast<int>(b_[l].size());
  }
}

VectorXd flat_grads(const MlpGrads& grads) {
  int n = 0;
  for (size_t l = 0; l < grads.w.size(); ++l)
    n += static_cast<int>(grads.w[l].size() + grads.b[l].size());
  VectorXd g(n);
  int at = 0;
  for (size_t l = 0; l < grads.w.size(); ++l) {
    g.segment(at, grads.w[l].size()) =
        Eigen::Map<const VectorXd>(grads.w[l].data(), grads.w[l].size());
    at += static_cast<int>(grads.w[l].size());
    g.segment(at, grads.b[l].size()) = grads.b[l];
    at += static_cast<int>(grads.b[l].size());
  }
  return g;
}

void Mlp::save(std::ostream& out) const {
  bio::write_u32(out, static_cast<uint32_t>(w_.size()));
  for (size_t l = 0; l < w_.size(); ++l) {
    bio::write_i64(out, w_[l].rows());
    bio::write_i64(out, w_[l].cols());
    out.write(reinterpret_cast<const char*>(w_[l].data()),
              static_cast<std::streamsize>(sizeof(double)) * w_[l].size());
    bio::write_vec(out, b_[l]);
  }
}

Mlp Mlp::load(std::istream& in) {
  Mlp net;
  const uint32_t layers = bio::read_u32(in);
  for (uint32_t l = 0; l < layers; ++l) {
    const int64_t rows = bio::read_i64(in);
    const int64_t cols = bio::read_i64(in);
    if (rows < 1 || cols < 1 || rows * cols > (1LL << 32))
      throw std::runtime_error("corrupt network shape");
    MatrixXd w(rows, cols);
    in.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(sizeof(double)) * w.size());
    if (!in) throw std::runtime_error("truncated checkpoint stream");
    net.w_.push_back(std::move(w));
    net.b_.push_back(bio::read_vec(in));
  }
  return net;
}

}  // namespace pegsim
