#include "oner/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "oner/errors.hpp"

namespace oner {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(where) + ": non-finite value");
    }
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
  }
}

void check_matrix(const Tensor& m, const char* where) {
  if (!m.is_matrix()) {
    throw std::invalid_argument(std::string(where) + ": expected a matrix");
  }
}

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Tensor make_output(std::vector<std::size_t> shape, std::vector<double> data,
                   bool requires_grad, const char* where) {
  check_finite(data, where);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               bool requires_grad) {
  if (shape_product(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape does not match data length");
  }
  check_finite(data, "tensor");
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::vector<double> data(shape_product(shape), 0.0);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (!is_matrix()) throw std::invalid_argument("tensor: not a matrix");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (!is_matrix()) throw std::invalid_argument("tensor: not a matrix");
  return node_->shape[1];
}

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("tensor: not a scalar");
  return node_->data[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- Tape -----------------------------------------------------------------

void Tape::record(std::function<void()> fn,
                  std::initializer_list<std::shared_ptr<TensorNode>> touched) {
  ops_.push_back(std::move(fn));
  for (const auto& n : touched) touched_.push_back(n);
}

void Tape::record(std::function<void()> fn,
                  const std::vector<std::shared_ptr<TensorNode>>& touched) {
  ops_.push_back(std::move(fn));
  for (const auto& n : touched) touched_.push_back(n);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.valid() || !loss.is_scalar()) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument(
        "backward: loss does not require grad (not produced on this tape)");
  }
  for (const auto& n : touched_) {
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::clear() {
  ops_.clear();
  touched_.clear();
}

// ---- op helpers -----------------------------------------------------------

namespace {

// Accumulates `delta * weight` into the grad buffer of `n` when it wants one.
inline void axpy_grad(const std::shared_ptr<TensorNode>& n,
                      std::span<const double> delta, double weight) {
  if (!n->requires_grad) return;
  for (std::size_t i = 0; i < delta.size(); ++i) n->grad[i] += weight * delta[i];
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor r = make_output(a.shape(), std::move(out),
                         a.requires_grad() || b.requires_grad(), "add");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node()] {
          axpy_grad(an, rn->grad, 1.0);
          axpy_grad(bn, rn->grad, 1.0);
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor r = make_output(a.shape(), std::move(out),
                         a.requires_grad() || b.requires_grad(), "sub");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node()] {
          axpy_grad(an, rn->grad, 1.0);
          axpy_grad(bn, rn->grad, -1.0);
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor r = make_output(a.shape(), std::move(out),
                         a.requires_grad() || b.requires_grad(), "mul");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node()] {
          if (an->requires_grad) {
            for (std::size_t i = 0; i < rn->grad.size(); ++i)
              an->grad[i] += rn->grad[i] * bn->data[i];
          }
          if (bn->requires_grad) {
            for (std::size_t i = 0; i < rn->grad.size(); ++i)
              bn->grad[i] += rn->grad[i] * an->data[i];
          }
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.at(i);
  Tensor r = make_output(a.shape(), std::move(out), a.requires_grad(), "scale");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), rn = r.node(), c] { axpy_grad(an, rn->grad, c); },
        {a.node(), r.node()});
  }
  return r;
}

Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s) {
  if (!s.is_scalar()) {
    throw std::invalid_argument("scale_by: scale factor must be scalar");
  }
  const double c = s.value();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.at(i);
  Tensor r = make_output(a.shape(), std::move(out),
                         a.requires_grad() || s.requires_grad(), "scale_by");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), sn = s.node(), rn = r.node()] {
          const double c = sn->data[0];
          if (an->requires_grad) {
            for (std::size_t i = 0; i < rn->grad.size(); ++i)
              an->grad[i] += c * rn->grad[i];
          }
          if (sn->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rn->grad.size(); ++i)
              acc += an->data[i] * rn->grad[i];
            sn->grad[0] += acc;
          }
        },
        {a.node(), s.node(), r.node()});
  }
  return r;
}

// ---- reductions -----------------------------------------------------------

Tensor sum(Tape& tape, const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor r = make_output({1}, {acc}, a.requires_grad(), "sum");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), rn = r.node()] {
          const double g = rn->grad[0];
          for (double& gi : an->grad) gi += g;
        },
        {a.node(), r.node()});
  }
  return r;
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor r = make_output({1}, {acc * inv}, a.requires_grad(), "mean");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), rn = r.node(), inv] {
          const double g = rn->grad[0] * inv;
          for (double& gi : an->grad) gi += g;
        },
        {a.node(), r.node()});
  }
  return r;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
  Tensor r = make_output({1}, {acc},
                         a.requires_grad() || b.requires_grad(), "dot");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node()] {
          const double g = rn->grad[0];
          if (an->requires_grad)
            for (std::size_t i = 0; i < an->data.size(); ++i)
              an->grad[i] += g * bn->data[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < bn->data.size(); ++i)
              bn->grad[i] += g * an->data[i];
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor norm2(Tape& tape, const Tensor& a) {
  const double n = norm_of(a.data());
  Tensor r = make_output({1}, {n}, a.requires_grad(), "norm2");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), rn = r.node()] {
          const double n = rn->data[0];
          if (n == 0.0) return;  // subgradient 0 at the kink
          const double g = rn->grad[0] / n;
          for (std::size_t i = 0; i < an->data.size(); ++i)
            an->grad[i] += g * an->data[i];
        },
        {a.node(), r.node()});
  }
  return r;
}

// ---- normalization and similarity -----------------------------------------

Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: length mismatch");
  }
  const double na = norm_of(a.data());
  const double nb = norm_of(b.data());
  if (na == 0.0) {
    throw std::domain_error("cosine_similarity: first argument has zero norm");
  }
  if (nb == 0.0) {
    throw std::domain_error(
        "cosine_similarity: second argument has zero norm");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i) * b.at(i);
  const double c = s / (na * nb);
  Tensor r = make_output({1}, {c}, a.requires_grad() || b.requires_grad(),
                         "cosine_similarity");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node(), na, nb, c] {
          const double g = rn->grad[0];
          if (an->requires_grad) {
            const double inv = 1.0 / (na * nb);
            const double ca = c / (na * na);
            for (std::size_t i = 0; i < an->data.size(); ++i)
              an->grad[i] += g * (bn->data[i] * inv - ca * an->data[i]);
          }
          if (bn->requires_grad) {
            const double inv = 1.0 / (na * nb);
            const double cb = c / (nb * nb);
            for (std::size_t i = 0; i < bn->data.size(); ++i)
              bn->grad[i] += g * (an->data[i] * inv - cb * bn->data[i]);
          }
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor l2_normalize(Tape& tape, const Tensor& v) {
  const double n = norm_of(v.data());
  if (n == 0.0) throw std::domain_error("l2_normalize: zero vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.at(i) / n;
  Tensor r =
      make_output(v.shape(), std::move(out), v.requires_grad(), "l2_normalize");
  if (r.requires_grad()) {
    tape.record(
        [vn = v.node(), rn = r.node(), n] {
          double proj = 0.0;
          for (std::size_t i = 0; i < rn->data.size(); ++i)
            proj += rn->data[i] * rn->grad[i];
          for (std::size_t i = 0; i < vn->data.size(); ++i)
            vn->grad[i] += (rn->grad[i] - rn->data[i] * proj) / n;
        },
        {v.node(), r.node()});
  }
  return r;
}

Tensor row_l2_normalize(Tape& tape, const Tensor& m) {
  check_matrix(m, "row_l2_normalize");
  const std::size_t R = m.rows(), C = m.cols();
  std::vector<double> out(m.size());
  std::vector<double> norms(R);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += m.at(r * C + c) * m.at(r * C + c);
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      throw std::domain_error("row_l2_normalize: row " + std::to_string(r) +
                              " has zero norm");
    }
    for (std::size_t c = 0; c < C; ++c)
      out[r * C + c] = m.at(r * C + c) / norms[r];
  }
  Tensor r = make_output(m.shape(), std::move(out), m.requires_grad(),
                         "row_l2_normalize");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), rn = r.node(), norms, R, C] {
          for (std::size_t row = 0; row < R; ++row) {
            double proj = 0.0;
            for (std::size_t c = 0; c < C; ++c)
              proj += rn->data[row * C + c] * rn->grad[row * C + c];
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t i = row * C + c;
              mn->grad[i] += (rn->grad[i] - rn->data[i] * proj) / norms[row];
            }
          }
        },
        {m.node(), r.node()});
  }
  return r;
}

// ---- matrix ops -----------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ");
  }
  const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
  std::vector<double> out(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a.at(i * K + k);
      for (std::size_t j = 0; j < N; ++j)
        out[i * N + j] += av * b.at(k * N + j);
    }
  Tensor r = make_output({M, N}, std::move(out),
                         a.requires_grad() || b.requires_grad(), "matmul");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node(), M, K, N] {
          if (an->requires_grad) {
            // dA = dOut * B^T
            for (std::size_t i = 0; i < M; ++i)
              for (std::size_t k = 0; k < K; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < N; ++j)
                  acc += rn->grad[i * N + j] * bn->data[k * N + j];
                an->grad[i * K + k] += acc;
              }
          }
          if (bn->requires_grad) {
            // dB = A^T * dOut
            for (std::size_t k = 0; k < K; ++k)
              for (std::size_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < M; ++i)
                  acc += an->data[i * K + k] * rn->grad[i * N + j];
                bn->grad[k * N + j] += acc;
              }
          }
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions differ");
  }
  const std::size_t M = a.rows(), K = a.cols(), N = b.rows();
  std::vector<double> out(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        acc += a.at(i * K + k) * b.at(j * K + k);
      out[i * N + j] = acc;
    }
  Tensor r = make_output({M, N}, std::move(out),
                         a.requires_grad() || b.requires_grad(), "matmul_nt");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node(), M, K, N] {
          if (an->requires_grad) {
            // dA = dOut * B
            for (std::size_t i = 0; i < M; ++i)
              for (std::size_t k = 0; k < K; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < N; ++j)
                  acc += rn->grad[i * N + j] * bn->data[j * K + k];
                an->grad[i * K + k] += acc;
              }
          }
          if (bn->requires_grad) {
            // dB = dOut^T * A
            for (std::size_t j = 0; j < N; ++j)
              for (std::size_t k = 0; k < K; ++k) {
                double acc = 0.0;
                for (std::size_t i = 0; i < M; ++i)
                  acc += rn->grad[i * N + j] * an->data[i * K + k];
                bn->grad[j * K + k] += acc;
              }
          }
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor add_rowvec(Tape& tape, const Tensor& m, const Tensor& v) {
  check_matrix(m, "add_rowvec");
  if (v.size() != m.cols()) {
    throw std::invalid_argument("add_rowvec: vector length != matrix cols");
  }
  const std::size_t R = m.rows(), C = m.cols();
  std::vector<double> out(m.size());
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      out[r * C + c] = m.at(r * C + c) + v.at(c);
  Tensor r = make_output(m.shape(), std::move(out),
                         m.requires_grad() || v.requires_grad(), "add_rowvec");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), vn = v.node(), rn = r.node(), R, C] {
          if (mn->requires_grad)
            for (std::size_t i = 0; i < rn->grad.size(); ++i)
              mn->grad[i] += rn->grad[i];
          if (vn->requires_grad)
            for (std::size_t row = 0; row < R; ++row)
              for (std::size_t c = 0; c < C; ++c)
                vn->grad[c] += rn->grad[row * C + c];
        },
        {m.node(), v.node(), r.node()});
  }
  return r;
}

// ---- nonlinearities --------------------------------------------------------

Tensor row_softmax(Tape& tape, const Tensor& m) {
  check_matrix(m, "row_softmax");
  const std::size_t R = m.rows(), C = m.cols();
  std::vector<double> out(m.size());
  for (std::size_t r = 0; r < R; ++r) {
    double mx = m.at(r * C);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, m.at(r * C + c));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out[r * C + c] = std::exp(m.at(r * C + c) - mx);
      z += out[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] /= z;
  }
  Tensor r =
      make_output(m.shape(), std::move(out), m.requires_grad(), "row_softmax");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), rn = r.node(), R, C] {
          for (std::size_t row = 0; row < R; ++row) {
            double inner = 0.0;
            for (std::size_t c = 0; c < C; ++c)
              inner += rn->grad[row * C + c] * rn->data[row * C + c];
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t i = row * C + c;
              mn->grad[i] += rn->data[i] * (rn->grad[i] - inner);
            }
          }
        },
        {m.node(), r.node()});
  }
  return r;
}

Tensor layer_norm(Tape& tape, const Tensor& m, const Tensor& gain,
                  const Tensor& bias, double eps) {
  check_matrix(m, "layer_norm");
  const std::size_t R = m.rows(), C = m.cols();
  if (gain.size() != C || bias.size() != C) {
    throw std::invalid_argument("layer_norm: gain/bias length != cols");
  }
  std::vector<double> out(m.size());
  std::vector<double> xhat(m.size());
  std::vector<double> inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += m.at(r * C + c);
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = m.at(r * C + c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(C);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = r * C + c;
      xhat[i] = (m.at(i) - mu) * inv_std[r];
      out[i] = xhat[i] * gain.at(c) + bias.at(c);
    }
  }
  const bool rg =
      m.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Tensor r = make_output(m.shape(), std::move(out), rg, "layer_norm");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), gn = gain.node(), bn = bias.node(), rn = r.node(),
         xhat, inv_std, R, C] {
          for (std::size_t row = 0; row < R; ++row) {
            if (mn->requires_grad) {
              double sum_g = 0.0, sum_gx = 0.0;
              for (std::size_t c = 0; c < C; ++c) {
                const std::size_t i = row * C + c;
                const double gi = rn->grad[i] * gn->data[c];
                sum_g += gi;
                sum_gx += gi * xhat[i];
              }
              const double invC = 1.0 / static_cast<double>(C);
              for (std::size_t c = 0; c < C; ++c) {
                const std::size_t i = row * C + c;
                const double gi = rn->grad[i] * gn->data[c];
                mn->grad[i] +=
                    inv_std[row] * (gi - invC * sum_g - invC * xhat[i] * sum_gx);
              }
            }
            if (gn->requires_grad)
              for (std::size_t c = 0; c < C; ++c)
                gn->grad[c] += rn->grad[row * C + c] * xhat[row * C + c];
            if (bn->requires_grad)
              for (std::size_t c = 0; c < C; ++c)
                bn->grad[c] += rn->grad[row * C + c];
          }
        },
        {m.node(), gain.node(), bias.node(), r.node()});
  }
  return r;
}

Tensor gelu(Tape& tape, const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  Tensor r = make_output(a.shape(), std::move(out), a.requires_grad(), "gelu");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), rn = r.node()] {
          for (std::size_t i = 0; i < an->data.size(); ++i) {
            const double x = an->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            an->grad[i] += rn->grad[i] * (cdf + x * pdf);
          }
        },
        {a.node(), r.node()});
  }
  return r;
}

// ---- shape ops -------------------------------------------------------------

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix(a, "concat_rows");
  check_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("concat_rows: column counts differ");
  }
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Tensor r = make_output({a.rows() + b.rows(), a.cols()}, std::move(out),
                         a.requires_grad() || b.requires_grad(), "concat_rows");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node()] {
          const std::size_t na = an->data.size();
          if (an->requires_grad)
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += rn->grad[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < bn->data.size(); ++i)
              bn->grad[i] += rn->grad[na + i];
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor slice_rows(Tape& tape, const Tensor& m, std::size_t begin,
                  std::size_t end) {
  check_matrix(m, "slice_rows");
  if (begin >= end || end > m.rows()) {
    throw std::invalid_argument("slice_rows: bad range");
  }
  const std::size_t C = m.cols();
  std::vector<double> out(m.data().begin() + begin * C,
                          m.data().begin() + end * C);
  Tensor r = make_output({end - begin, C}, std::move(out), m.requires_grad(),
                         "slice_rows");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), rn = r.node(), begin, C] {
          for (std::size_t i = 0; i < rn->grad.size(); ++i)
            mn->grad[begin * C + i] += rn->grad[i];
        },
        {m.node(), r.node()});
  }
  return r;
}

Tensor slice_cols(Tape& tape, const Tensor& m, std::size_t begin,
                  std::size_t end) {
  check_matrix(m, "slice_cols");
  if (begin >= end || end > m.cols()) {
    throw std::invalid_argument("slice_cols: bad range");
  }
  const std::size_t R = m.rows(), C = m.cols(), W = end - begin;
  std::vector<double> out(R * W);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < W; ++c)
      out[r * W + c] = m.at(r * C + begin + c);
  Tensor r =
      make_output({R, W}, std::move(out), m.requires_grad(), "slice_cols");
  if (r.requires_grad()) {
    tape.record(
        [mn = m.node(), rn = r.node(), begin, R, C, W] {
          for (std::size_t row = 0; row < R; ++row)
            for (std::size_t c = 0; c < W; ++c)
              mn->grad[row * C + begin + c] += rn->grad[row * W + c];
        },
        {m.node(), r.node()});
  }
  return r;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix(a, "concat_cols");
  check_matrix(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("concat_cols: row counts differ");
  }
  const std::size_t R = a.rows(), Ca = a.cols(), Cb = b.cols();
  std::vector<double> out(R * (Ca + Cb));
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < Ca; ++c)
      out[r * (Ca + Cb) + c] = a.at(r * Ca + c);
    for (std::size_t c = 0; c < Cb; ++c)
      out[r * (Ca + Cb) + Ca + c] = b.at(r * Cb + c);
  }
  Tensor r = make_output({R, Ca + Cb}, std::move(out),
                         a.requires_grad() || b.requires_grad(), "concat_cols");
  if (r.requires_grad()) {
    tape.record(
        [an = a.node(), bn = b.node(), rn = r.node(), R, Ca, Cb] {
          for (std::size_t row = 0; row < R; ++row) {
            if (an->requires_grad)
              for (std::size_t c = 0; c < Ca; ++c)
                an->grad[row * Ca + c] += rn->grad[row * (Ca + Cb) + c];
            if (bn->requires_grad)
              for (std::size_t c = 0; c < Cb; ++c)
                bn->grad[row * Cb + c] += rn->grad[row * (Ca + Cb) + Ca + c];
          }
        },
        {a.node(), b.node(), r.node()});
  }
  return r;
}

Tensor maximum_of(Tape& tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("maximum_of: empty input");
  bool rg = false;
  std::size_t best = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i].is_scalar()) {
      throw std::invalid_argument("maximum_of: inputs must be scalars");
    }
    rg = rg || xs[i].requires_grad();
    if (xs[i].value() > xs[best].value()) best = i;
  }
  Tensor r = make_output({1}, {xs[best].value()}, rg, "maximum_of");
  if (r.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode>> touched;
    touched.reserve(xs.size() + 1);
    for (const Tensor& x : xs) touched.push_back(x.node());
    touched.push_back(r.node());
    tape.record(
        [wn = xs[best].node(), rn = r.node()] {
          if (wn->requires_grad) wn->grad[0] += rn->grad[0];
        },
        touched);
  }
  return r;
}

}  // namespace oner
