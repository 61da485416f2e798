#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace oner {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data iff requires_grad, else empty
  bool requires_grad = false;
};

// Shared handle to a dense row-major f64 buffer. Copies alias the same
// storage; ops return fresh nodes. Construction rejects non-finite values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape,
                      bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  bool is_scalar() const { return size() == 1; }
  bool is_matrix() const { return node_->shape.size() == 2; }
  std::size_t rows() const;
  std::size_t cols() const;

  double value() const;  // scalar tensors only
  double at(std::size_t flat_index) const { return node_->data[flat_index]; }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Ordered record of differentiable primitive ops. Ops append themselves in
// execution order, so reverse iteration is a valid topological backward
// pass that touches each op exactly once. One logical owner at a time.
class Tape {
 public:
  // Runs reverse-mode accumulation from a scalar loss. Grads of every node
  // the tape touched are overwritten (zeroed first), never accumulated
  // across calls.
  void backward(const Tensor& loss);

  std::size_t op_count() const { return ops_.size(); }
  void clear();

  // Implementation hook for ops: `fn` propagates output grad to inputs.
  void record(std::function<void()> fn,
              std::initializer_list<std::shared_ptr<TensorNode>> touched);
  void record(std::function<void()> fn,
              const std::vector<std::shared_ptr<TensorNode>>& touched);

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<TensorNode>> touched_;
};

// ---- primitive ops -------------------------------------------------------
// All ops validate shapes, reject non-finite results, and record a backward
// rule on the tape when any input requires grad.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s);  // s scalar

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);
Tensor norm2(Tape& tape, const Tensor& a);

// <a,b> / (|a||b|). Throws std::domain_error naming the zero-norm argument.
Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b);
Tensor l2_normalize(Tape& tape, const Tensor& v);
Tensor row_l2_normalize(Tape& tape, const Tensor& m);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a (m x k) times b^T where b is (n x k); avoids a transpose op.
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add_rowvec(Tape& tape, const Tensor& m, const Tensor& v);

Tensor row_softmax(Tape& tape, const Tensor& m);
Tensor layer_norm(Tape& tape, const Tensor& m, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);
Tensor gelu(Tape& tape, const Tensor& a);

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_rows(Tape& tape, const Tensor& m, std::size_t begin,
                  std::size_t end);
Tensor slice_cols(Tape& tape, const Tensor& m, std::size_t begin,
                  std::size_t end);
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);

// Max over scalar tensors; gradient flows to the first argmax.
Tensor maximum_of(Tape& tape, const std::vector<Tensor>& xs);

}  // namespace oner
