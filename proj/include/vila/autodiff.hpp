#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

namespace vila::ad {

using Matrix = Eigen::MatrixXd;

// One node of the computation tape. Gradients accumulate into `grad`,
// which matches `val` in shape once backward() has run.
struct Node {
  Matrix val;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents

  explicit Node(Matrix v, bool rg = false)
      : val(std::move(v)), requires_grad(rg) {
    if (requires_grad) grad = Matrix::Zero(val.rows(), val.cols());
  }

  void zero_grad() { grad = Matrix::Zero(val.rows(), val.cols()); }
};

using Var = std::shared_ptr<Node>;

Var constant(Matrix v);
Var parameter(Matrix v);

// Accumulates d(root)/d(param) into every reachable parameter's grad.
// root must be 1x1.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var hadamard(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
// a * b^T without materializing the transpose on the tape
Var matmul_bt(const Var& a, const Var& b);
// broadcast a 1xC bias over every row of a
Var add_rowvec(const Var& a, const Var& bias);
Var softmax_rows(const Var& a);
Var gelu(const Var& a);
// per-row layer norm with learnable 1xC gain/offset
Var layer_norm(const Var& x, const Var& gamma, const Var& beta,
               double eps = 1e-6);
Var slice_cols(const Var& a, int start, int n);
Var concat_cols(const std::vector<Var>& parts);
Var select_rows(const Var& a, const std::vector<int>& idx);
// out row i = tokens row visible_pos(i) if visible[i], else mask_token
Var scatter_rows(const Var& tokens, const Var& mask_token,
                 const std::vector<bool>& visible);
Var mean_rows(const Var& a);  // 1xC
// mean over selected rows (all cells) of (a-target)^2; scalar
Var mse_rows(const Var& a, const Matrix& target, const std::vector<int>& rows);
Var mse_full(const Var& a, const Matrix& target);
// softmax cross-entropy of a 1xK logit row against an integer label; scalar
Var ce_with_logits(const Var& logits, int label);

}  // namespace vila::ad
