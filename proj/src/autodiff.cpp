#include "vila/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace vila::ad {

namespace {

// A node needs a grad buffer if it is a parameter or depends on one.
bool track(const std::vector<Var>& parents) {
  for (const auto& p : parents) {
    if (p->requires_grad) return true;
  }
  return false;
}

Var make(Matrix val, std::vector<Var> parents,
         std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>(std::move(val), track(parents));
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
}

}  // namespace

Var constant(Matrix v) { return std::make_shared<Node>(std::move(v), false); }

Var parameter(Matrix v) { return std::make_shared<Node>(std::move(v), true); }

void backward(const Var& root) {
  if (root->val.rows() != 1 || root->val.cols() != 1) {
    throw std::invalid_argument("backward root must be scalar");
  }
  // topological order by iterative DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child == 0 && seen.count(node)) {
      stack.pop_back();
      continue;
    }
    if (child < node->parents.size()) {
      Node* next = node->parents[child++].get();
      if (!seen.count(next) && next->requires_grad) stack.emplace_back(next, 0);
    } else {
      if (!seen.count(node)) {
        seen.insert(node);
        order.push_back(node);
      }
      stack.pop_back();
    }
  }
  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b);
  return make(a->val + b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
    if (b->requires_grad) b->grad += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b);
  return make(a->val - b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
    if (b->requires_grad) b->grad -= n.grad;
  });
}

Var scale(const Var& a, double s) {
  return make(a->val * s, {a}, [a, s](Node& n) {
    if (a->requires_grad) a->grad += s * n.grad;
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b);
  return make(a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseProduct(b->val);
    if (b->requires_grad) b->grad += n.grad.cwiseProduct(a->val);
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->val.cols() != b->val.rows()) {
    throw std::invalid_argument("shape mismatch");
  }
  return make(a->val * b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad.noalias() += n.grad * b->val.transpose();
    if (b->requires_grad) b->grad.noalias() += a->val.transpose() * n.grad;
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  if (a->val.cols() != b->val.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  return make(a->val * b->val.transpose(), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad.noalias() += n.grad * b->val;
    if (b->requires_grad) b->grad.noalias() += n.grad.transpose() * a->val;
  });
}

Var add_rowvec(const Var& a, const Var& bias) {
  if (bias->val.rows() != 1 || bias->val.cols() != a->val.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  return make(a->val.rowwise() + bias->val.row(0), {a, bias},
              [a, bias](Node& n) {
                if (a->requires_grad) a->grad += n.grad;
                if (bias->requires_grad) {
                  bias->grad += n.grad.colwise().sum();
                }
              });
}

Var softmax_rows(const Var& a) {
  Matrix y(a->val.rows(), a->val.cols());
  for (Eigen::Index r = 0; r < a->val.rows(); ++r) {
    const double m = a->val.row(r).maxCoeff();
    Eigen::RowVectorXd e = (a->val.row(r).array() - m).exp();
    y.row(r) = e / e.sum();
  }
  auto out = make(y, {a}, nullptr);
  if (out->requires_grad) {
    // capture the softmax output by value to avoid a self-reference cycle
    out->backprop = [a, yval = out->val](Node& n) {
      if (!a->requires_grad) return;
      for (Eigen::Index r = 0; r < yval.rows(); ++r) {
        const double dot = n.grad.row(r).dot(yval.row(r));
        a->grad.row(r) +=
            ((n.grad.row(r).array() - dot) * yval.row(r).array()).matrix();
      }
    };
  }
  return out;
}

Var gelu(const Var& a) {
  const Matrix& x = a->val;
  Matrix y(x.rows(), x.cols());
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    y(i) = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  return make(y, {a}, [a](Node& n) {
    if (!a->requires_grad) return;
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < a->val.size(); ++i) {
      const double v = a->val(i);
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      a->grad(i) += n.grad(i) * (cdf + v * pdf);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = x->val.rows(), cols = x->val.cols();
  if (gamma->val.cols() != cols || beta->val.cols() != cols) {
    throw std::invalid_argument("shape mismatch");
  }
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x->val.row(r).mean();
    const Eigen::RowVectorXd centered = x->val.row(r).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(cols);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gamma->val.row(0).array()).rowwise() +
             beta->val.row(0).array();
  return make(std::move(y), {x, gamma, beta},
              [x, gamma, beta, xhat, inv_std](Node& n) {
                const Eigen::Index cols = x->val.cols();
                if (gamma->requires_grad) {
                  gamma->grad += n.grad.cwiseProduct(xhat).colwise().sum();
                }
                if (beta->requires_grad) beta->grad += n.grad.colwise().sum();
                if (!x->requires_grad) return;
                for (Eigen::Index r = 0; r < x->val.rows(); ++r) {
                  const Eigen::RowVectorXd dxhat =
                      n.grad.row(r).cwiseProduct(gamma->val.row(0));
                  const double mean_dxhat = dxhat.mean();
                  const double mean_dxhat_xhat =
                      dxhat.cwiseProduct(xhat.row(r)).sum() /
                      static_cast<double>(cols);
                  x->grad.row(r) +=
                      inv_std(r) *
                      (dxhat.array() - mean_dxhat -
                       xhat.row(r).array() * mean_dxhat_xhat)
                          .matrix();
                }
              });
}

Var slice_cols(const Var& a, int start, int n) {
  if (start < 0 || n <= 0 || start + n > a->val.cols()) {
    throw std::invalid_argument("slice out of range");
  }
  return make(a->val.middleCols(start, n), {a}, [a, start, n](Node& g) {
    if (a->requires_grad) a->grad.middleCols(start, n) += g.grad;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("empty concat");
  const Eigen::Index rows = parts[0]->val.rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p->val.rows() != rows) throw std::invalid_argument("shape mismatch");
    cols += p->val.cols();
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p->val.cols()) = p->val;
    off += p->val.cols();
  }
  std::vector<Var> parents = parts;
  return make(std::move(y), parents, [parts](Node& n) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->grad += n.grad.middleCols(off, p->val.cols());
      }
      off += p->val.cols();
    }
  });
}

Var select_rows(const Var& a, const std::vector<int>& idx) {
  Matrix y(static_cast<Eigen::Index>(idx.size()), a->val.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a->val.rows()) {
      throw std::invalid_argument("row index out of range");
    }
    y.row(static_cast<Eigen::Index>(i)) = a->val.row(idx[i]);
  }
  return make(std::move(y), {a}, [a, idx](Node& n) {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      a->grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var scatter_rows(const Var& tokens, const Var& mask_token,
                 const std::vector<bool>& visible) {
  if (mask_token->val.rows() != 1 ||
      mask_token->val.cols() != tokens->val.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  const auto n = static_cast<Eigen::Index>(visible.size());
  Matrix y(n, tokens->val.cols());
  Eigen::Index v = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (visible[static_cast<std::size_t>(i)]) {
      if (v >= tokens->val.rows()) {
        throw std::invalid_argument("plan/token count mismatch");
      }
      y.row(i) = tokens->val.row(v++);
    } else {
      y.row(i) = mask_token->val.row(0);
    }
  }
  if (v != tokens->val.rows()) {
    throw std::invalid_argument("plan/token count mismatch");
  }
  return make(std::move(y), {tokens, mask_token},
              [tokens, mask_token, visible](Node& n) {
                Eigen::Index v = 0;
                for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
                  if (visible[static_cast<std::size_t>(i)]) {
                    if (tokens->requires_grad) {
                      tokens->grad.row(v) += n.grad.row(i);
                    }
                    ++v;
                  } else if (mask_token->requires_grad) {
                    mask_token->grad.row(0) += n.grad.row(i);
                  }
                }
              });
}

Var mean_rows(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->val.rows());
  Matrix y = a->val.colwise().mean();
  return make(std::move(y), {a}, [a, inv](Node& n) {
    if (a->requires_grad) {
      a->grad += (n.grad.row(0) * inv).replicate(a->val.rows(), 1);
    }
  });
}

Var mse_rows(const Var& a, const Matrix& target,
             const std::vector<int>& rows) {
  if (target.rows() != a->val.rows() || target.cols() != a->val.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  if (rows.empty()) throw std::invalid_argument("no rows selected");
  const double denom = static_cast<double>(rows.size()) *
                       static_cast<double>(a->val.cols());
  double acc = 0.0;
  for (int r : rows) {
    acc += (a->val.row(r) - target.row(r)).squaredNorm();
  }
  Matrix y(1, 1);
  y(0, 0) = acc / denom;
  return make(std::move(y), {a}, [a, target, rows, denom](Node& n) {
    if (!a->requires_grad) return;
    const double s = 2.0 * n.grad(0, 0) / denom;
    for (int r : rows) {
      a->grad.row(r) += s * (a->val.row(r) - target.row(r));
    }
  });
}

Var mse_full(const Var& a, const Matrix& target) {
  std::vector<int> rows(static_cast<std::size_t>(a->val.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  return mse_rows(a, target, rows);
}

Var ce_with_logits(const Var& logits, int label) {
  if (logits->val.rows() != 1) {
    throw std::invalid_argument("logits must be a row vector");
  }
  if (label < 0 || label >= logits->val.cols()) {
    throw std::invalid_argument("label out of range");
  }
  const double m = logits->val.row(0).maxCoeff();
  const Eigen::RowVectorXd e = (logits->val.row(0).array() - m).exp();
  const double z = e.sum();
  Matrix y(1, 1);
  y(0, 0) = std::log(z) - (logits->val(0, label) - m);
  Eigen::RowVectorXd p = e / z;
  return make(std::move(y), {logits}, [logits, p, label](Node& n) {
    if (!logits->requires_grad) return;
    Eigen::RowVectorXd g = p;
    g(label) -= 1.0;
    logits->grad.row(0) += n.grad(0, 0) * g;
  });
}

}  // namespace vila::ad
