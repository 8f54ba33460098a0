#include <cmath>
#include <limits>
#include <string>

#include "claimrl/neural/ops.hpp"

namespace claimrl::nn {

namespace {

template <typename Scalar, typename Expr>
void accumulate(Node<Scalar>& parent, const Expr& g) {
  if (!parent.requires_grad) return;
  parent.grad_buffer() += g;
}

[[noreturn]] void shape_error(const char* op, Eigen::Index r1, Eigen::Index c1, Eigen::Index r2, Eigen::Index c2) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(r1) + "x" + std::to_string(c1) +
                              " vs " + std::to_string(r2) + "x" + std::to_string(c2));
}

template <typename Scalar>
void require_same(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a.rows(), a.cols(), b.rows(), b.cols());
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  Mat<Scalar> out = a.value() * b.value();
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.grad_buffer().noalias() += self.grad * B.value.transpose();
    if (B.requires_grad) B.grad_buffer().noalias() += A.value.transpose() * self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
  Mat<Scalar> out = a.value() * b.value().transpose();
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.grad_buffer().noalias() += self.grad * B.value;
    if (B.requires_grad) B.grad_buffer().noalias() += self.grad.transpose() * A.value;
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same("add", a, b);
  Mat<Scalar> out = a.value() + b.value();
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same("sub", a, b);
  Mat<Scalar> out = a.value() - b.value();
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same("mul", a, b);
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    accumulate(A, self.grad.cwiseProduct(B.value));
    accumulate(B, self.grad.cwiseProduct(A.value));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  Mat<Scalar> out = a.value() * s;
  return make_result<Scalar>(std::move(out), {a.node()},
                             [s](Node<Scalar>& self) { accumulate(*self.parents[0], self.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.rows(), a.cols(), row.rows(), row.cols());
  Mat<Scalar> out = a.value().rowwise() + row.value().row(0);
  return make_result<Scalar>(std::move(out), {a.node(), row.node()}, [](Node<Scalar>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  Mat<Scalar> out = a.value().array().exp().matrix();
  return make_result<Scalar>(std::move(out), {a.node()}, [](Node<Scalar>& self) {
    accumulate(*self.parents[0], self.grad.cwiseProduct(self.value));
  });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  Mat<Scalar> out = a.value().array().square().matrix();
  return make_result<Scalar>(std::move(out), {a.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    accumulate(A, (self.grad.array() * A.value.array() * Scalar(2)).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> minimum(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same("minimum", a, b);
  Mat<Scalar> out = a.value().cwiseMin(b.value());
  return make_result<Scalar>(std::move(out), {a.node(), b.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    // Ties route to the first argument.
    const auto pick_a = (A.value.array() <= B.value.array()).template cast<Scalar>();
    accumulate(A, (self.grad.array() * pick_a).matrix());
    accumulate(B, (self.grad.array() * (Scalar(1) - pick_a)).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  Mat<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_result<Scalar>(std::move(out), {a.node()}, [lo, hi](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    const auto inside = ((A.value.array() >= lo) && (A.value.array() <= hi)).template cast<Scalar>();
    accumulate(A, (self.grad.array() * inside).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  const Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar c = Scalar(0.044715);
  const auto& x = a.value().array();
  Mat<Scalar> out = (Scalar(0.5) * x * (Scalar(1) + (k * (x + c * x.cube())).tanh())).matrix();
  return make_result<Scalar>(std::move(out), {a.node()}, [k, c](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    const auto x = A.value.array();
    const auto t = (k * (x + c * x.cube())).tanh();
    const auto d = Scalar(0.5) * (Scalar(1) + t) +
                   Scalar(0.5) * x * (Scalar(1) - t.square()) * k * (Scalar(1) + Scalar(3) * c * x.square());
    accumulate(A, (self.grad.array() * d).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result<Scalar>(std::move(out), {a.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    if (A.requires_grad) A.grad_buffer().array() += self.grad(0, 0);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.size() == 0) throw std::invalid_argument("mean of an empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows of an empty tensor");
  Mat<Scalar> out = a.value().colwise().mean();
  return make_result<Scalar>(std::move(out), {a.node()}, [](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    if (!A.requires_grad) return;
    const Scalar inv = Scalar(1) / static_cast<Scalar>(A.value.rows());
    A.grad_buffer().rowwise() += self.grad.row(0) * inv;
  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: range outside tensor");
  Mat<Scalar> out = a.value().middleRows(start, count);
  return make_result<Scalar>(std::move(out), {a.node()}, [start, count](Node<Scalar>& self) {
    auto& A = *self.parents[0];
    if (A.requires_grad) A.grad_buffer().middleRows(start, count) += self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias, Scalar eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm gain", x.rows(), d, gain.rows(), gain.cols());
  if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm bias", x.rows(), d, bias.rows(), bias.cols());
  Mat<Scalar> xhat(n, d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mu = x.value().row(i).mean();
    const Scalar var = (x.value().row(i).array() - mu).square().mean();
    rstd(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * rstd(i);
  }
  Mat<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_result<Scalar>(
      std::move(out), {x.node(), gain.node(), bias.node()},
      [xhat = std::move(xhat), rstd = std::move(rstd)](Node<Scalar>& self) {
        auto& X = *self.parents[0];
        auto& G = *self.parents[1];
        auto& B = *self.parents[2];
        accumulate(G, self.grad.cwiseProduct(xhat).colwise().sum());
        accumulate(B, self.grad.colwise().sum());
        if (!X.requires_grad) return;
        Mat<Scalar> dxhat = (self.grad.array().rowwise() * G.value.row(0).array()).matrix();
        auto& dx = X.grad_buffer();
        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
          const Scalar m1 = dxhat.row(i).mean();
          const Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
          dx.row(i).array() += rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
      });
}

template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const std::int32_t> ids) {
  Mat<Scalar> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw std::out_of_range("embedding id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<std::int32_t> keep(ids.begin(), ids.end());
  return make_result<Scalar>(std::move(out), {table.node()}, [keep = std::move(keep)](Node<Scalar>& self) {
    auto& T = *self.parents[0];
    if (!T.requires_grad) return;
    auto& g = T.grad_buffer();
    for (std::size_t i = 0; i < keep.size(); ++i) g.row(keep[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& qkv, int heads, bool causal) {
  const Eigen::Index T = qkv.rows();
  if (qkv.cols() % 3 != 0) throw std::invalid_argument("attention: packed qkv width must be a multiple of 3");
  const Eigen::Index d = qkv.cols() / 3;
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  const Eigen::Index hd = d / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  const auto& v = qkv.value();

  std::vector<Mat<Scalar>> probs(static_cast<std::size_t>(heads));
  Mat<Scalar> out(T, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * hd;
    Mat<Scalar> s = v.middleCols(off, hd) * v.middleCols(d + off, hd).transpose() * inv_sqrt;
    for (Eigen::Index i = 0; i < T; ++i) {
      const Eigen::Index width = causal ? i + 1 : T;
      auto row = s.row(i).head(width);
      const Scalar m = row.maxCoeff();
      row = (row.array() - m).exp().matrix();
      row /= row.sum();
      if (width < T) s.row(i).tail(T - width).setZero();
    }
    out.middleCols(off, hd).noalias() = s * v.middleCols(2 * d + off, hd);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  return make_result<Scalar>(
      std::move(out), {qkv.node()}, [probs = std::move(probs), heads, d, hd, inv_sqrt](Node<Scalar>& self) {
        auto& Q = *self.parents[0];
        if (!Q.requires_grad) return;
        const auto& v = Q.value;
        auto& g = Q.grad_buffer();
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index off = h * hd;
          const Mat<Scalar>& p = probs[static_cast<std::size_t>(h)];
          const auto dout = self.grad.middleCols(off, hd);
          g.middleCols(2 * d + off, hd).noalias() += p.transpose() * dout;
          Mat<Scalar> dp = dout * v.middleCols(2 * d + off, hd).transpose();
          // softmax backward; masked entries have p = 0 and drop out.
          Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = (dp.cwiseProduct(p)).rowwise().sum();
          Mat<Scalar> ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * inv_sqrt;
          g.middleCols(off, hd).noalias() += ds * v.middleCols(d + off, hd);
          g.middleCols(d + off, hd).noalias() += ds.transpose() * v.middleCols(off, hd);
        }
      });
}

template <typename Scalar>
Mat<Scalar> log_softmax_rows(const Mat<Scalar>& logits) {
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> log_softmax_gather(const Tensor<Scalar>& logits, std::span<const std::int32_t> targets) {
  const Eigen::Index T = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != T)
    throw std::invalid_argument("log_softmax_gather: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(T) + " rows");
  Mat<Scalar> lsm = log_softmax_rows(logits.value());
  Mat<Scalar> out(T, 1);
  for (Eigen::Index i = 0; i < T; ++i) {
    const auto t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols())
      throw std::out_of_range("target id " + std::to_string(t) + " outside vocabulary of " +
                              std::to_string(logits.cols()));
    out(i, 0) = lsm(i, t);
  }
  std::vector<std::int32_t> keep(targets.begin(), targets.end());
  return make_result<Scalar>(std::move(out), {logits.node()},
                             [lsm = std::move(lsm), keep = std::move(keep)](Node<Scalar>& self) {
                               auto& L = *self.parents[0];
                               if (!L.requires_grad) return;
                               auto& g = L.grad_buffer();
                               for (Eigen::Index i = 0; i < lsm.rows(); ++i) {
                                 const Scalar gi = self.grad(i, 0);
                                 if (gi == Scalar(0)) continue;
                                 g.row(i).array() -= gi * lsm.row(i).array().exp();
                                 g(i, keep[static_cast<std::size_t>(i)]) += gi;
                               }
                             });
}

template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, std::span<const int> labels) {
  if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != labels.size())
    throw std::invalid_argument("bce_with_logits: logits must be n x 1 matching labels");
  const Eigen::Index n = logits.rows();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar z = logits.value()(i, 0);
    const Scalar y = static_cast<Scalar>(labels[static_cast<std::size_t>(i)]);
    // max(z,0) - z*y + log(1 + exp(-|z|))
    total += std::max(z, Scalar(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(n);
  std::vector<int> keep(labels.begin(), labels.end());
  return make_result<Scalar>(std::move(out), {logits.node()}, [keep = std::move(keep)](Node<Scalar>& self) {
    auto& L = *self.parents[0];
    if (!L.requires_grad) return;
    const Eigen::Index n = L.value.rows();
    auto& g = L.grad_buffer();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar z = L.value(i, 0);
      const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-z));
      g(i, 0) += self.grad(0, 0) * (p - static_cast<Scalar>(keep[static_cast<std::size_t>(i)])) / static_cast<Scalar>(n);
    }
  });
}

#define CLAIMRL_INSTANTIATE_OPS(S)                                                                          \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> matmul_nt(const Tensor<S>&, const Tensor<S>&);                                         \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                               \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                               \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                               \
  template Tensor<S> scale(const Tensor<S>&, S);                                                            \
  template Tensor<S> add_row(const Tensor<S>&, const Tensor<S>&);                                           \
  template Tensor<S> exp(const Tensor<S>&);                                                                 \
  template Tensor<S> square(const Tensor<S>&);                                                              \
  template Tensor<S> minimum(const Tensor<S>&, const Tensor<S>&);                                           \
  template Tensor<S> clamp(const Tensor<S>&, S, S);                                                         \
  template Tensor<S> gelu(const Tensor<S>&);                                                                \
  template Tensor<S> sum(const Tensor<S>&);                                                                 \
  template Tensor<S> mean(const Tensor<S>&);                                                                \
  template Tensor<S> mean_rows(const Tensor<S>&);                                                           \
  template Tensor<S> slice_rows(const Tensor<S>&, Eigen::Index, Eigen::Index);                              \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);                   \
  template Tensor<S> embedding(const Tensor<S>&, std::span<const std::int32_t>);                            \
  template Tensor<S> attention(const Tensor<S>&, int, bool);                                                \
  template Tensor<S> log_softmax_gather(const Tensor<S>&, std::span<const std::int32_t>);                   \
  template Tensor<S> bce_with_logits(const Tensor<S>&, std::span<const int>);                               \
  template Mat<S> log_softmax_rows(const Mat<S>&);

CLAIMRL_INSTANTIATE_OPS(float)
CLAIMRL_INSTANTIATE_OPS(double)

}  // namespace claimrl::nn
