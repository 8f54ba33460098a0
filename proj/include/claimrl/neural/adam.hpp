#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "claimrl/neural/tensor.hpp"

namespace claimrl::nn {

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Tensor<Scalar> tensor;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

template <typename Scalar>
struct AdamMoments {
  std::vector<Mat<Scalar>> first;
  std::vector<Mat<Scalar>> second;
};

/// One bias-corrected Adam update. `step` is 1-based. Parameters without a
/// gradient are left untouched.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>>& params, AdamMoments<Scalar>& moments, double lr, double beta1,
               double beta2, double eps, std::int64_t step) {
  if (moments.first.size() != params.size()) {
    moments.first.clear();
    moments.second.clear();
    for (const auto& p : params) {
      moments.first.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
      moments.second.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
    }
  }
  const Scalar b1 = static_cast<Scalar>(beta1);
  const Scalar b2 = static_cast<Scalar>(beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1, static_cast<double>(step)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2, static_cast<double>(step)));
  const Scalar a = static_cast<Scalar>(lr);
  const Scalar e = static_cast<Scalar>(eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    const auto& g = p.mutable_grad();
    auto& m = moments.first[i];
    auto& v = moments.second[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.mutable_value().array() -= a * (m.array() / c1) / ((v.array() / c2).sqrt() + e);
  }
}

template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Tensor<Scalar>> params, AdamConfig config) : params_(std::move(params)), config_(config) {}

  /// Returns the global gradient norm before clipping.
  double step() { return step(config_.lr); }

  double step(double lr) {
    double norm2 = 0.0;
    for (auto& p : params_) {
      if (p.has_grad()) norm2 += static_cast<double>(p.mutable_grad().squaredNorm());
    }
    const double norm = std::sqrt(norm2);
    if (config_.grad_clip > 0.0 && norm > config_.grad_clip) {
      const Scalar f = static_cast<Scalar>(config_.grad_clip / norm);
      for (auto& p : params_) {
        if (p.has_grad()) p.mutable_grad() *= f;
      }
    }
    ++t_;
    adam_step(params_, moments_, lr, config_.beta1, config_.beta2, config_.eps, t_);
    return norm;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  AdamConfig config_;
  AdamMoments<Scalar> moments_;
  std::int64_t t_ = 0;
};

template <typename Scalar>
std::vector<Tensor<Scalar>> tensors_of(const std::vector<NamedParameter<Scalar>>& named) {
  std::vector<Tensor<Scalar>> out;
  out.reserve(named.size());
  for (const auto& p : named) out.push_back(p.tensor);
  return out;
}

}  // namespace claimrl::nn
