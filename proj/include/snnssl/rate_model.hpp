#pragma once

// Rate approximation of a WTA layer and its analytic derivatives.
//
// With the residual potential dropped, the steady activity of a layer solves
//
//     a_i = s_i / v_th_i + sigma * sum_{j != i} kappa_ij a_j,   s_i = sum_k w_ik x_k
//
// i.e. (I - sigma K) a = s / v_th. The derivatives below are the local
// partials of that fixed-point map (other activities held fixed) and the
// total derivative through the coupled system.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"

namespace snnssl {

/// Layer as seen by the rate model, with a general inhibition matrix
/// (diagonal ignored).
struct RateLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd thresholds;
  Eigen::MatrixXd kappa;
  double sigma = 0.0;

  [[nodiscard]] int outputs() const { return static_cast<int>(weights.rows()); }
  [[nodiscard]] int inputs() const { return static_cast<int>(weights.cols()); }
};

inline Eigen::MatrixXd uniform_kappa(int n, double mu) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Constant(n, n, mu);
  k.diagonal().setZero();
  return k;
}

inline RateLayer rate_layer(const LayerParams& p) {
  return {p.weights, p.thresholds, uniform_kappa(p.outputs(), p.mu), p.sigma};
}

inline Eigen::MatrixXd coupling_matrix(const RateLayer& layer) {
  Eigen::MatrixXd k = layer.kappa;
  k.diagonal().setZero();
  return Eigen::MatrixXd::Identity(layer.outputs(), layer.outputs()) - layer.sigma * k;
}

namespace detail {

inline Eigen::FullPivLU<Eigen::MatrixXd> coupling_lu(const RateLayer& layer) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(coupling_matrix(layer));
  if (!lu.isInvertible()) {
    throw ConfigError("rate model: inhibition coupling (I - sigma*kappa) is singular");
  }
  return lu;
}

}  // namespace detail

inline Eigen::VectorXd rate_drive(const Eigen::VectorXd& x, const RateLayer& layer) {
  if (x.size() != layer.inputs()) throw std::invalid_argument("rate model: input trace size mismatch");
  return layer.weights * x;
}

/// Solves the coupled system. With `clamp`, negative activities are set to 0
/// after the solve.
inline Eigen::VectorXd rate_forward(const Eigen::VectorXd& x, const RateLayer& layer, bool clamp = true) {
  const Eigen::VectorXd rhs = rate_drive(x, layer).cwiseQuotient(layer.thresholds);
  Eigen::VectorXd a = detail::coupling_lu(layer).solve(rhs);
  if (clamp) a = a.cwiseMax(0.0);
  return a;
}

inline Eigen::VectorXd rate_forward(const Eigen::VectorXd& x, const LayerParams& p, bool clamp = true) {
  return rate_forward(x, rate_layer(p), clamp);
}

/// Coordinates pinned at zero by the clamp; their gradients are taken as 0.
inline std::vector<bool> clamped_mask(const Eigen::VectorXd& x, const RateLayer& layer) {
  const Eigen::VectorXd a = rate_forward(x, layer, false);
  std::vector<bool> mask(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) mask[static_cast<std::size_t>(i)] = a[i] < 0.0;
  return mask;
}

/// d a / d x_k for uniform inhibition kappa_ij = mu, in closed form
/// (Sherman-Morrison inverse of (1 + c) I - c J with c = mu * sigma):
///
///   d a_i / d x_k = 1/v_th_i * 1/(1 + c) * (w_ik + c v_th_i / (1 - c (n - 1)) * sum_j w_jk / v_th_j)
inline Eigen::VectorXd grad_a_wrt_x(const LayerParams& p, int k) {
  if (k < 0 || k >= p.inputs()) throw std::out_of_range("grad_a_wrt_x: input index out of range");
  const int n = p.outputs();
  const double c = p.mu * p.sigma;
  const double diag = 1.0 + c;
  const double rank_one = 1.0 - c * (n - 1);
  if (diag == 0.0 || rank_one == 0.0) {
    throw ConfigError("grad_a_wrt_x: mu*sigma makes the inhibition coupling singular");
  }
  const Eigen::VectorXd u = p.weights.col(k).cwiseQuotient(p.thresholds);
  const double total = u.sum();
  return (u.array() + c / rank_one * total) / diag;
}

/// Same derivative for an arbitrary inhibition matrix, via the explicit
/// inverse: d a / d x_k = (I - sigma K)^{-1} (w_.k / v_th).
inline Eigen::VectorXd grad_a_wrt_x_matrix(const RateLayer& layer, int k) {
  if (k < 0 || k >= layer.inputs()) throw std::out_of_range("grad_a_wrt_x_matrix: input index out of range");
  const Eigen::MatrixXd inverse = detail::coupling_lu(layer).inverse();
  return inverse * layer.weights.col(k).cwiseQuotient(layer.thresholds);
}

/// Local partials of the fixed-point map at activity `a`:
///   d a_i / d s_i      = 1 / v_th_i
///   d a_i / d w_ik     = x_k / v_th_i
///   d a_i / d v_th_i   = (-a_i + sigma sum_{j != i} kappa_ij a_j) / v_th_i
///   d a_i / d kappa_ih = sigma a_h           (= (sigma v_th_i a_h) / v_th_i)
struct LocalPartials {
  Eigen::VectorXd d_s;      // n
  Eigen::MatrixXd d_w;      // n x m
  Eigen::VectorXd d_th;     // n
  Eigen::MatrixXd d_kappa;  // n x n, row i holds d a_i / d kappa_i.
};

inline LocalPartials grad_a_wrt_params(const RateLayer& layer, const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
  const int n = layer.outputs();
  if (a.size() != n || x.size() != layer.inputs()) {
    throw std::invalid_argument("grad_a_wrt_params: trace size mismatch");
  }
  Eigen::MatrixXd k = layer.kappa;
  k.diagonal().setZero();
  LocalPartials g;
  g.d_s = layer.thresholds.cwiseInverse();
  g.d_w = g.d_s * x.transpose();
  g.d_th = (-a + layer.sigma * (k * a)).cwiseProduct(g.d_s);
  g.d_kappa = layer.sigma * Eigen::VectorXd::Ones(n) * a.transpose();
  g.d_kappa.diagonal().setZero();
  return g;
}

/// Propagates a local partial (a column over i of d F_i / d theta) through the
/// coupling: d a / d theta = (I - sigma K)^{-1} d F / d theta.
inline Eigen::VectorXd total_derivative(const RateLayer& layer, const Eigen::VectorXd& local) {
  return detail::coupling_lu(layer).solve(local);
}

}  // namespace snnssl
