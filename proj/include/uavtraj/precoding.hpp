#pragma once

// Zero-forcing downlink: pseudoinverse precoder with total-power
// normalization, per-user SNR, Shannon rates and the hover duration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace uavtraj {

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxGramCondition = 1e12;
inline constexpr double kHoverCapSeconds = 1e3;

struct ZfPrecoder {
  Eigen::MatrixXcd W;  // N_t x K_n
  double xi = 0.0;
};

/// Condition number of H H^H (2-norm), infinity when singular.
inline double gram_condition(const Eigen::MatrixXcd& H) {
  const Eigen::MatrixXcd gram = H * H.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// W = xi H^H (H H^H)^{-1} with xi = sqrt(K_n / tr(H^+ H^+^H)), so H W = xi I
/// and tr(W W^H) = K_n. The Gram inverse goes through a Cholesky factorization.
inline ZfPrecoder zf_precoder(const Eigen::MatrixXcd& H) {
  const auto k = H.rows();
  if (k == 0) throw std::invalid_argument("empty channel matrix");
  if (k > H.cols()) throw std::invalid_argument("ZF needs K_n <= N_t");
  if (!H.allFinite()) throw DegenerateGeometry("non-finite channel entries");
  if (gram_condition(H) > kMaxGramCondition) throw DegenerateGeometry("channel Gram matrix is ill-conditioned");

  const Eigen::MatrixXcd gram = H * H.adjoint();
  Eigen::LLT<Eigen::MatrixXcd> llt(gram);
  if (llt.info() != Eigen::Success) throw DegenerateGeometry("channel Gram matrix is not positive definite");
  const Eigen::MatrixXcd gram_inv = llt.solve(Eigen::MatrixXcd::Identity(k, k));
  const Eigen::MatrixXcd pinv = H.adjoint() * gram_inv;

  ZfPrecoder out;
  out.xi = std::sqrt(static_cast<double>(k) / pinv.squaredNorm());
  out.W = out.xi * pinv;
  return out;
}

/// rho_k = P |h_k w_k|^2 / sigma^2 (row k of H against column k of W).
inline Eigen::VectorXd per_user_snr(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& W, double power,
                                    double noise) {
  if (H.rows() != W.cols() || H.cols() != W.rows()) throw std::invalid_argument("H/W shape mismatch");
  Eigen::VectorXd snr(H.rows());
  for (Eigen::Index k = 0; k < H.rows(); ++k) snr[k] = power * std::norm(H.row(k).transpose().cwiseProduct(W.col(k)).sum()) / noise;
  return snr;
}

struct RatesAndHover {
  Eigen::VectorXd rates;  // bit/s
  double hover_time = 0.0;
};

/// R_k = B log2(1 + rho_k); hover = max_k D_k / R_k, capped at kHoverCapSeconds.
inline RatesAndHover rates_and_hover(const Eigen::VectorXd& snr, double bandwidth_hz,
                                     const std::vector<double>& file_bits) {
  if (static_cast<std::size_t>(snr.size()) != file_bits.size())
    throw std::invalid_argument("one file size per active user is required");
  RatesAndHover out;
  out.rates.resize(snr.size());
  for (Eigen::Index k = 0; k < snr.size(); ++k) {
    out.rates[k] = bandwidth_hz * std::log2(1.0 + std::max(snr[k], 0.0));
    const double t = out.rates[k] > 0.0 ? file_bits[static_cast<std::size_t>(k)] / out.rates[k] : kHoverCapSeconds;
    out.hover_time = std::max(out.hover_time, t);
  }
  out.hover_time = std::min(out.hover_time, kHoverCapSeconds);
  return out;
}

struct LinkBudget {
  Eigen::MatrixXcd H;
  Eigen::MatrixXcd W;
  double xi = 0.0;
  Eigen::VectorXd snr;
  Eigen::VectorXd rates;
  double hover_time = 0.0;
};

inline LinkBudget link_budget(const Eigen::MatrixXcd& H, double power, double noise, double bandwidth_hz,
                              const std::vector<double>& file_bits) {
  LinkBudget lb;
  lb.H = H;
  const ZfPrecoder zf = zf_precoder(H);
  lb.W = zf.W;
  lb.xi = zf.xi;
  lb.snr = per_user_snr(H, zf.W, power, noise);
  auto rh = rates_and_hover(lb.snr, bandwidth_hz, file_bits);
  lb.rates = std::move(rh.rates);
  lb.hover_time = rh.hover_time;
  return lb;
}

/// Row of H most involved in its near-linear dependence: the largest entry of
/// the Gram eigenvector belonging to the smallest eigenvalue.
inline Eigen::Index worst_conditioned_user(const Eigen::MatrixXcd& H) {
  const Eigen::MatrixXcd gram = H * H.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  Eigen::Index worst = 0;
  eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
  return worst;
}

}  // namespace uavtraj
