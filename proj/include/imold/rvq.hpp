#pragma once

// Residual vector quantization against an EMA-maintained codebook.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "imold/autodiff.hpp"

namespace imold {

enum class VqMode {
  full,         // H' = sg[Q(H)] + H
  no_vq,        // H' = H, codebook untouched
  no_residual,  // H' = Q(H) forward, straight-through gradient to H
};

inline constexpr double kEmaDenominatorFloor = 1e-5;

struct Codebook {
  Matrix codes;   // |C| x d, e_k
  Vector counts;  // N_k
  Matrix sums;    // |C| x d, m_k
  double eta = 0.99;
  std::vector<std::int64_t> usage;  // lifetime assignment count per code
  bool initialized = false;

  static Codebook create(Index size, Index dim, double eta);
  // Seeds the codes from `rows`, cycling when there are fewer rows than
  // codes; N_k = 1 and m_k = e_k.
  void init_from(const Matrix& rows);

  Index size() const { return codes.rows(); }
  Index dim() const { return codes.cols(); }
};

// Index of the nearest code (squared Euclidean) for every row of x; ties go
// to the lowest index.
template <typename DerivedX, typename DerivedC>
std::vector<Index> nearest_codes(const Eigen::MatrixBase<DerivedX>& x,
                                 const Eigen::MatrixBase<DerivedC>& codes) {
  if (codes.rows() == 0) throw ContractError("nearest_codes: empty codebook");
  if (x.cols() != codes.cols()) {
    throw DimensionError("nearest_codes: row width " + std::to_string(x.cols()) +
                         " vs code width " + std::to_string(codes.cols()));
  }
  using Scalar = typename DerivedX::Scalar;
  // Column-major copies so every code and every query is contiguous.
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ct = codes.transpose();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> xt = x.transpose();
  std::vector<Index> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < xt.cols(); ++i) {
    Index best = 0;
    Scalar best_dist = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < ct.cols(); ++k) {
      const Scalar dist = (ct.col(k) - xt.col(i)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

struct QuantizeResult {
  ad::Tensor output;                // H'
  std::vector<Index> assignments;   // empty in no_vq mode
  Matrix quantized;                 // Q(h_v) rows; empty in no_vq mode
  ad::Tensor commitment;            // sum_v |sg[e_k] - h_v|^2, 0 in no_vq mode
};

QuantizeResult quantize(const Codebook& book, const ad::Tensor& nodes,
                        VqMode mode = VqMode::full);

// N_k <- eta N_k + (1-eta) n_k;  m_k <- eta m_k + (1-eta) sum_{v->k} h_v;
// e_k <- m_k / max(N_k, 1e-5). Every code decays, assigned or not.
void ema_update(Codebook& book, const Matrix& nodes, std::span<const Index> assignments);

}  // namespace imold
