#pragma once

#include "utb/types.hpp"

#include <cstddef>
#include <vector>

namespace utb {

// Square diagonal blocks and the upper couplings H(i, i+1). The lower
// couplings are the adjoints, so only Hermitian-coupled operators are held.
template <typename Scalar>
struct BlockTridiagonal {
  std::vector<Mat<Scalar>> diag;
  std::vector<Mat<Scalar>> upper;

  std::size_t n_blocks() const { return diag.size(); }
  Eigen::Index rank(std::size_t i) const { return diag[i].rows(); }

  Eigen::Index total_rank() const {
    Eigen::Index n = 0;
    for (const auto& d : diag) n += d.rows();
    return n;
  }

  std::vector<Eigen::Index> offsets() const {
    std::vector<Eigen::Index> off(diag.size() + 1, 0);
    for (std::size_t i = 0; i < diag.size(); ++i) off[i + 1] = off[i] + diag[i].rows();
    return off;
  }

  void validate() const {
    if (diag.empty()) throw Error("block operator has no blocks");
    if (upper.size() + 1 != diag.size())
      throw Error("block operator needs n_blocks - 1 couplings");
    for (std::size_t i = 0; i < diag.size(); ++i) {
      if (diag[i].rows() != diag[i].cols())
        throw Error("diagonal block " + std::to_string(i) + " is not square");
      if (i + 1 < diag.size() &&
          (upper[i].rows() != diag[i].rows() || upper[i].cols() != diag[i + 1].rows()))
        throw Error("coupling block " + std::to_string(i) + " has wrong shape");
    }
  }
};

template <typename Scalar>
Mat<Scalar> to_dense(const BlockTridiagonal<Scalar>& op) {
  const auto off = op.offsets();
  Mat<Scalar> out = Mat<Scalar>::Zero(off.back(), off.back());
  for (std::size_t i = 0; i < op.n_blocks(); ++i) {
    const auto r = op.rank(i);
    out.block(off[i], off[i], r, r) = op.diag[i];
    if (i + 1 < op.n_blocks()) {
      const auto c = op.rank(i + 1);
      out.block(off[i], off[i + 1], r, c) = op.upper[i];
      out.block(off[i + 1], off[i], c, r) = op.upper[i].adjoint();
    }
  }
  return out;
}

template <typename Scalar>
double hermiticity_defect(const BlockTridiagonal<Scalar>& op) {
  double worst = 0.0;
  for (const auto& d : op.diag) worst = std::max(worst, (d - d.adjoint()).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace utb
