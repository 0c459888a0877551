#pragma once

#include "utb/block_tridiagonal.hpp"
#include "utb/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace utb {

// Per-thread count of scalar multiply-adds spent in dense block kernels.
inline thread_local std::uint64_t op_count = 0;

template <typename A, typename B>
auto counted_product(const A& a, const B& b) {
  op_count += static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols();
  return (a * b).eval();
}

template <typename Scalar>
Mat<Scalar> counted_inverse(const Mat<Scalar>& m, std::size_t slab) {
  const auto n = static_cast<std::uint64_t>(m.rows());
  op_count += n * n * n;
  Eigen::PartialPivLU<Mat<Scalar>> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 1e-14))
    throw SingularBlockError(slab, "singular pivot block at slab " + std::to_string(slab) +
                                       " (rcond " + std::to_string(rc) + ")");
  return lu.inverse();
}

// Scattering self-energies are strictly diagonal per slab; lead blocks are
// full matrices on the first and last slab (empty when absent).
template <typename Scalar>
struct SelfEnergyBlocks {
  std::vector<Vec<Scalar>> diag;
  Mat<Scalar> first;
  Mat<Scalar> last;

  static SelfEnergyBlocks zeros(const std::vector<Eigen::Index>& ranks) {
    SelfEnergyBlocks s;
    for (auto r : ranks) s.diag.push_back(Vec<Scalar>::Zero(r));
    return s;
  }

  Mat<Scalar> block(std::size_t i) const {
    Mat<Scalar> b = diag[i].asDiagonal();
    if (i == 0 && first.size() > 0) b += first;
    if (i + 1 == diag.size() && last.size() > 0) b += last;
    return b;
  }

  Mat<Scalar> dense() const {
    Eigen::Index n = 0;
    for (const auto& d : diag) n += d.size();
    Mat<Scalar> out = Mat<Scalar>::Zero(n, n);
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
      const auto r = diag[i].size();
      out.block(off, off, r, r) = block(i);
      off += r;
    }
    return out;
  }
};

template <typename Scalar>
struct RetardedPart {
  Scalar energy{};
  std::vector<Mat<Scalar>> left;   // left-connected g_i
  std::vector<Mat<Scalar>> diag;   // G_ii
  std::vector<Mat<Scalar>> upper;  // G_{i,i+1}
  std::vector<Mat<Scalar>> lower;  // G_{i+1,i}
};

template <typename Scalar>
struct LesserPart {
  std::vector<Mat<Scalar>> diag;   // G<_ii
  std::vector<Mat<Scalar>> upper;  // G<_{i,i+1}
};

template <typename Scalar>
RetardedPart<Scalar> solve_retarded(const BlockTridiagonal<Scalar>& h, const SelfEnergyBlocks<Scalar>& sigma,
                                    Scalar energy) {
  h.validate();
  const auto n = h.n_blocks();
  if (sigma.diag.size() != n) throw Error("self-energy slab count does not match operator");
  RetardedPart<Scalar> out;
  out.energy = energy;
  out.left.resize(n);
  out.diag.resize(n);
  out.upper.resize(n - 1);
  out.lower.resize(n - 1);

  for (std::size_t i = 0; i < n; ++i) {
    Mat<Scalar> a = -h.diag[i] - sigma.block(i);
    a.diagonal().array() += energy;
    if (i > 0) {
      const auto& tau = h.upper[i - 1];
      a -= counted_product(counted_product(tau.adjoint(), out.left[i - 1]), tau);
    }
    out.left[i] = counted_inverse(a, i);
  }

  out.diag[n - 1] = out.left[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    const auto& tau = h.upper[i];
    const auto x = counted_product(out.left[i], tau);
    const auto tg = counted_product(tau.adjoint(), out.left[i]);
    out.upper[i] = counted_product(x, out.diag[i + 1]);
    out.lower[i] = counted_product(out.diag[i + 1], tg);
    out.diag[i] = out.left[i] + counted_product(out.upper[i], tg);
  }
  return out;
}

template <typename Scalar>
LesserPart<Scalar> solve_lesser(const BlockTridiagonal<Scalar>& h, const RetardedPart<Scalar>& gr,
                                const SelfEnergyBlocks<Scalar>& sigma_lesser) {
  const auto n = h.n_blocks();
  if (gr.left.size() != n || sigma_lesser.diag.size() != n)
    throw Error("lesser solve inputs do not match operator");
  std::vector<Mat<Scalar>> gl(n);
  for (std::size_t i = 0; i < n; ++i) {
    Mat<Scalar> s = sigma_lesser.block(i);
    if (i > 0) {
      const auto& tau = h.upper[i - 1];
      s += counted_product(counted_product(tau.adjoint(), gl[i - 1]), tau);
    }
    gl[i] = counted_product(counted_product(gr.left[i], s), gr.left[i].adjoint());
  }

  LesserPart<Scalar> out;
  out.diag.resize(n);
  out.upper.resize(n - 1);
  out.diag[n - 1] = gl[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    const auto& tau = h.upper[i];
    const auto x = counted_product(gr.left[i], tau);
    const auto xg = counted_product(x, out.diag[i + 1]);
    const auto tgl = counted_product(tau.adjoint(), gl[i]);
    const auto y = counted_product(gr.upper[i], tgl);
    out.diag[i] = gl[i] + counted_product(xg, x.adjoint()) + y - y.adjoint();
    out.upper[i] = xg + counted_product(counted_product(gl[i], tau), gr.diag[i + 1].adjoint());
  }
  return out;
}

template <typename Scalar>
struct DenseGreens {
  Mat<Scalar> retarded;
  Mat<Scalar> lesser;
};

inline constexpr Eigen::Index dense_rank_limit = 2000;

template <typename Scalar>
DenseGreens<Scalar> dense_reference(const BlockTridiagonal<Scalar>& h, const SelfEnergyBlocks<Scalar>& sigma_r,
                                    const SelfEnergyBlocks<Scalar>& sigma_l, Scalar energy) {
  h.validate();
  if (h.total_rank() > dense_rank_limit)
    throw Error("dense reference limited to total rank " + std::to_string(dense_rank_limit));
  Mat<Scalar> a = -to_dense(h) - sigma_r.dense();
  a.diagonal().array() += energy;
  DenseGreens<Scalar> out;
  out.retarded = counted_inverse(a, 0);
  out.lesser = out.retarded * sigma_l.dense() * out.retarded.adjoint();
  return out;
}

}  // namespace utb
