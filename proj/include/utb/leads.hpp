#pragma once

#include "utb/rgf.hpp"
#include "utb/types.hpp"

namespace utb {

enum class LeadSide { FIRST, LAST };

struct LeadModel {
  MatC h00;
  MatC h01;  // principal layer n -> n+1, in transport order
  double mu = 0.0;
  LeadSide attach = LeadSide::FIRST;
};

struct LeadSelfEnergy {
  MatC sigma_r;
  MatC gamma;
  MatC sigma_lesser;
  double energy = 0.0;
  double momentum = 0.0;
};

struct DecimationOptions {
  double eta = 1e-6;
  double tol = 1e-12;
  int max_doublings = 200;
};

double fermi(double e_minus_mu, double temperature);

// Solves X - P X Q = R through complex Schur forms of P and Q.
template <typename Scalar>
Mat<Scalar> solve_stein(const Mat<Scalar>& p, const Mat<Scalar>& q, const Mat<Scalar>& r) {
  const Eigen::ComplexSchur<Mat<Scalar>> sp(p), sq(q);
  const Mat<Scalar>& t = sp.matrixT();
  const Mat<Scalar>& s = sq.matrixT();
  const Mat<Scalar> rr = sp.matrixU().adjoint() * r * sq.matrixU();
  const auto n = p.rows();
  Mat<Scalar> x(n, q.cols());
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    Vec<Scalar> rhs = rr.col(j);
    if (j > 0) rhs += t * (x.leftCols(j) * s.col(j).head(j));
    const Mat<Scalar> m = Mat<Scalar>::Identity(n, n) - s(j, j) * t;
    x.col(j) = m.template triangularView<Eigen::Upper>().solve(rhs);
  }
  return sp.matrixU() * x * sq.matrixU().adjoint();
}

// Surface Green's function of a semi-infinite stack whose deeper layers are
// reached through h01: g = [(E + i eta) - h00 - h01 g h01^+]^-1. Decimation
// gets close; Newton steps on the fixed point remove the rounding that
// near-singular intermediate layers leave behind. When an isolated layer is
// singular at E the doubling loses the retarded branch altogether; the
// fallback decimates at a large broadening and follows the fixed point down
// to eta with Newton.
template <typename Scalar>
Mat<Scalar> surface_greens_function(const Mat<Scalar>& h00, const Mat<Scalar>& h01, double energy,
                                    const DecimationOptions& opt = {}) {
  if (!(opt.eta > 0.0) || !(opt.tol > 0.0)) throw Error("decimation needs eta > 0 and tol > 0");
  if (h00.rows() != h00.cols() || h01.rows() != h00.rows() || h01.cols() != h00.rows())
    throw Error("lead blocks must be square with equal rank");
  const auto n = h00.rows();
  const Mat<Scalar> id = Mat<Scalar>::Identity(n, n);
  const double scale = std::max(1.0, h00.norm() + h01.norm());
  int doublings = 0;

  const auto decimate = [&](Scalar z) -> Mat<Scalar> {
    Mat<Scalar> alpha = h01;
    Mat<Scalar> beta = h01.adjoint();
    Mat<Scalar> eps_s = h00;
    Mat<Scalar> eps = h00;
    int it = 0;
    for (; it < opt.max_doublings; ++it) {
      if (alpha.norm() + beta.norm() < opt.tol * scale) break;
      const Mat<Scalar> g = (z * id - eps).partialPivLu().inverse();
      const Mat<Scalar> agb = alpha * g * beta;
      const Mat<Scalar> bga = beta * g * alpha;
      eps_s += agb;
      eps += agb + bga;
      alpha = (alpha * g * alpha).eval();
      beta = (beta * g * beta).eval();
    }
    doublings = it;
    if (it == opt.max_doublings)
      throw ConvergenceError("lead decimation did not converge after " + std::to_string(it) + " doublings", it,
                             (alpha.norm() + beta.norm()) / scale);
    return (z * id - eps_s).partialPivLu().inverse();
  };

  // Newton on A(g) g = I; returns true once the residual is below tolerance.
  double residual = 0.0;
  const auto polish = [&](Mat<Scalar>& g, Scalar z, int steps) {
    const auto fixed_point = [&](const Mat<Scalar>& gg) -> Mat<Scalar> {
      return z * id - h00 - h01 * gg * h01.adjoint();
    };
    Mat<Scalar> a = fixed_point(g);
    residual = (a * g - id).norm();
    for (int k = 0; k < steps && !(residual < opt.tol); ++k) {
      // A(g + d)(g + d) = I to first order: d - A^-1 h01 d h01^+ g = -A^-1 R.
      const auto lu = a.partialPivLu();
      const Mat<Scalar> d = solve_stein<Scalar>(lu.solve(h01), h01.adjoint() * g, -lu.solve(a * g - id));
      const Mat<Scalar> next = g + d;
      const Mat<Scalar> a_next = fixed_point(next);
      const double r_next = (a_next * next - id).norm();
      if (!(r_next < residual)) break;
      g = next;
      a = a_next;
      residual = r_next;
    }
    return residual < opt.tol * std::max(1.0, a.norm() * g.norm());
  };

  const auto at = [&](double eta) { return Scalar(energy) + Scalar(cplx(0.0, eta)); };
  Mat<Scalar> g = decimate(at(opt.eta));
  if (polish(g, at(opt.eta), 40)) return g;

  double eta = std::max(opt.eta, 1e-2 * scale);
  Mat<Scalar> h = decimate(at(eta));
  polish(h, at(eta), 40);
  while (eta > opt.eta) {
    eta = std::max(opt.eta, 0.25 * eta);
    polish(h, at(eta), 40);
  }
  if (polish(h, at(opt.eta), 40)) return h;
  throw ConvergenceError("lead decimation did not converge after " + std::to_string(doublings) +
                             " doublings (residual " + fmt_sci(residual) + ")",
                         doublings, residual);
}

template <typename Scalar>
Mat<Scalar> lead_self_energy(const Mat<Scalar>& g_surface, const Mat<Scalar>& coupling) {
  if (coupling.cols() != g_surface.rows() || g_surface.rows() != g_surface.cols())
    throw Error("lead coupling shape mismatch");
  return coupling * g_surface * coupling.adjoint();
}

inline MatC broadening(const MatC& sigma_r) { return cplx(0.0, 1.0) * (sigma_r - sigma_r.adjoint()); }

MatC lead_lesser(const MatC& sigma_r, double mu, double energy, double temperature);

// Lead self-energy on the attached device slab; the coupling between the lead
// surface and the device boundary slab is the same principal-layer h01.
LeadSelfEnergy compute_lead(const LeadModel& lead, double energy, double momentum, double temperature,
                            const DecimationOptions& opt = {});

}  // namespace utb
