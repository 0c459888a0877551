#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdio>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace utb {

inline std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

using cplx = std::complex<double>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatC = Mat<cplx>;
using VecC = Vec<cplx>;
using MatD = Mat<double>;
using VecD = Vec<double>;

// Reduced units: eV, nm, ps, amu, K, elementary charge.
namespace units {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double k_B = 8.617333262e-5;          // eV/K
inline constexpr double hbar = 6.582119569e-4;         // eV*ps
inline constexpr double h = 2.0 * pi * hbar;           // eV*ps
inline constexpr double eps0 = 0.05526349406;          // e/(V*nm)
inline constexpr double amu_nm2_per_ps2 = 1.036426966e-2;  // eV
inline constexpr double e_over_h = 3.874045865e-5;     // A/eV
}  // namespace units

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularBlockError : public Error {
 public:
  SingularBlockError(std::size_t slab, const std::string& what)
      : Error(what), slab_(slab) {}
  std::size_t slab() const { return slab_; }

 private:
  std::size_t slab_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace utb
