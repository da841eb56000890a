// Single-particle tight-binding Hamiltonian of a quantum graph and the dense
// symmetric eigendecomposition every other module builds on.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "qgraph/csv.hpp"
#include "qgraph/error.hpp"
#include "qgraph/graph.hpp"

namespace qgraph {

/// Ascending levels E_i with orthonormal eigenvectors as the columns of `basis`.
struct SingleParticleSpectrum {
  Eigen::VectorXd energies;
  Eigen::MatrixXd basis;

  int size() const { return static_cast<int>(energies.size()); }
};

/// h_ij = eps_i delta_ij - K A_ij.
inline Eigen::MatrixXd single_particle_hamiltonian(const QuantumGraph& g) {
  Eigen::MatrixXd h = -g.hopping() * g.adjacency().cast<double>();
  h.diagonal() += g.onsite();
  return h;
}

inline double asymmetry(const Eigen::MatrixXd& m) {
  return m.rows() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
}

namespace detail {

// Flip each column so its first non-negligible component is positive.
inline void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    const double scale = vectors.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      if (std::abs(vectors(r, c)) > 1e-10 * scale) {
        if (vectors(r, c) < 0) vectors.col(c) *= -1.0;
        break;
      }
    }
  }
}

inline void require_symmetric(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols()) throw ValidationError("eigendecomposition", {"matrix is not square"});
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (asymmetry(h) > 1e-12 * scale) throw ValidationError("eigendecomposition", {"matrix is not symmetric"});
}

}  // namespace detail

/// Full spectrum of a real symmetric matrix. Eigen returns eigenvalues in
/// ascending order; columns follow the sign convention in detail::fix_signs.
inline SingleParticleSpectrum eigendecompose_symmetric(const Eigen::MatrixXd& h) {
  detail::require_symmetric(h);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw SolverError("symmetric eigensolver did not converge");
  SingleParticleSpectrum s{es.eigenvalues(), es.eigenvectors()};
  detail::fix_signs(s.basis);
  return s;
}

/// Eigenvalues only, ascending.
inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& h) {
  detail::require_symmetric(h);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("symmetric eigensolver did not converge");
  return es.eigenvalues();
}

inline SingleParticleSpectrum single_particle_spectrum(const QuantumGraph& g) {
  return eigendecompose_symmetric(single_particle_hamiltonian(g));
}

/// True iff V_ij = sum_k U_ki U_kj equals delta_ij to `tol`, the identity
/// under which the pairing term keeps its form in the level basis.
inline bool verify_unitary_reduction(const SingleParticleSpectrum& s, double tol = 1e-10) {
  const Eigen::MatrixXd v = s.basis.transpose() * s.basis;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(v.rows(), v.cols());
  return (v - id).cwiseAbs().maxCoeff() <= tol;
}

/// max |h U - U diag(E)|.
inline double eigen_residual(const Eigen::MatrixXd& h, const SingleParticleSpectrum& s) {
  return (h * s.basis - s.basis * s.energies.asDiagonal()).cwiseAbs().maxCoeff();
}

inline void write_spectrum_csv(std::ostream& os, const SingleParticleSpectrum& s) {
  CsvWriter csv(os, {"index", "energy_K"});
  for (int i = 0; i < s.size(); ++i) csv.row(i + 1, s.energies(i));
}

}  // namespace qgraph
