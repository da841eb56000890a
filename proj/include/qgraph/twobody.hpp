// Two particles with opposite spin on a quantum graph, interacting through
// either an on-site (Hubbard) attraction or the fully nonlocal BCS-like pair
// hopping -g sum_{l,r} c+_{l up} c+_{l dn} c_{r dn} c_{r up}.
//
// The orbital wavefunction phi(x1, x2) is resolved by exchange parity.
// Symmetric (singlet) states use the basis {|x,x>} U {(|x1,x2>+|x2,x1>)/sqrt2,
// x1<x2}; antisymmetric states use (|x1,x2>-|x2,x1>)/sqrt2, x1<x2. Both
// interactions act only on doubly occupied sites, so the antisymmetric sector
// is purely kinetic.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/csv.hpp"
#include "qgraph/error.hpp"
#include "qgraph/graph.hpp"
#include "qgraph/parallel.hpp"
#include "qgraph/spectral.hpp"

namespace qgraph {

enum class Interaction { hubbard, bcs };

inline const char* to_string(Interaction i) { return i == Interaction::bcs ? "bcs" : "hubbard"; }

/// Interaction type and strength g in units of K. Positive g is attractive;
/// negative g is accepted to exhibit the repulsively bound pair.
struct InteractionKind {
  Interaction type = Interaction::bcs;
  double strength = 0.0;
};

enum class Parity { symmetric, antisymmetric };

inline const char* to_string(Parity p) { return p == Parity::symmetric ? "symmetric" : "antisymmetric"; }

/// Ordered site pairs spanning one exchange-parity sector.
class SectorBasis {
 public:
  SectorBasis() = default;

  SectorBasis(int sites, Parity parity) : sites_(sites), parity_(parity), lookup_(sites, sites) {
    lookup_.setConstant(-1);
    const int first_offset = parity == Parity::symmetric ? 0 : 1;
    for (int a = 0; a < sites; ++a)
      for (int b = a + first_offset; b < sites; ++b) {
        lookup_(a, b) = static_cast<int>(pairs_.size());
        pairs_.emplace_back(a, b);
      }
  }

  int sites() const { return sites_; }
  Parity parity() const { return parity_; }
  int size() const { return static_cast<int>(pairs_.size()); }
  std::pair<int, int> pair(int k) const { return pairs_[static_cast<std::size_t>(k)]; }

  /// Index of the basis state containing |a,b>, or -1.
  int index(int a, int b) const { return a <= b ? lookup_(a, b) : lookup_(b, a); }

  /// Expands sector coefficients onto the full N x N grid phi(i, j).
  Eigen::MatrixXd to_grid(const Eigen::Ref<const Eigen::VectorXd>& coeffs) const {
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(sites_, sites_);
    const double sign = parity_ == Parity::symmetric ? 1.0 : -1.0;
    for (int k = 0; k < size(); ++k) {
      auto [a, b] = pairs_[static_cast<std::size_t>(k)];
      if (a == b) {
        phi(a, a) = coeffs(k);
      } else {
        phi(a, b) = coeffs(k) * M_SQRT1_2;
        phi(b, a) = sign * coeffs(k) * M_SQRT1_2;
      }
    }
    return phi;
  }

 private:
  int sites_ = 0;
  Parity parity_ = Parity::symmetric;
  std::vector<std::pair<int, int>> pairs_;
  Eigen::MatrixXi lookup_;
};

struct TwoBodyProblem {
  QuantumGraph graph;
  InteractionKind kind;
  SectorBasis symmetric_basis;
  SectorBasis antisymmetric_basis;
  Eigen::MatrixXd symmetric;
  Eigen::MatrixXd antisymmetric;

  const SectorBasis& basis(Parity p) const { return p == Parity::symmetric ? symmetric_basis : antisymmetric_basis; }
  const Eigen::MatrixXd& op(Parity p) const { return p == Parity::symmetric ? symmetric : antisymmetric; }
};

/// Hamiltonian block for one parity sector.
inline Eigen::MatrixXd sector_operator(const QuantumGraph& g, const InteractionKind& kind, const SectorBasis& basis) {
  const int dim = basis.size();
  const double k_hop = g.hopping();
  const double sign = basis.parity() == Parity::symmetric ? 1.0 : -1.0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);

  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(g.size()));
  for (auto [i, j] : g.edges()) {
    nbrs[static_cast<std::size_t>(i)].push_back(j);
    nbrs[static_cast<std::size_t>(j)].push_back(i);
  }

  // Projects amplitude `amp` on product state |c,d> into column `col`.
  auto deposit = [&](int col, int c, int d, double amp) {
    const int row = basis.index(c, d);
    if (row < 0) return;
    const double w = c == d ? 1.0 : (c < d ? M_SQRT1_2 : sign * M_SQRT1_2);
    h(row, col) += w * amp;
  };

  for (int col = 0; col < dim; ++col) {
    auto [a, b] = basis.pair(col);
    struct Component { int x1, x2; double w; };
    Component comps[2] = {{a, b, a == b ? 1.0 : M_SQRT1_2}, {b, a, sign * M_SQRT1_2}};
    const int ncomp = a == b ? 1 : 2;
    for (int c = 0; c < ncomp; ++c) {
      const auto [x1, x2, w] = comps[c];
      deposit(col, x1, x2, (g.onsite()(x1) + g.onsite()(x2)) * w);
      for (int y : nbrs[static_cast<std::size_t>(x1)]) deposit(col, y, x2, -k_hop * w);
      for (int y : nbrs[static_cast<std::size_t>(x2)]) deposit(col, x1, y, -k_hop * w);
    }
  }

  if (basis.parity() == Parity::symmetric && kind.strength != 0.0) {
    const int n = g.size();
    if (kind.type == Interaction::hubbard) {
      for (int y = 0; y < n; ++y) h(basis.index(y, y), basis.index(y, y)) -= kind.strength;
    } else {
      for (int y = 0; y < n; ++y)
        for (int z = 0; z < n; ++z) h(basis.index(y, y), basis.index(z, z)) -= kind.strength;
    }
  }
  return h;
}

inline TwoBodyProblem assemble(const QuantumGraph& g, const InteractionKind& kind) {
  TwoBodyProblem p{g, kind, SectorBasis(g.size(), Parity::symmetric), SectorBasis(g.size(), Parity::antisymmetric),
                   {}, {}};
  p.symmetric = sector_operator(g, kind, p.symmetric_basis);
  p.antisymmetric = sector_operator(g, kind, p.antisymmetric_basis);
  return p;
}

struct TwoBodySolution {
  Eigen::VectorXd symmetric_energies;
  Eigen::VectorXd antisymmetric_energies;
  Eigen::MatrixXd symmetric_states;      // columns, sector basis; empty if not requested
  Eigen::MatrixXd antisymmetric_states;  // columns, sector basis; empty if not requested
  SectorBasis symmetric_basis;
  SectorBasis antisymmetric_basis;
  Eigen::MatrixXd ground_state;  // phi(i, j) on the full grid, unit norm
  double depairing_energy = 0.0;

  const Eigen::VectorXd& energies(Parity p) const {
    return p == Parity::symmetric ? symmetric_energies : antisymmetric_energies;
  }

  bool has_states() const { return symmetric_states.size() > 0; }

  /// k-th eigenstate (0-based, ascending) of a sector, on the full grid.
  Eigen::MatrixXd state(Parity p, int k) const {
    if (!has_states()) throw std::logic_error("solution was computed without eigenvectors");
    return p == Parity::symmetric ? symmetric_basis.to_grid(symmetric_states.col(k))
                                  : antisymmetric_basis.to_grid(antisymmetric_states.col(k));
  }
};

/// Both sector spectra. The ground state is the lowest symmetric state and the
/// depairing energy is the gap between the two lowest symmetric eigenvalues.
inline TwoBodySolution solve(const TwoBodyProblem& p, bool with_states = true) {
  TwoBodySolution s;
  s.symmetric_basis = p.symmetric_basis;
  s.antisymmetric_basis = p.antisymmetric_basis;
  if (with_states) {
    auto sym = eigendecompose_symmetric(p.symmetric);
    s.symmetric_energies = std::move(sym.energies);
    s.symmetric_states = std::move(sym.basis);
    if (p.antisymmetric.size() > 0) {
      auto anti = eigendecompose_symmetric(p.antisymmetric);
      s.antisymmetric_energies = std::move(anti.energies);
      s.antisymmetric_states = std::move(anti.basis);
    }
    s.ground_state = s.symmetric_basis.to_grid(s.symmetric_states.col(0));
  } else {
    s.symmetric_energies = symmetric_eigenvalues(p.symmetric);
    if (p.antisymmetric.size() > 0) s.antisymmetric_energies = symmetric_eigenvalues(p.antisymmetric);
  }
  if (s.symmetric_energies.size() >= 2) s.depairing_energy = s.symmetric_energies(1) - s.symmetric_energies(0);
  return s;
}

/// Depairing energy from the symmetric sector alone, eigenvalues only.
inline double depairing_energy(const QuantumGraph& g, const InteractionKind& kind) {
  SectorBasis basis(g.size(), Parity::symmetric);
  auto e = symmetric_eigenvalues(sector_operator(g, kind, basis));
  if (e.size() < 2) throw ValidationError("depairing energy", {"graph needs at least one site"});
  return e(1) - e(0);
}

/// Eigenvalue counts per bin of width `bin_width`, bins aligned to multiples
/// of the width: bin b covers [origin + b w, origin + (b+1) w).
struct DosHistogram {
  double bin_width = 0.05;
  double origin = 0.0;
  std::vector<int> symmetric;
  std::vector<int> antisymmetric;
  std::vector<int> combined;

  int bins() const { return static_cast<int>(combined.size()); }
  double bin_low(int b) const { return origin + b * bin_width; }
  double bin_high(int b) const { return origin + (b + 1) * bin_width; }
};

inline DosHistogram dos_histogram(const TwoBodySolution& s, double bin_width = 0.05) {
  if (!(bin_width > 0.0)) throw ValidationError("dos histogram", {"bin width must be positive"});
  const auto& es = s.symmetric_energies;
  const auto& ea = s.antisymmetric_energies;
  if (es.size() + ea.size() == 0) throw ValidationError("dos histogram", {"empty spectrum"});
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* v : {&es, &ea})
    if (v->size() > 0) {
      lo = std::min(lo, v->minCoeff());
      hi = std::max(hi, v->maxCoeff());
    }
  const double first = std::floor(lo / bin_width);
  const int nbins = static_cast<int>(std::floor(hi / bin_width) - first) + 1;
  DosHistogram h;
  h.bin_width = bin_width;
  h.origin = first * bin_width;
  h.symmetric.assign(static_cast<std::size_t>(nbins), 0);
  h.antisymmetric.assign(static_cast<std::size_t>(nbins), 0);
  h.combined.assign(static_cast<std::size_t>(nbins), 0);
  auto fill = [&](const Eigen::VectorXd& v, std::vector<int>& counts) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const int b = std::clamp(static_cast<int>(std::floor(v(i) / bin_width) - first), 0, nbins - 1);
      ++counts[static_cast<std::size_t>(b)];
      ++h.combined[static_cast<std::size_t>(b)];
    }
  };
  fill(es, h.symmetric);
  fill(ea, h.antisymmetric);
  return h;
}

inline int count_below(const Eigen::VectorXd& v, double threshold) {
  return static_cast<int>((v.array() < threshold).count());
}

inline int count_above(const Eigen::VectorXd& v, double threshold) {
  return static_cast<int>((v.array() > threshold).count());
}

/// Hop-count distances of a plain chain, d_ij = |i - j|.
inline DistanceMatrix chain_distances(int n) {
  Eigen::MatrixXi d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = std::abs(i - j);
  return DistanceMatrix(std::move(d));
}

/// P(r): probability that the two particles sit at graph distance r.
inline std::vector<double> pair_distance_distribution(const Eigen::MatrixXd& phi, const DistanceMatrix& d) {
  if (phi.rows() != d.size() || phi.cols() != d.size())
    throw ValidationError("pair distance distribution", {"wavefunction and distance matrix sizes differ"});
  const double norm = phi.squaredNorm();
  if (!(norm > 0.0)) throw ValidationError("pair distance distribution", {"zero-norm state"});
  std::vector<double> p(static_cast<std::size_t>(d.max()) + 1, 0.0);
  for (int i = 0; i < d.size(); ++i)
    for (int j = 0; j < d.size(); ++j) p[static_cast<std::size_t>(d(i, j))] += phi(i, j) * phi(i, j);
  for (double& v : p) v /= norm;
  return p;
}

inline std::vector<double> pair_distance_distribution(const Eigen::MatrixXd& phi) {
  return pair_distance_distribution(phi, chain_distances(static_cast<int>(phi.rows())));
}

inline double cumulative(const std::vector<double>& p, int r_max) {
  double s = 0.0;
  for (int r = 0; r <= r_max && r < static_cast<int>(p.size()); ++r) s += p[static_cast<std::size_t>(r)];
  return s;
}

/// xi_C = sqrt(sum_ij D_ij^2 |phi(i,j)|^2), with phi taken at unit norm.
inline double coherence_length(const Eigen::MatrixXd& phi, const DistanceMatrix& d) {
  if (phi.rows() != d.size() || phi.cols() != d.size())
    throw ValidationError("coherence length", {"wavefunction and distance matrix sizes differ"});
  const double norm = phi.squaredNorm();
  if (!(norm > 0.0)) throw ValidationError("coherence length", {"zero-norm state"});
  const Eigen::ArrayXXd d2 = d.matrix().cast<double>().array().square();
  return std::sqrt((d2 * phi.array().square()).sum() / norm);
}

struct DepairingRow {
  int attach_pos = 0;
  double g = 0.0;
  double depairing = std::numeric_limits<double>::quiet_NaN();
  double coherence_length = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct DepairingSweepOptions {
  Interaction type = Interaction::bcs;
  bool with_coherence = false;
  int workers = 0;
  double hopping = 1.0;
};

/// Depairing energy for every (attach position, g) of a chain family with
/// fixed total size. Rows are ordered by position, then by g; a failing point
/// is recorded in its row and does not stop the sweep.
inline std::vector<DepairingRow> depairing_sweep(int total_sites, int side_sites, std::span<const int> positions,
                                                 std::span<const double> couplings,
                                                 const DepairingSweepOptions& opt = {}) {
  std::vector<DepairingRow> rows(positions.size() * couplings.size());
  parallel_for(rows.size(), opt.workers, [&](std::size_t k) {
    auto& row = rows[k];
    row.attach_pos = positions[k / couplings.size()];
    row.g = couplings[k % couplings.size()];
    try {
      ChainSpec spec{total_sites, side_sites, side_sites > 0 ? row.attach_pos : 1, Boundary::open};
      auto graph = build_chain(spec, opt.hopping);
      InteractionKind kind{opt.type, row.g};
      if (opt.with_coherence) {
        auto sol = solve(assemble(graph, kind));
        row.depairing = sol.depairing_energy;
        row.coherence_length = coherence_length(sol.ground_state, shortest_path_distances(graph));
      } else {
        row.depairing = depairing_energy(graph, kind);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<DepairingRow>& rows) {
  CsvWriter csv(os, {"n", "g_K", "depairing_K", "xi_C_sites", "status"});
  for (const auto& r : rows) csv.row(r.attach_pos, r.g, r.depairing, r.coherence_length, r.ok() ? "ok" : "failed");
}

inline void write_two_body_spectrum_csv(std::ostream& os, const TwoBodySolution& s) {
  CsvWriter csv(os, {"sector", "index", "energy_K"});
  for (Parity p : {Parity::symmetric, Parity::antisymmetric}) {
    const auto& e = s.energies(p);
    for (Eigen::Index i = 0; i < e.size(); ++i) csv.row(to_string(p), i + 1, e(i));
  }
}

inline void write_wavefunction_csv(std::ostream& os, const Eigen::MatrixXd& phi) {
  CsvWriter csv(os, {"i", "j", "prob"});
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (Eigen::Index j = 0; j < phi.cols(); ++j) csv.row(i + 1, j + 1, phi(i, j) * phi(i, j));
}

inline void write_distribution_csv(std::ostream& os, const std::vector<double>& p) {
  CsvWriter csv(os, {"r", "P"});
  for (std::size_t r = 0; r < p.size(); ++r) csv.row(r, p[r]);
}

inline void write_dos_csv(std::ostream& os, const DosHistogram& h) {
  CsvWriter csv(os, {"bin_low_K", "bin_high_K", "symmetric", "antisymmetric", "combined"});
  for (int b = 0; b < h.bins(); ++b)
    csv.row(h.bin_low(b), h.bin_high(b), h.symmetric[static_cast<std::size_t>(b)],
            h.antisymmetric[static_cast<std::size_t>(b)], h.combined[static_cast<std::size_t>(b)]);
}

}  // namespace qgraph
