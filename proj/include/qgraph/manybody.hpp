// Exact diagonalization of the reduced BCS model in the all-paired sector,
//
//   H = sum_i 2E_i b+_i b_i - g sum_{a,b} b+_a b_b,
//
// with hard-core pair operators, plus the occupation numbers of its ground
// state and their fit to the BCS form
//
//   v_i^2 = 1/2 [1 - (E_i - mu) / sqrt((E_i - mu)^2 + Delta^2)].
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qgraph/csv.hpp"
#include "qgraph/error.hpp"
#include "qgraph/parallel.hpp"
#include "qgraph/richardson.hpp"

namespace qgraph {

/// n_p-subsets of N levels in lexicographic order, stored as bit masks.
class PairBasis {
 public:
  static constexpr std::uint64_t default_limit = 1'000'000;

  PairBasis(int levels, int pairs, std::uint64_t limit = default_limit) : levels_(levels), pairs_(pairs) {
    std::vector<std::string> problems;
    if (levels < 1 || levels > 63) problems.push_back("level count must be in 1..63");
    if (pairs < 0 || pairs > levels) problems.push_back("n_pairs must be in 0..N");
    if (!problems.empty()) throw ValidationError("pair basis", std::move(problems));
    const std::uint64_t count = binomial(levels, pairs);
    if (count > limit)
      throw ValidationError("pair basis", {"basis too large: " + std::to_string(count) + " configurations exceed " +
                                           std::to_string(limit)});
    masks_.reserve(static_cast<std::size_t>(count));
    std::vector<int> pick(static_cast<std::size_t>(pairs));
    for (int i = 0; i < pairs; ++i) pick[static_cast<std::size_t>(i)] = i;
    while (true) {
      std::uint64_t m = 0;
      for (int p : pick) m |= std::uint64_t{1} << p;
      lookup_.emplace(m, static_cast<int>(masks_.size()));
      masks_.push_back(m);
      int i = pairs - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == levels - pairs + i) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < pairs; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  int levels() const { return levels_; }
  int pairs() const { return pairs_; }
  int size() const { return static_cast<int>(masks_.size()); }
  std::uint64_t mask(int k) const { return masks_[static_cast<std::size_t>(k)]; }
  bool occupied(int k, int level) const { return (mask(k) >> level) & 1U; }

  int index(std::uint64_t m) const {
    auto it = lookup_.find(m);
    return it == lookup_.end() ? -1 : it->second;
  }

  /// Occupied levels of configuration k, ascending, 0-based.
  std::vector<int> configuration(int k) const {
    std::vector<int> out;
    for (int i = 0; i < levels_; ++i)
      if (occupied(k, i)) out.push_back(i);
    return out;
  }

 private:
  int levels_;
  int pairs_;
  std::vector<std::uint64_t> masks_;
  std::unordered_map<std::uint64_t, int> lookup_;
};

inline Eigen::SparseMatrix<double> build_pair_hamiltonian(std::span<const double> levels, double g,
                                                          const PairBasis& basis) {
  if (static_cast<int>(levels.size()) != basis.levels())
    throw ValidationError("pair hamiltonian", {"level count differs from basis"});
  if (!std::isfinite(g)) throw ValidationError("pair hamiltonian", {"g must be finite"});
  const int n = basis.levels(), dim = basis.size();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(dim) *
            (1 + (g != 0.0 ? static_cast<std::size_t>(basis.pairs()) * static_cast<std::size_t>(n - basis.pairs()) : 0)));
  for (int k = 0; k < dim; ++k) {
    const std::uint64_t m = basis.mask(k);
    double d = -g * basis.pairs();
    for (int i = 0; i < n; ++i)
      if ((m >> i) & 1U) d += 2.0 * levels[static_cast<std::size_t>(i)];
    t.emplace_back(k, k, d);
    if (g == 0.0) continue;
    for (int a = 0; a < n; ++a) {
      if (!((m >> a) & 1U)) continue;
      for (int b = 0; b < n; ++b) {
        if ((m >> b) & 1U) continue;
        const int j = basis.index((m & ~(std::uint64_t{1} << a)) | (std::uint64_t{1} << b));
        t.emplace_back(j, k, -g);
      }
    }
  }
  Eigen::SparseMatrix<double> h(dim, dim);
  h.setFromTriplets(t.begin(), t.end());
  return h;
}

inline Eigen::SparseMatrix<double> build_pair_hamiltonian(std::span<const double> levels, double g, int n_pairs) {
  return build_pair_hamiltonian(levels, g, PairBasis(static_cast<int>(levels.size()), n_pairs));
}

struct PairGroundState {
  double energy = 0.0;
  Eigen::VectorXd vector;
  double gap = std::numeric_limits<double>::infinity();  // to the next eigenvalue, when known
};

struct EdOptions {
  int dense_limit = 3000;  // dimensions above this use Lanczos
  int krylov = 80;
  int max_restarts = 200;
  double tolerance = 1e-12;
};

namespace detail {

// Lowest eigenpair of a sparse symmetric matrix: Lanczos with full
// reorthogonalisation, restarted from the current Ritz vector.
inline PairGroundState lanczos_ground(const Eigen::SparseMatrix<double>& h, const EdOptions& opt) {
  const Eigen::Index n = h.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  // Perturb deterministically so the start vector is not an accidental eigenvector.
  for (Eigen::Index i = 0; i < n; ++i) v(i) *= 1.0 + 1e-3 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  v.normalize();
  const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov, n));
  PairGroundState out;
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    Eigen::MatrixXd q(n, m);
    Eigen::VectorXd alpha(m), beta(m);
    q.col(0) = v;
    int used = m;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd w = h * q.col(j);
      alpha(j) = q.col(j).dot(w);
      w -= q.leftCols(j + 1) * (q.leftCols(j + 1).transpose() * w);
      w -= q.leftCols(j + 1) * (q.leftCols(j + 1).transpose() * w);
      beta(j) = w.norm();
      if (j + 1 == m) break;
      if (beta(j) < 1e-14 * std::max(1.0, std::abs(alpha(j)))) {
        used = j + 1;
        break;
      }
      q.col(j + 1) = w / beta(j);
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(used, used);
    for (int j = 0; j < used; ++j) {
      t(j, j) = alpha(j);
      if (j + 1 < used) t(j, j + 1) = t(j + 1, j) = beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    v = q.leftCols(used) * es.eigenvectors().col(0);
    v.normalize();
    out.energy = es.eigenvalues()(0);
    if (used > 1) out.gap = es.eigenvalues()(1) - es.eigenvalues()(0);
    const double res = (h * v - out.energy * v).norm();
    if (res <= opt.tolerance * std::max(1.0, std::abs(out.energy)) || used < m) {
      out.energy = v.dot(h * v);
      out.vector = v;
      return out;
    }
  }
  throw SolverError("lanczos did not converge");
}

}  // namespace detail

/// Ground state of the pair Hamiltonian. With a degenerate ground level the
/// returned vector is the g -> 0+ limit: the lowest state of the pair-hopping
/// term inside the degenerate manifold.
inline PairGroundState pair_ground_state(std::span<const double> levels, double g, int n_pairs,
                                         const EdOptions& opt = {}) {
  const PairBasis basis(static_cast<int>(levels.size()), n_pairs);
  const auto h = build_pair_hamiltonian(levels, g, basis);
  PairGroundState out;
  if (basis.size() <= opt.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(h)};
    if (es.info() != Eigen::Success) throw SolverError("pair hamiltonian eigensolver did not converge");
    const auto& e = es.eigenvalues();
    out.energy = e(0);
    out.gap = e.size() > 1 ? e(1) - e(0) : std::numeric_limits<double>::infinity();
    int deg = 1;
    const double tol = 1e-10 * std::max(1.0, std::abs(e(0)));
    while (deg < e.size() && e(deg) - e(0) <= tol) ++deg;
    if (deg == 1) {
      out.vector = es.eigenvectors().col(0);
    } else {
      const Eigen::MatrixXd u = es.eigenvectors().leftCols(deg);
      const Eigen::SparseMatrix<double> hop =
          build_pair_hamiltonian(levels, 1.0, basis) - build_pair_hamiltonian(levels, 0.0, basis);
      const Eigen::MatrixXd p = u.transpose() * (hop * u);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> inner(0.5 * (p + p.transpose()));
      out.vector = u * inner.eigenvectors().col(0);
      out.gap = 0.0;
    }
  } else {
    if (g == 0.0) {
      // Diagonal matrix; the degenerate case is resolved as above only for dense sizes.
      Eigen::Index k = 0;
      Eigen::VectorXd d = h.diagonal();
      out.energy = d.minCoeff(&k);
      out.vector = Eigen::VectorXd::Unit(d.size(), k);
    } else {
      out = detail::lanczos_ground(h, opt);
    }
  }
  // Ground state of a g > 0 pair model is positive (non-positive off-diagonals).
  if (out.vector.sum() < 0) out.vector = -out.vector;
  out.vector.normalize();
  return out;
}

/// Pair occupations nu_i of the ground state, per level.
struct OccupationProfile {
  std::vector<double> levels;
  std::vector<double> nu;
  double g = 0.0;
  int n_pairs = 0;
  double energy = 0.0;
  bool degenerate_ground = false;

  double total() const {
    double s = 0.0;
    for (double v : nu) s += v;
    return s;
  }
};

inline OccupationProfile ground_occupations(std::span<const double> levels, double g, int n_pairs,
                                            const EdOptions& opt = {}) {
  const PairBasis basis(static_cast<int>(levels.size()), n_pairs);
  const auto gs = pair_ground_state(levels, g, n_pairs, opt);
  OccupationProfile p;
  p.levels.assign(levels.begin(), levels.end());
  p.nu.assign(levels.size(), 0.0);
  p.g = g;
  p.n_pairs = n_pairs;
  p.energy = gs.energy;
  p.degenerate_ground = gs.gap <= 1e-10 * std::max(1.0, std::abs(gs.energy));
  for (int k = 0; k < basis.size(); ++k) {
    const double w = gs.vector(k) * gs.vector(k);
    const std::uint64_t m = basis.mask(k);
    for (int i = 0; i < basis.levels(); ++i)
      if ((m >> i) & 1U) p.nu[static_cast<std::size_t>(i)] += w;
  }
  return p;
}

inline double bcs_v2(double e, double mu, double delta) {
  const double x = e - mu;
  if (delta == 0.0) return x < 0 ? 1.0 : (x > 0 ? 0.0 : 0.5);
  return 0.5 * (1.0 - x / std::hypot(x, delta));
}

struct BcsFitResult {
  double mu = 0.0;
  double delta = 0.0;
  double rss = 0.0;
  double constraint_gap = 0.0;  // |sum v_i^2 - n_p|
  double gradient_norm = 0.0;
  int iterations = 0;
  bool flat = false;  // step-like profile: Delta indeterminate, reported as 0
  std::vector<double> v2;
};

namespace detail {

struct BcsModel {
  std::span<const double> e;
  std::span<const double> nu;

  double rss(double mu, double delta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double r = nu[i] - bcs_v2(e[i], mu, delta);
      s += r * r;
    }
    return s;
  }

  // Residuals r_i = nu_i - v_i^2 and Jacobian dr/d(mu, delta).
  void linearise(double mu, double delta, Eigen::VectorXd& r, Eigen::MatrixXd& j) const {
    const Eigen::Index n = static_cast<Eigen::Index>(e.size());
    r.resize(n);
    j.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = e[static_cast<std::size_t>(i)] - mu;
      const double s = std::hypot(x, delta);
      const double s3 = s * s * s;
      r(i) = nu[static_cast<std::size_t>(i)] - 0.5 * (1.0 - x / s);
      // v2 = 1/2 - x / (2s); dv2/dmu = delta^2 / (2 s^3); dv2/ddelta = x delta / (2 s^3)
      j(i, 0) = -delta * delta / (2.0 * s3);
      j(i, 1) = -x * delta / (2.0 * s3);
    }
  }
};

}  // namespace detail

/// Unweighted least-squares fit of the BCS form to an occupation profile.
inline BcsFitResult fit_bcs(const OccupationProfile& profile) {
  const auto& e = profile.levels;
  const auto& nu = profile.nu;
  std::vector<std::string> problems;
  if (e.size() != nu.size()) problems.push_back("levels and occupations differ in length");
  if (e.size() < 2) problems.push_back("need at least two levels");
  for (std::size_t i = 0; i < e.size() && i < nu.size(); ++i)
    if (!std::isfinite(e[i]) || !std::isfinite(nu[i])) {
      problems.push_back("non-finite input");
      break;
    }
  if (!problems.empty()) throw ValidationError("bcs fit", std::move(problems));

  const detail::BcsModel model{e, nu};
  BcsFitResult out;
  const double lo = *std::min_element(e.begin(), e.end()), hi = *std::max_element(e.begin(), e.end());
  const double band = std::max(hi - lo, 1e-12);

  bool step = true;
  for (double v : nu)
    if (std::min(std::abs(v), std::abs(v - 1.0)) > 1e-12) step = false;
  if (step) {
    // Sharp Fermi step: any mu in the gap fits exactly with Delta = 0.
    double below = lo, above = hi;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (nu[i] > 0.5) below = std::max(below, e[i]);
    }
    for (std::size_t i = 0; i < e.size(); ++i)
      if (nu[i] < 0.5 && e[i] >= below) above = std::min(above, e[i]);
    out.mu = 0.5 * (below + above);
    out.flat = true;
  } else {
    double best = std::numeric_limits<double>::infinity();
    constexpr int grid = 60;
    for (int a = 0; a <= grid; ++a)
      for (int b = 1; b <= grid; ++b) {
        const double mu = lo + band * a / grid;
        const double delta = band * std::pow(1e-6, 1.0 - static_cast<double>(b) / grid);
        const double r = model.rss(mu, delta);
        if (r < best) {
          best = r;
          out.mu = mu;
          out.delta = delta;
        }
      }
    // Levenberg-Marquardt.
    double lambda = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    double cost = model.rss(out.mu, out.delta);
    for (out.iterations = 0; out.iterations < 500; ++out.iterations) {
      model.linearise(out.mu, out.delta, r, j);
      const Eigen::Vector2d grad = j.transpose() * r;
      out.gradient_norm = grad.norm();
      if (out.gradient_norm <= 1e-12) break;
      const Eigen::Matrix2d jtj = j.transpose() * j;
      bool moved = false;
      for (int tries = 0; tries < 60; ++tries) {
        Eigen::Matrix2d a = jtj;
        a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
        const Eigen::Vector2d step_ = -a.ldlt().solve(grad);
        const double mu = out.mu + step_(0);
        const double delta = std::abs(out.delta + step_(1));
        const double c = model.rss(mu, delta);
        // Near the minimum rss changes below its own rounding; there the
        // gradient decides.
        bool accept = std::isfinite(c) && c <= cost;
        if (!accept && std::isfinite(c) && c <= cost * (1.0 + 1e-12) + 1e-300) {
          Eigen::VectorXd r2;
          Eigen::MatrixXd j2;
          model.linearise(mu, delta, r2, j2);
          accept = (j2.transpose() * r2).norm() < out.gradient_norm;
        }
        if (accept) {
          const bool stalled = step_.norm() <= 1e-16 * (1.0 + std::abs(out.mu) + out.delta);
          out.mu = mu;
          out.delta = delta;
          cost = c;
          lambda = std::max(lambda / 3.0, 1e-15);
          moved = !stalled;
          break;
        }
        lambda *= 4.0;
      }
      if (!moved) break;
    }
    model.linearise(out.mu, out.delta, r, j);
    out.gradient_norm = (j.transpose() * r).norm();
  }
  out.rss = model.rss(out.mu, out.delta);
  out.v2.resize(e.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) sum += out.v2[i] = bcs_v2(e[i], out.mu, out.delta);
  out.constraint_gap = std::abs(sum - profile.n_pairs);
  return out;
}

/// Least squares Delta(g) = a1 g + a2 g^2 + a3 g^3 (no constant term).
struct CubicFit {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0;
  double rms = 0.0;

  double operator()(double g) const { return g * (a1 + g * (a2 + g * a3)); }
};

inline CubicFit fit_cubic_through_origin(std::span<const double> g, std::span<const double> delta) {
  if (g.size() != delta.size() || g.size() < 3)
    throw ValidationError("cubic fit", {"need at least three (g, Delta) points of equal length"});
  const Eigen::Index n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = g[static_cast<std::size_t>(i)];
    a(i, 0) = x;
    a(i, 1) = x * x;
    a(i, 2) = x * x * x;
    b(i) = delta[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  CubicFit f{c(0), c(1), c(2), 0.0};
  f.rms = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(n));
  return f;
}

struct BcsSweepRow {
  double g = 0.0;
  BcsFitResult fit;
  double energy = 0.0;
  std::string error;

  bool ok() const { return error.empty(); }
};

/// ED occupations and BCS fit at every coupling, in input order.
inline std::vector<BcsSweepRow> bcs_sweep(std::span<const double> levels, int n_pairs, std::span<const double> couplings,
                                          int workers = 0) {
  std::vector<BcsSweepRow> rows(couplings.size());
  parallel_for(rows.size(), workers, [&](std::size_t k) {
    rows[k].g = couplings[k];
    try {
      const auto p = ground_occupations(levels, couplings[k], n_pairs);
      rows[k].energy = p.energy;
      rows[k].fit = fit_bcs(p);
    } catch (const std::exception& e) {
      rows[k].error = e.what();
    }
  });
  return rows;
}

inline void write_occupations_csv(std::ostream& os, const OccupationProfile& p, const BcsFitResult& fit) {
  CsvWriter csv(os, {"i", "E_K", "nu", "v2_fit"});
  for (std::size_t i = 0; i < p.nu.size(); ++i)
    csv.row(static_cast<int>(i) + 1, p.levels[i], p.nu[i], i < fit.v2.size() ? fit.v2[i] : std::nan(""));
}

inline void write_bcs_sweep_csv(std::ostream& os, const std::vector<BcsSweepRow>& rows) {
  CsvWriter csv(os, {"g_K", "delta_K", "mu_K", "rss", "constraint_gap", "status"});
  for (const auto& r : rows)
    csv.row(r.g, r.fit.delta, r.fit.mu, r.fit.rss, r.fit.constraint_gap, r.ok() ? (r.fit.flat ? "flat" : "ok") : "failed");
}

}  // namespace qgraph
