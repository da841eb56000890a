// Exact eigenstates of the reduced BCS model
//
//   H = sum_{i in B} E_i n_i + sum_{j not in B} 2 E_j b+_j b_j - g sum_{a,b not in B} b+_a b_b
//
// through Richardson's equations for the pair rapidities e_nu,
//
//   1 + sum_{mu != nu} 2g / (e_mu - e_nu) = sum_{j not in B} g / (2E_j - e_nu).
//
// The equations are singular whenever two rapidities meet at some 2E_j, which
// happens along ordinary ground-state branches. The solver therefore follows
// the branch in the variables x_j = g * sum_nu 1 / (2E_j - e_nu), which obey
// the regular quadratic system
//
//   x_j^2 - x_j + g sum_{k != j} (x_j - x_k) / (2E_k - 2E_j) = 0,
//
// with x_j in {0, 1} at g = 0 (1 on the levels holding a pair), sum_j x_j = n_p,
// and sum_nu e_nu = sum_j 2E_j x_j - g n_p (L - n_p + 1) for L unblocked levels.
// The branch is continued from g = 0 along a geometric grid with Newton
// correction and step halving. Rapidities are rebuilt at the end as the roots
// of the polynomial whose log-derivative at 2E_j is x_j / g, then polished by
// Newton on the rapidity equations themselves.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
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

using Complex = std::complex<double>;

/// Single-particle levels with the singly occupied (blocked) subset and the
/// number of pairs sharing the remaining levels.
struct LevelSet {
  std::vector<double> energies;
  std::vector<int> blocked;
  int n_pairs = 0;

  int unblocked_count() const { return static_cast<int>(energies.size() - blocked.size()); }
};

inline std::vector<std::string> level_set_violations(const LevelSet& ls) {
  std::vector<std::string> out;
  const int n = static_cast<int>(ls.energies.size());
  for (int i = 0; i + 1 < n; ++i)
    if (ls.energies[static_cast<std::size_t>(i + 1)] < ls.energies[static_cast<std::size_t>(i)]) {
      out.push_back("energies must be ascending");
      break;
    }
  for (double e : ls.energies)
    if (!std::isfinite(e)) {
      out.push_back("energies must be finite");
      break;
    }
  std::set<int> seen;
  for (int b : ls.blocked) {
    if (b < 0 || b >= n) out.push_back("blocked level " + std::to_string(b) + " out of range");
    if (!seen.insert(b).second) out.push_back("blocked level " + std::to_string(b) + " repeated");
  }
  if (ls.n_pairs < 0) out.push_back("n_pairs must be nonnegative");
  if (ls.n_pairs > n - static_cast<int>(seen.size()))
    out.push_back("n_pairs exceeds the number of unblocked levels");
  return out;
}

struct RichardsonOptions {
  double start_fraction = 1e-3;  // first coupling, relative to the smallest pair-level spacing
  double max_ratio = 1.5;        // largest geometric step g_{k+1} / g_k
  double max_correction = 0.05;  // largest corrector move, relative to max |x|
  double min_step = 1e-12;       // relative step below which continuation is abandoned
  double tolerance = 1e-13;      // Newton acceptance on the quadratic system
  int max_newton = 40;
  double degeneracy_tol = 1e-10;  // levels closer than this (relative) count as degenerate
  double split = 1e-6;            // symmetric splitting applied to degenerate levels
  bool rapidities = true;         // rebuild and polish rapidities at the target coupling
};

struct Checkpoint {
  double g = 0.0;
  double pair_energy = 0.0;
};

struct RichardsonSolution {
  double g = 0.0;
  std::vector<int> blocked;  // level indices, ascending
  std::vector<int> seed;     // level indices holding the pairs at g -> 0, ascending
  std::vector<Complex> rapidities;  // ascending real part, conjugate pairs adjacent
  std::vector<double> weights;      // x_j per unblocked level, ascending level order
  double blocked_energy = 0.0;
  double pair_energy = 0.0;         // sum of rapidities
  double residual_norm = 0.0;       // max_nu |rapidity equation residual|
  double quadratic_residual = 0.0;  // max_j |F_j(x)|
  bool converged = false;
  bool degenerate_levels_split = false;
  std::vector<Checkpoint> trace;

  double total_energy() const { return blocked_energy + pair_energy; }
};

/// Continuation could not reach the target coupling.
class ContinuationError : public SolverError {
 public:
  ContinuationError(const std::string& what, double last_g, double last_pair_energy, std::vector<double> last_weights)
      : SolverError(what), last_g_(last_g), last_pair_energy_(last_pair_energy), last_weights_(std::move(last_weights)) {}

  double last_g() const noexcept { return last_g_; }
  double last_pair_energy() const noexcept { return last_pair_energy_; }
  const std::vector<double>& last_weights() const noexcept { return last_weights_; }

 private:
  double last_g_;
  double last_pair_energy_;
  std::vector<double> last_weights_;
};

/// The Jacobian of the branch is singular at the requested coupling.
class SingularJacobianError : public SolverError {
 public:
  SingularJacobianError(const std::string& what, double g) : SolverError(what), g_(g) {}
  double g() const noexcept { return g_; }

 private:
  double g_;
};

namespace detail {

// Pair levels 2E_j of the unblocked set, with exact degeneracies split
// symmetrically about their common value.
inline std::vector<double> pair_levels(std::span<const double> energies, const RichardsonOptions& opt, bool& split) {
  std::vector<double> eps(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i) eps[i] = 2.0 * energies[i];
  split = false;
  std::size_t i = 0;
  while (i < eps.size()) {
    std::size_t j = i;
    while (j + 1 < eps.size() && eps[j + 1] - eps[i] <= opt.degeneracy_tol * std::max(1.0, std::abs(eps[i]))) ++j;
    if (j > i) {
      split = true;
      double mean = 0.0;
      for (std::size_t k = i; k <= j; ++k) mean += eps[k];
      mean /= static_cast<double>(j - i + 1);
      const double mid = 0.5 * static_cast<double>(j - i);
      for (std::size_t k = i; k <= j; ++k) eps[k] = mean + opt.split * (static_cast<double>(k - i) - mid);
    }
    i = j + 1;
  }
  return eps;
}

// Near-degenerate levels put entries of order g / spacing into F, and double
// rounding there shows up directly in sum_j x_j; such spectra are continued in
// extended precision.
using XReal = long double;
using XVec = Eigen::Matrix<XReal, Eigen::Dynamic, 1>;

template <typename Real>
class QuadraticSystem {
 public:
  using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

  // Levels closer than `near` form a cluster. Inside a cluster the Jacobian
  // has entries of order g / spacing along level differences and order
  // spacing / g along sums, so Newton steps are taken in rescaled variables
  // (cluster sums, differences times spacing) with matching equation
  // combinations (sums, differences over spacing).
  QuadraticSystem(const std::vector<double>& eps, double near)
      : n_(static_cast<Eigen::Index>(eps.size())), w_(n_, n_) {
    w_.setZero();
    for (Eigen::Index j = 0; j < n_; ++j)
      for (Eigen::Index k = 0; k < n_; ++k)
        if (j != k) w_(j, k) = 1 / (static_cast<Real>(eps[static_cast<std::size_t>(k)]) - eps[static_cast<std::size_t>(j)]);
    row_sum_ = w_.rowwise().sum();
    coupling_scale_ = n_ > 0 ? w_.cwiseAbs().rowwise().sum().maxCoeff() : Real(0);
    Eigen::Index i = 0;
    while (i < n_) {
      Eigen::Index j = i;
      while (j + 1 < n_ && eps[static_cast<std::size_t>(j + 1)] - eps[static_cast<std::size_t>(j)] <= near) ++j;
      if (j > i) {
        if (!scaled_) {
          cols_ = Mat::Identity(n_, n_);
          rows_ = Mat::Identity(n_, n_);
          scaled_ = true;
        }
        cols_.block(i, i, j - i + 1, j - i + 1).setZero();
        rows_.block(i, i, j - i + 1, j - i + 1).setZero();
        for (Eigen::Index k = i; k <= j; ++k) {
          cols_(k, i) = 1;
          rows_(i, k) = 1;
        }
        for (Eigen::Index m = i + 1; m <= j; ++m) {
          const Real d = static_cast<Real>(eps[static_cast<std::size_t>(m)]) - eps[static_cast<std::size_t>(m - 1)];
          cols_(m, m) = d / 2;
          cols_(m - 1, m) = -d / 2;
          rows_(m, m) = 1 / d;
          rows_(m, m - 1) = -1 / d;
        }
      }
      i = j + 1;
    }
  }

  // Least-squares solution of [J; 1^T] dx = [rhs; extra]. The extra row pins
  // sum_j x_j, which F alone constrains only weakly at strong coupling.
  // False if the stacked matrix is numerically rank deficient.
  bool solve(const Mat& jac, const Vec& rhs, Real extra, Vec& dx) const {
    Mat a(n_ + 1, n_);
    Vec b(n_ + 1);
    if (scaled_) {
      a.topRows(n_) = rows_ * jac * cols_;
      a.row(n_) = Vec::Ones(n_).transpose() * cols_;
      b.head(n_) = rows_ * rhs;
    } else {
      a.topRows(n_) = jac;
      a.row(n_).setOnes();
      b.head(n_) = rhs;
    }
    b(n_) = extra;
    Eigen::ColPivHouseholderQR<Mat> qr(a);
    qr.setThreshold(Real(1e-15));
    if (qr.rank() < n_) return false;
    dx = qr.solve(b);
    if (scaled_) dx = cols_ * dx;
    return true;
  }

  Real coupling_scale() const { return coupling_scale_; }

  // sum_k W_jk (x_j - x_k), summed term by term to keep differences exact.
  Vec coupling_term(const Vec& x) const {
    Vec out(n_);
    for (Eigen::Index j = 0; j < n_; ++j) {
      Real s = 0;
      for (Eigen::Index k = 0; k < n_; ++k)
        if (k != j) s += w_(j, k) * (x(j) - x(k));
      out(j) = s;
    }
    return out;
  }

  Vec residual(const Vec& x, Real g) const {
    return (x.array().square() - x.array()).matrix() + g * coupling_term(x);
  }

  Mat jacobian(const Vec& x, Real g) const {
    Mat j = -g * w_;
    j.diagonal() = (2 * x.array() - 1).matrix() + g * row_sum_;
    return j;
  }

 private:
  Eigen::Index n_;
  Mat w_;
  Vec row_sum_;
  Real coupling_scale_ = 0;
  bool scaled_ = false;
  Mat cols_, rows_;
};

template <typename Derived>
typename Derived::Scalar max_abs(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? typename Derived::Scalar(0) : v.cwiseAbs().maxCoeff();
}

// Newton on F(x; g) = 0. Returns false on divergence or a singular Jacobian.
template <typename Real>
bool newton(const QuadraticSystem<Real>& sys, typename QuadraticSystem<Real>::Vec& x, Real g, int n_pairs,
            const RichardsonOptions& opt, bool& singular) {
  using Vec = typename QuadraticSystem<Real>::Vec;
  singular = false;
  Real prev = std::numeric_limits<Real>::infinity();
  int growth = 0;
  for (int it = 0; it <= opt.max_newton; ++it) {
    const Vec f = sys.residual(x, g);
    const Real r = std::max(max_abs(f), std::abs(x.sum() - n_pairs));
    if (!std::isfinite(r)) return false;
    // Rounding in F grows with |g| W when levels nearly coincide.
    const Real mx = max_abs(x);
    if (r <= opt.tolerance * std::max({Real(1), mx * mx, std::abs(g) * sys.coupling_scale() * mx})) {
      // One more step is nearly free and lands at working-precision rounding.
      Vec dx;
      if (sys.solve(sys.jacobian(x, g), f, x.sum() - n_pairs, dx)) x -= dx;
      return true;
    }
    if (r > prev && ++growth > 2) return false;
    prev = r;
    Vec dx;
    if (!sys.solve(sys.jacobian(x, g), f, x.sum() - n_pairs, dx)) {
      singular = true;
      return false;
    }
    x -= dx;
  }
  return false;
}

template <typename Derived>
std::vector<double> to_vector(const Eigen::MatrixBase<Derived>& x) {
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(x(i));
  return out;
}

template <typename Derived>
double pair_energy(const std::vector<double>& eps, const Eigen::MatrixBase<Derived>& x, double g, int n_pairs) {
  XReal s = 0;
  for (std::size_t j = 0; j < eps.size(); ++j) s += eps[j] * static_cast<XReal>(x(static_cast<Eigen::Index>(j)));
  const XReal l = static_cast<XReal>(eps.size());
  return static_cast<double>(s - static_cast<XReal>(g) * n_pairs * (l - n_pairs + 1));
}

inline std::vector<Complex> rapidity_residuals(const std::vector<Complex>& e, const std::vector<double>& eps, double g) {
  std::vector<Complex> out(e.size());
  for (std::size_t v = 0; v < e.size(); ++v) {
    Complex s = 1.0;
    for (std::size_t m = 0; m < e.size(); ++m)
      if (m != v) s += 2.0 * g / (e[m] - e[v]);
    for (double level : eps) s -= g / (level - e[v]);
    out[v] = s;
  }
  return out;
}

inline double max_abs(const std::vector<Complex>& v) {
  double m = 0.0;
  for (const auto& z : v) m = std::max(m, std::abs(z));
  return m;
}

// Rapidities as the roots of the monic P with P'(eps_j) / P(eps_j) = x_j / g.
// P is written as w(z) (1 + sum_k c_k / (z - z_k)) with w(z) = prod_k (z - z_k)
// over n_p nodes, so its roots are the eigenvalues of diag(z) - c 1^T and the
// conditions at the levels are linear in c. Nodes sit on the seeded levels;
// members of a near-degenerate cluster are moved off the real axis so that
// nodes stay well separated.
struct RapidityNodes {
  std::vector<Complex> z;
  std::vector<int> node_of;  // per level: node sitting exactly on it, or -1
};

inline RapidityNodes seed_nodes(const std::vector<double>& eps, const std::vector<int>& seeded) {
  const int n = static_cast<int>(seeded.size());
  const int l = static_cast<int>(eps.size());
  const double spread = (eps.back() - eps.front()) / std::max(1, l - 1);
  RapidityNodes out{std::vector<Complex>(static_cast<std::size_t>(n)), std::vector<int>(static_cast<std::size_t>(l), -1)};
  auto& z = out.z;
  for (int k = 0; k < n;) {
    int m = k;
    while (m + 1 < n && eps[static_cast<std::size_t>(seeded[static_cast<std::size_t>(m + 1)])] -
                                eps[static_cast<std::size_t>(seeded[static_cast<std::size_t>(m)])] <
                            1e-3 * spread)
      ++m;
    for (int q = k; q <= m; ++q) {
      const int level = seeded[static_cast<std::size_t>(q)];
      if (m == k) {
        z[static_cast<std::size_t>(q)] = eps[static_cast<std::size_t>(level)];
        out.node_of[static_cast<std::size_t>(level)] = q;
      } else {
        z[static_cast<std::size_t>(q)] = Complex(eps[static_cast<std::size_t>(level)], spread * (q - 0.5 * (k + m) + 0.5));
      }
    }
    k = m + 1;
  }
  return out;
}

inline std::vector<Complex> rebuild_rapidities(const std::vector<double>& eps, const std::vector<double>& x, double g,
                                               const RapidityNodes& nodes) {
  const auto& z = nodes.z;
  const auto& node_of = nodes.node_of;
  const int n = static_cast<int>(z.size());
  const int l = static_cast<int>(eps.size());
  const Eigen::Index rows = l;
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(rows, n);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(rows);
  for (int j = 0; j < l; ++j) {
    const double e = eps[static_cast<std::size_t>(j)];
    const double lam = x[static_cast<std::size_t>(j)] / g;
    const int m = node_of[static_cast<std::size_t>(j)];
    if (m >= 0) {
      // 1 + sum_{k != m} c_k / (z_m - z_k) + c_m (S_m - Lambda_m) = 0
      Complex s_m = 0.0;
      for (int k = 0; k < n; ++k)
        if (k != m) {
          const Complex inv = 1.0 / (z[static_cast<std::size_t>(m)] - z[static_cast<std::size_t>(k)]);
          a(j, k) = inv;
          s_m += inv;
        }
      a(j, m) = s_m - lam;
      b(j) = -1.0;
    } else {
      // R'(e) - mu R(e) = 0 with R = 1 + sum c_k / (z - z_k), mu = Lambda - sum 1 / (e - z_k)
      Complex mu = lam;
      for (int k = 0; k < n; ++k) mu -= 1.0 / (e - z[static_cast<std::size_t>(k)]);
      for (int k = 0; k < n; ++k) {
        const Complex inv = 1.0 / (e - z[static_cast<std::size_t>(k)]);
        a(j, k) = -inv * inv - mu * inv;
      }
      b(j) = mu;
    }
    const double scale = std::max(a.row(j).cwiseAbs().maxCoeff(), std::abs(b(j)));
    if (scale > 0) {
      a.row(j) /= scale;
      b(j) /= scale;
    }
  }
  const Eigen::VectorXcd c = a.colPivHouseholderQr().solve(b);
  Eigen::MatrixXcd m = -c * Eigen::RowVectorXcd::Ones(n);
  for (int k = 0; k < n; ++k) m(k, k) += z[static_cast<std::size_t>(k)];
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m, false);
  std::vector<Complex> roots(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) roots[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
  return roots;
}

// Complex Newton on the rapidity equations. Keeps the best iterate.
inline std::vector<Complex> polish_rapidities(std::vector<Complex> e, const std::vector<double>& eps, double g,
                                              int max_iter = 60) {
  const Eigen::Index n = static_cast<Eigen::Index>(e.size());
  auto best = e;
  double best_r = max_abs(rapidity_residuals(e, eps, g));
  for (int it = 0; it < max_iter && best_r > 1e-14; ++it) {
    const auto f = rapidity_residuals(e, eps, g);
    Eigen::MatrixXcd jac = Eigen::MatrixXcd::Zero(n, n);
    Eigen::VectorXcd rhs(n);
    for (Eigen::Index v = 0; v < n; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      rhs(v) = f[vi];
      Complex diag = 0.0;
      for (Eigen::Index m = 0; m < n; ++m) {
        if (m == v) continue;
        const Complex d = e[static_cast<std::size_t>(m)] - e[vi];
        const Complex t = 2.0 * g / (d * d);
        jac(v, m) = -t;
        diag += t;
      }
      for (double level : eps) {
        const Complex d = level - e[vi];
        diag -= g / (d * d);
      }
      jac(v, v) = diag;
    }
    const Eigen::VectorXcd step = jac.fullPivLu().solve(rhs);
    for (Eigen::Index v = 0; v < n; ++v) e[static_cast<std::size_t>(v)] -= step(v);
    const double r = max_abs(rapidity_residuals(e, eps, g));
    if (!std::isfinite(r)) break;
    if (r < best_r) {
      best_r = r;
      best = e;
    } else if (r > 1e3 * best_r) {
      break;
    }
  }
  return best;
}

// Canonical order (ascending real part, then imaginary part) with complex
// roots forced into exact conjugate pairs.
inline void canonicalise(std::vector<Complex>& e, double scale) {
  const double tiny = 1e-12 * scale;
  for (auto& z : e)
    if (std::abs(z.imag()) <= tiny) z = Complex(z.real(), 0.0);
  std::sort(e.begin(), e.end(), [](const Complex& a, const Complex& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    if (e[i].imag() == 0.0) continue;
    auto& z = e[i];
    auto& w = e[i + 1];
    if (std::abs(z.real() - w.real()) <= 1e-8 * scale && std::abs(z.imag() + w.imag()) <= 1e-8 * scale) {
      const double re = 0.5 * (z.real() + w.real());
      const double im = 0.5 * (std::abs(z.imag()) + std::abs(w.imag()));
      z = Complex(re, -im);
      w = Complex(re, im);
      ++i;
    }
  }
}

// Rapidities along the continuation. While a previous set is at hand it is
// carried to the next coupling by Newton; otherwise (first step, or after
// two rapidities met at a level) it is rebuilt from x by the fit above, first
// with nodes on the seeded levels and then re-expanded around its own roots.
class RapidityTracker {
 public:
  RapidityTracker(const std::vector<double>& eps, std::vector<int> seeded)
      : eps_(eps), seeded_(std::move(seeded)), scale_(std::max(1.0, std::abs(eps.front()) + std::abs(eps.back()))) {}

  void update(const std::vector<double>& x, double g, double pair_energy) {
    if (tracking_ && carry(g, pair_energy)) return;
    tracking_ = false;
    RapidityNodes nodes = seed_nodes(eps_, seeded_);
    std::vector<Complex> best_e;
    double best = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 6 && best > 1e-13; ++pass) {
      auto trial = polish_rapidities(rebuild_rapidities(eps_, x, g, nodes), eps_, g);
      const double r = max_abs(rapidity_residuals(trial, eps_, g));
      if (!std::isfinite(r)) break;
      if (r < best) {
        best = r;
        best_e = trial;
      }
      if (!well_separated(trial)) break;
      nodes.z = std::move(trial);
      std::fill(nodes.node_of.begin(), nodes.node_of.end(), -1);
    }
    if (best_e.empty()) {
      // Weak-coupling estimate: one rapidity just below each seeded level.
      for (int j : seeded_) best_e.emplace_back(eps_[static_cast<std::size_t>(j)] - g / x[static_cast<std::size_t>(j)], 0.0);
      best_e = polish_rapidities(std::move(best_e), eps_, g);
      best = max_abs(rapidity_residuals(best_e, eps_, g));
    }
    tracking_ = consistent(best_e, best, pair_energy);
    g_ = g;
    current_ = std::move(best_e);
    residual_ = best;
  }

  // Newton continuation of the current rapidities from g_ to g, with the
  // step halved on failure. Where two real rapidities are about to meet at a
  // level (or a complex pair to land on the real axis), the guess is also
  // tried with that pair already split the other way.
  bool carry(double g, double pair_energy) {
    double at = g_;
    double step = g - g_;
    int halvings = 0;
    while (at != g) {
      const double to = std::abs(g - at) <= std::abs(step) ? g : at + step;
      auto e = advance(to);
      if (!e.empty()) {
        current_ = std::move(e);
        at = to;
        g_ = to;
        continue;
      }
      if (++halvings > 12) return false;
      step *= 0.5;
    }
    residual_ = max_abs(rapidity_residuals(current_, eps_, g));
    return consistent(current_, residual_, pair_energy, false);
  }

  std::vector<Complex> advance(double g) const {
    std::vector<std::vector<Complex>> guesses{current_};
    std::vector<Complex> sorted = current_;
    std::sort(sorted.begin(), sorted.end(), [](const Complex& a, const Complex& b) { return a.real() < b.real(); });
    std::vector<std::pair<double, std::size_t>> close;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
      close.emplace_back(std::abs(sorted[i] - sorted[i + 1]), i);
    std::sort(close.begin(), close.end());
    for (std::size_t k = 0; k < std::min<std::size_t>(3, close.size()); ++k) {
      auto guess = sorted;
      const std::size_t i = close[k].second;
      const Complex a = guess[i], b = guess[i + 1];
      const double mid = 0.5 * (a.real() + b.real());
      const double half = 0.5 * std::max(std::abs(a - b), 1e-8 * scale_);
      if (a.imag() == 0.0 && b.imag() == 0.0) {
        guess[i] = Complex(mid, -half);
        guess[i + 1] = Complex(mid, half);
      } else {
        guess[i] = Complex(mid - half, 0.0);
        guess[i + 1] = Complex(mid + half, 0.0);
      }
      guesses.push_back(std::move(guess));
    }
    for (auto& guess : guesses) {
      auto e = polish_rapidities(std::move(guess), eps_, g, 12);
      if (max_abs(rapidity_residuals(e, eps_, g)) <= 1e-10) {
        canonicalise(e, scale_);
        return e;
      }
    }
    return {};
  }

  const std::vector<Complex>& rapidities() const { return current_; }
  double residual() const { return residual_; }
  double scale() const { return scale_; }

 private:
  bool consistent(const std::vector<Complex>& e, double r, double pair_energy, bool check_residual = true) const {
    if (check_residual && !(r <= 1e-10)) return false;
    if (!(r <= 1e-10)) return false;
    Complex sum = 0.0;
    for (const auto& z : e) sum += z;
    const double tol = 1e-8 * std::max(1.0, std::abs(pair_energy));
    return std::abs(sum.real() - pair_energy) <= tol && std::abs(sum.imag()) <= tol;
  }

  bool well_separated(const std::vector<Complex>& e) const {
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t k = i + 1; k < e.size(); ++k)
        if (std::abs(e[i] - e[k]) <= 1e-9 * scale_) return false;
      for (double level : eps_)
        if (std::abs(e[i] - level) <= 1e-12 * scale_) return false;
    }
    return true;
  }

  const std::vector<double>& eps_;
  std::vector<int> seeded_;
  double scale_;
  std::vector<Complex> current_;
  double residual_ = std::numeric_limits<double>::infinity();
  bool tracking_ = false;
  double g_ = 0.0;
};

// Geometric continuation in |g| from 0 to g along the branch starting at x0,
// with a tangent predictor and Newton corrector. Fills weights, pair energy,
// quadratic residual and trace of `sol`.
template <typename Real>
void follow_branch(const std::vector<double>& eps, const std::vector<double>& x0, double g, int n_pairs,
                   double spacing, double near, const RichardsonOptions& opt, RapidityTracker& tracker,
                   RichardsonSolution& sol) {
  using Vec = typename QuadraticSystem<Real>::Vec;
  const QuadraticSystem<Real> sys(eps, near);
  Vec x(static_cast<Eigen::Index>(x0.size()));
  for (std::size_t j = 0; j < x0.size(); ++j) x(static_cast<Eigen::Index>(j)) = static_cast<Real>(x0[j]);

  const double sign = g > 0 ? 1.0 : -1.0;
  const double target = std::abs(g);
  double s = 0.0;
  double next = std::min(target, opt.start_fraction * spacing);
  double ratio = opt.max_ratio;
  sol.trace.push_back({0.0, pair_energy(eps, x, 0.0, n_pairs)});

  while (s < target) {
    const Real gs = static_cast<Real>(sign * s), gn = static_cast<Real>(sign * next);
    // Tangent predictor dx/dg = -J^{-1} dF/dg.
    Vec trial = x;
    Vec tangent;
    if (sys.solve(sys.jacobian(x, gs), sys.coupling_term(x), Real(0), tangent)) trial -= tangent * (gn - gs);
    const Vec predicted = trial;
    bool singular = false;
    // A corrector that drifts far from the tangent or loses sum x = n_p has
    // jumped to another branch (x = 0 always solves the system, for one).
    if (newton(sys, trial, gn, n_pairs, opt, singular) &&
        std::abs(trial.sum() - n_pairs) <= Real(1e-8) * std::max(Real(1), max_abs(trial)) &&
        max_abs(trial - predicted) <= opt.max_correction * std::max(Real(1), max_abs(x))) {
      x = trial;
      s = next;
      sol.trace.push_back({sign * s, pair_energy(eps, x, sign * s, n_pairs)});
      // Rapidities are followed only over the last three decades of g.
      if (opt.rapidities && s >= 1e-3 * target) tracker.update(to_vector(x), sign * s, sol.trace.back().pair_energy);
      ratio = std::min(opt.max_ratio, ratio * ratio);
      next = std::min(target, s > 0 ? s * ratio : next);
      continue;
    }
    // Singular all the way down to a tiny final step: the target itself is singular.
    if (singular && next == target && (target - s) <= 1e-9 * target)
      throw SingularJacobianError("richardson: singular Jacobian at the requested coupling", g);
    if (s == 0.0) {
      next *= 0.1;
      if (next < opt.min_step * target)
        throw ContinuationError("richardson: could not leave g = 0", 0.0, sol.trace.back().pair_energy, to_vector(x));
      continue;
    }
    ratio = std::sqrt(ratio);
    next = std::min(target, s * ratio);
    if (ratio - 1.0 < opt.min_step)
      throw ContinuationError("richardson: continuation step underflow at g = " + format_real(sign * s), sign * s,
                              sol.trace.back().pair_energy, to_vector(x));
  }

  sol.pair_energy = pair_energy(eps, x, g, n_pairs);
  sol.quadratic_residual = static_cast<double>(max_abs(sys.residual(x, static_cast<Real>(g))));
  sol.weights = to_vector(x);
}

}  // namespace detail

/// Follows the eigenstate whose pairs sit on the `seed` levels as g -> 0 up to
/// coupling g (either sign).
inline RichardsonSolution solve_richardson(const LevelSet& levels, double g, std::span<const int> seed,
                                           const RichardsonOptions& opt = {}) {
  auto problems = level_set_violations(levels);
  if (!std::isfinite(g)) problems.push_back("g must be finite");
  const int n_levels = static_cast<int>(levels.energies.size());
  std::vector<bool> is_blocked(static_cast<std::size_t>(n_levels), false);
  for (int b : levels.blocked)
    if (b >= 0 && b < n_levels) is_blocked[static_cast<std::size_t>(b)] = true;
  std::set<int> seed_set;
  for (int s : seed) {
    if (s < 0 || s >= n_levels) problems.push_back("seed level " + std::to_string(s) + " out of range");
    else if (is_blocked[static_cast<std::size_t>(s)]) problems.push_back("seed level " + std::to_string(s) + " is blocked");
    if (!seed_set.insert(s).second) problems.push_back("seed level " + std::to_string(s) + " repeated");
  }
  if (static_cast<int>(seed.size()) != levels.n_pairs) problems.push_back("seed size differs from n_pairs");
  if (!problems.empty()) throw ValidationError("richardson", std::move(problems));

  RichardsonSolution sol;
  sol.g = g;
  sol.blocked = levels.blocked;
  std::sort(sol.blocked.begin(), sol.blocked.end());
  sol.seed.assign(seed_set.begin(), seed_set.end());
  for (int b : sol.blocked) sol.blocked_energy += levels.energies[static_cast<std::size_t>(b)];

  std::vector<double> free_e;
  std::vector<int> free_index;
  for (int i = 0; i < n_levels; ++i)
    if (!is_blocked[static_cast<std::size_t>(i)]) {
      free_e.push_back(levels.energies[static_cast<std::size_t>(i)]);
      free_index.push_back(i);
    }
  const std::vector<double> eps = detail::pair_levels(free_e, opt, sol.degenerate_levels_split);
  const int n_pairs = levels.n_pairs;

  std::vector<double> x0(eps.size(), 0.0);
  std::vector<int> seeded;
  for (std::size_t j = 0; j < free_index.size(); ++j)
    if (seed_set.count(free_index[j])) {
      x0[j] = 1.0;
      seeded.push_back(static_cast<int>(j));
    }

  if (n_pairs == 0 || g == 0.0) {
    sol.pair_energy = detail::pair_energy(eps, Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size())), 0.0, n_pairs);
    for (int j : seeded) sol.rapidities.emplace_back(eps[static_cast<std::size_t>(j)], 0.0);
    sol.trace.push_back({0.0, sol.pair_energy});
    sol.weights = std::move(x0);
    sol.converged = true;
    return sol;
  }

  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < eps.size(); ++j) spacing = std::min(spacing, eps[j + 1] - eps[j]);
  if (!std::isfinite(spacing)) spacing = 1.0;
  const double near = 10.0 * opt.split;

  // Double precision first; split clusters fall back to extended precision.
  std::optional<detail::RapidityTracker> tracker(std::in_place, eps, seeded);
  try {
    detail::follow_branch<double>(eps, x0, g, n_pairs, spacing, near, opt, *tracker, sol);
  } catch (const SolverError&) {
    if (!(spacing <= near)) throw;
    sol.trace.clear();
    tracker.emplace(eps, seeded);
    detail::follow_branch<long double>(eps, x0, g, n_pairs, spacing, near, opt, *tracker, sol);
  }

  if (opt.rapidities) {
    sol.rapidities = tracker->rapidities();
    detail::canonicalise(sol.rapidities, tracker->scale());
    sol.residual_norm = detail::max_abs(detail::rapidity_residuals(sol.rapidities, eps, g));
  }
  sol.converged = true;
  return sol;
}

/// Ground-state branch: pairs seeded on the lowest unblocked levels.
inline RichardsonSolution solve_richardson_ground(const LevelSet& levels, double g, const RichardsonOptions& opt = {}) {
  std::vector<int> seed;
  std::set<int> blocked(levels.blocked.begin(), levels.blocked.end());
  for (int i = 0; i < static_cast<int>(levels.energies.size()) && static_cast<int>(seed.size()) < levels.n_pairs; ++i)
    if (!blocked.count(i)) seed.push_back(i);
  return solve_richardson(levels, g, seed, opt);
}

inline double total_energy(const RichardsonSolution& sol) {
  if (!sol.converged) throw SolverError("total energy of an unconverged Richardson solution");
  return sol.total_energy();
}

/// Binomial coefficient with overflow detection.
inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) throw ValidationError("binomial", {"require 0 <= k <= n"});
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    // r * (n - k + i) / i is exact at every step.
    const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
    const std::uint64_t g = std::gcd(r, static_cast<std::uint64_t>(i));
    const std::uint64_t r1 = r / g, d = static_cast<std::uint64_t>(i) / g;
    const std::uint64_t num1 = num / d;
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(r1, num1, &out)) throw std::overflow_error("binomial coefficient overflows 64 bits");
    r = out;
  }
  return r;
}

/// Number of eigenstates with n_pairs pairs and the given blocked levels.
inline std::uint64_t count_states(const LevelSet& levels) {
  const int free = levels.unblocked_count();
  if (levels.n_pairs > free) throw ValidationError("count states", {"n_pairs exceeds unblocked levels"});
  return binomial(free, levels.n_pairs);
}

struct GapResult {
  double gap = 0.0;
  double ground_energy = 0.0;   // n_p pairs, nothing blocked
  double excited_energy = 0.0;  // n_p - 1 pairs, two blocked levels
  std::pair<int, int> blocked{-1, -1};
};

/// Spectroscopic gap E(n_p - 1 pairs, two blocked) - E(n_p pairs). The blocked
/// pair minimises the energy among the four levels nearest the uncorrelated
/// Fermi level; ties go to the lower-index pair.
inline GapResult spectroscopic_gap(std::span<const double> energies, int n_pairs, double g,
                                   const RichardsonOptions& opt = {}) {
  const int n = static_cast<int>(energies.size());
  if (n_pairs < 1 || n < 2 || n_pairs - 1 > n - 2 || n_pairs > n)
    throw ValidationError("spectroscopic gap", {"need 1 <= n_p <= N and n_p - 1 <= N - 2"});
  const std::vector<double> levels(energies.begin(), energies.end());
  RichardsonOptions energy_only = opt;
  energy_only.rapidities = false;  // only energies enter the gap
  GapResult r;
  auto context = [&](const std::string& what, const std::exception& e) {
    return SolverError("spectroscopic gap (n_p=" + std::to_string(n_pairs) + ", g=" + format_real(g) + ", " + what +
                       "): " + e.what());
  };
  try {
    r.ground_energy = total_energy(solve_richardson_ground(LevelSet{levels, {}, n_pairs}, g, energy_only));
  } catch (const SolverError& e) {
    throw context("ground", e);
  }
  const int width = std::min(4, n);
  const int start = std::clamp(n_pairs - 2, 0, n - width);
  bool have = false;
  for (int a = start; a < start + width; ++a)
    for (int b = a + 1; b < start + width; ++b) {
      double e = 0.0;
      try {
        e = total_energy(solve_richardson_ground(LevelSet{levels, {a, b}, n_pairs - 1}, g, energy_only));
      } catch (const SolverError& err) {
        throw context("blocked " + std::to_string(a) + "," + std::to_string(b), err);
      }
      if (!have || e < r.excited_energy - 1e-14 * std::max(1.0, std::abs(e))) {
        r.excited_energy = e;
        r.blocked = {a, b};
        have = true;
      }
    }
  r.gap = r.excited_energy - r.ground_energy;
  return r;
}

/// Energies of every branch with n_pairs pairs (one per seed), in the
/// lexicographic order of the seeds.
inline std::vector<double> all_branch_energies(const LevelSet& levels, double g, const RichardsonOptions& opt = {}) {
  std::set<int> blocked(levels.blocked.begin(), levels.blocked.end());
  std::vector<int> free;
  for (int i = 0; i < static_cast<int>(levels.energies.size()); ++i)
    if (!blocked.count(i)) free.push_back(i);
  std::vector<double> out;
  std::vector<int> pick(static_cast<std::size_t>(levels.n_pairs));
  std::iota(pick.begin(), pick.end(), 0);
  const int k = levels.n_pairs, m = static_cast<int>(free.size());
  while (true) {
    std::vector<int> seed;
    for (int p : pick) seed.push_back(free[static_cast<std::size_t>(p)]);
    out.push_back(total_energy(solve_richardson(levels, g, seed, opt)));
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == m - k + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

struct GapRow {
  int attach_pos = 0;
  int n_pairs = 0;
  double g = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  double enhancement = std::numeric_limits<double>::quiet_NaN();  // max over positions / chain value
  double chain_gap = std::numeric_limits<double>::quiet_NaN();
  std::string error;

  bool ok() const { return error.empty(); }
};

struct GapSweepOptions {
  int side_sites = 1;
  int workers = 0;
  double hopping = 1.0;
  RichardsonOptions richardson{};
};

/// Spectroscopic gap of side-site chains over every (attach position, n_p, g),
/// with the enhancement max_n gap / chain gap filled per (n_p, g). Rows are
/// ordered by position, n_p, then g; failures stay in their row.
inline std::vector<GapRow> gap_sweep(int total_sites, std::span<const int> positions, std::span<const int> pair_counts,
                                     std::span<const double> couplings, const GapSweepOptions& opt = {}) {
  const std::size_t per_pos = pair_counts.size() * couplings.size();
  std::vector<GapRow> rows(positions.size() * per_pos);
  std::vector<GapRow> chain(per_pos);
  auto levels_of = [&](int side, int pos) {
    auto g = build_chain(ChainSpec{total_sites, side, side > 0 ? pos : 1, Boundary::open}, opt.hopping);
    const auto e = symmetric_eigenvalues(single_particle_hamiltonian(g));
    return std::vector<double>(e.data(), e.data() + e.size());
  };
  auto fill = [&](GapRow& row, const std::vector<double>& levels) {
    try {
      row.gap = spectroscopic_gap(levels, row.n_pairs, row.g, opt.richardson).gap;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  parallel_for(rows.size() + chain.size(), opt.workers, [&](std::size_t k) {
    const bool is_chain = k >= rows.size();
    const std::size_t local = is_chain ? k - rows.size() : k % per_pos;
    GapRow& row = is_chain ? chain[local] : rows[k];
    row.attach_pos = is_chain ? 0 : positions[k / per_pos];
    row.n_pairs = pair_counts[local / couplings.size()];
    row.g = couplings[local % couplings.size()];
    try {
      fill(row, levels_of(is_chain ? 0 : opt.side_sites, row.attach_pos));
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  for (std::size_t c = 0; c < per_pos; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    bool complete = chain[c].ok();
    for (std::size_t p = 0; p < positions.size(); ++p) {
      const auto& r = rows[p * per_pos + c];
      if (!r.ok()) complete = false;
      else best = std::max(best, r.gap);
    }
    for (std::size_t p = 0; p < positions.size(); ++p) {
      auto& r = rows[p * per_pos + c];
      r.chain_gap = chain[c].gap;
      if (complete) r.enhancement = best / chain[c].gap;
    }
  }
  return rows;
}

inline void write_gap_sweep_csv(std::ostream& os, const std::vector<GapRow>& rows) {
  CsvWriter csv(os, {"n", "n_p", "g_K", "gap_K", "enhancement", "chain_gap_K", "status"});
  for (const auto& r : rows) csv.row(r.attach_pos, r.n_pairs, r.g, r.gap, r.enhancement, r.chain_gap, r.ok() ? "ok" : "failed");
}

}  // namespace qgraph
