// Quantum-graph topologies: linear chains, chains with pendant side-sites and
// arbitrary adjacency, plus hop-count distances between nodes.
//
// Node indices are 0-based in code. ChainSpec::attach_pos and the edge-list
// file format are 1-based, matching how positions along a chain are quoted.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/error.hpp"

namespace qgraph {

enum class Boundary { open, periodic };

inline const char* to_string(Boundary b) { return b == Boundary::open ? "open" : "periodic"; }

/// Chain of total_sites nodes: a backbone of total_sites - side_sites nodes
/// with side_sites pendant vertices hung off backbone node attach_pos.
struct ChainSpec {
  int total_sites = 2;
  int side_sites = 0;
  int attach_pos = 1;
  Boundary boundary = Boundary::open;

  int backbone() const { return total_sites - side_sites; }
};

/// Every violated ChainSpec invariant, empty when the spec is valid.
inline std::vector<std::string> chain_spec_violations(const ChainSpec& spec) {
  std::vector<std::string> out;
  if (spec.total_sites < 1) out.push_back("total_sites must be positive");
  if (spec.side_sites < 0 || spec.side_sites > 3)
    out.push_back("side_sites must be in 0..3 (got " + std::to_string(spec.side_sites) + ")");
  if (spec.backbone() < 2)
    out.push_back("backbone length N-m must be at least 2 (got " + std::to_string(spec.backbone()) + ")");
  if (spec.side_sites >= 1 && spec.backbone() >= 1 &&
      (spec.attach_pos < 1 || spec.attach_pos > spec.backbone()))
    out.push_back("attach_pos out of range 1.." + std::to_string(spec.backbone()));
  if (spec.boundary == Boundary::periodic && spec.side_sites != 0)
    out.push_back("periodic boundary requires m=0");
  if (spec.boundary == Boundary::periodic && spec.backbone() < 3)
    out.push_back("periodic boundary requires at least 3 sites");
  return out;
}

/// Attach position that maps onto `pos` under reversal of the backbone.
inline int mirror_position(const ChainSpec& spec, int pos) { return spec.backbone() + 1 - pos; }

/// Immutable graph: symmetric 0/1 adjacency with empty diagonal, on-site
/// energies (units of K) and hopping scale K > 0. Always connected.
class QuantumGraph {
 public:
  static QuantumGraph build(Eigen::MatrixXi adjacency, Eigen::VectorXd onsite, double hopping) {
    auto problems = violations(adjacency, onsite, hopping);
    if (!problems.empty()) throw ValidationError("invalid quantum graph", std::move(problems));
    QuantumGraph g;
    g.adjacency_ = std::move(adjacency);
    g.onsite_ = std::move(onsite);
    g.hopping_ = hopping;
    return g;
  }

  static std::vector<std::string> violations(const Eigen::MatrixXi& a, const Eigen::VectorXd& onsite,
                                             double hopping) {
    std::vector<std::string> out;
    const auto n = a.rows();
    if (n < 1) out.push_back("graph must have at least one site");
    if (a.rows() != a.cols()) {
      out.push_back("adjacency must be square");
      return out;
    }
    if (onsite.size() != n) out.push_back("onsite vector length differs from site count");
    if (!(hopping > 0.0)) out.push_back("hopping must be positive");
    bool asym = false, diag = false, entries = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (a(i, i) != 0) diag = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (a(i, j) != 0 && a(i, j) != 1) entries = true;
        if (a(i, j) != a(j, i)) asym = true;
      }
    }
    if (entries) out.push_back("adjacency entries must be 0 or 1");
    if (asym) out.push_back("adjacency is not symmetric");
    if (diag) out.push_back("adjacency has nonzero diagonal");
    if (n > 0 && !asym) {
      std::vector<bool> seen(static_cast<std::size_t>(n), false);
      std::deque<Eigen::Index> queue{0};
      seen[0] = true;
      std::size_t reached = 1;
      while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        for (Eigen::Index v = 0; v < n; ++v)
          if (a(u, v) != 0 && !seen[static_cast<std::size_t>(v)]) {
            seen[static_cast<std::size_t>(v)] = true;
            ++reached;
            queue.push_back(v);
          }
      }
      if (reached != static_cast<std::size_t>(n)) out.push_back("graph is disconnected");
    }
    return out;
  }

  int size() const { return static_cast<int>(adjacency_.rows()); }
  const Eigen::MatrixXi& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& onsite() const { return onsite_; }
  double hopping() const { return hopping_; }
  bool connected(int i, int j) const { return adjacency_(i, j) != 0; }

  int degree(int i) const { return adjacency_.row(i).sum(); }

  std::vector<int> degrees() const {
    std::vector<int> d(static_cast<std::size_t>(size()));
    for (int i = 0; i < size(); ++i) d[static_cast<std::size_t>(i)] = degree(i);
    return d;
  }

  /// Undirected edges (i < j), 0-based, in row-major order.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < size(); ++i)
      for (int j = i + 1; j < size(); ++j)
        if (connected(i, j)) out.emplace_back(i, j);
    return out;
  }

  std::size_t edge_count() const { return static_cast<std::size_t>(adjacency_.sum() / 2); }

  /// Copy with replaced on-site energies.
  QuantumGraph with_onsite(Eigen::VectorXd onsite) const { return build(adjacency_, std::move(onsite), hopping_); }

 private:
  QuantumGraph() = default;

  Eigen::MatrixXi adjacency_;
  Eigen::VectorXd onsite_;
  double hopping_ = 1.0;
};

inline QuantumGraph build_custom(Eigen::MatrixXi adjacency, Eigen::VectorXd onsite, double hopping = 1.0) {
  return QuantumGraph::build(std::move(adjacency), std::move(onsite), hopping);
}

/// Backbone nodes take indices 0..N-m-1, side-sites the trailing m indices,
/// all attached to the same backbone node.
inline QuantumGraph build_chain(const ChainSpec& spec, double hopping = 1.0) {
  auto problems = chain_spec_violations(spec);
  if (!problems.empty()) throw ValidationError("invalid chain spec", std::move(problems));
  const int n = spec.total_sites;
  const int nb = spec.backbone();
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (int i = 0; i + 1 < nb; ++i) a(i, i + 1) = a(i + 1, i) = 1;
  if (spec.boundary == Boundary::periodic) a(0, nb - 1) = a(nb - 1, 0) = 1;
  const int hub = spec.attach_pos - 1;
  for (int k = 0; k < spec.side_sites; ++k) a(nb + k, hub) = a(hub, nb + k) = 1;
  return QuantumGraph::build(std::move(a), Eigen::VectorXd::Zero(n), hopping);
}

/// All-pairs hop counts.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(Eigen::MatrixXi d) : d_(std::move(d)) {}

  int operator()(int i, int j) const { return d_(i, j); }
  int size() const { return static_cast<int>(d_.rows()); }
  int max() const { return d_.maxCoeff(); }
  const Eigen::MatrixXi& matrix() const { return d_; }

 private:
  Eigen::MatrixXi d_;
};

inline DistanceMatrix shortest_path_distances(const QuantumGraph& g) {
  const int n = g.size();
  Eigen::MatrixXi d = Eigen::MatrixXi::Constant(n, n, -1);
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (auto [i, j] : g.edges()) {
    nbrs[static_cast<std::size_t>(i)].push_back(j);
    nbrs[static_cast<std::size_t>(j)].push_back(i);
  }
  std::deque<int> queue;
  for (int s = 0; s < n; ++s) {
    d(s, s) = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int v : nbrs[static_cast<std::size_t>(u)])
        if (d(s, v) < 0) {
          d(s, v) = d(s, u) + 1;
          queue.push_back(v);
        }
    }
  }
  return DistanceMatrix(std::move(d));
}

// Edge-list text format:
//
//   # comment
//   N 40
//   K 1
//   epsilon 5 0.25        (1-based site, on-site energy override)
//   1 2                   (one edge per line, 1-based)
//
// Header lines may appear in any order but N must precede the first edge.

inline void write_edge_list(std::ostream& os, const QuantumGraph& g) {
  os.precision(17);
  os << "# quantum graph edge list (1-based)\n";
  os << "N " << g.size() << "\n";
  os << "K " << g.hopping() << "\n";
  for (int i = 0; i < g.size(); ++i)
    if (g.onsite()(i) != 0.0) os << "epsilon " << (i + 1) << " " << g.onsite()(i) << "\n";
  for (auto [i, j] : g.edges()) os << (i + 1) << " " << (j + 1) << "\n";
}

inline QuantumGraph read_edge_list(std::istream& is) {
  int n = -1;
  double hopping = 1.0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<int, double>> eps;
  std::vector<std::string> problems;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (head == "N") {
      if (!(ls >> n) || n < 1) problems.push_back(where + "bad site count");
    } else if (head == "K") {
      if (!(ls >> hopping)) problems.push_back(where + "bad hopping");
    } else if (head == "epsilon") {
      int site = 0;
      double value = 0.0;
      if (!(ls >> site >> value)) problems.push_back(where + "bad epsilon override");
      else eps.emplace_back(site, value);
    } else {
      int i = 0, j = 0;
      std::istringstream es(line);
      if (!(es >> i >> j)) problems.push_back(where + "expected 'i j' edge");
      else edges.emplace_back(i, j);
    }
  }
  if (n < 1) problems.push_back("missing N header");
  if (!problems.empty()) throw ValidationError("malformed edge list", std::move(problems));

  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  Eigen::VectorXd onsite = Eigen::VectorXd::Zero(n);
  for (auto [i, j] : edges) {
    if (i < 1 || i > n || j < 1 || j > n) {
      problems.push_back("edge " + std::to_string(i) + " " + std::to_string(j) + " out of range");
      continue;
    }
    a(i - 1, j - 1) = 1;
    a(j - 1, i - 1) = 1;
    if (i == j) a(i - 1, i - 1) = 1;
  }
  for (auto [site, value] : eps) {
    if (site < 1 || site > n) problems.push_back("epsilon site " + std::to_string(site) + " out of range");
    else onsite(site - 1) = value;
  }
  if (!problems.empty()) throw ValidationError("malformed edge list", std::move(problems));
  return QuantumGraph::build(std::move(a), std::move(onsite), hopping);
}

}  // namespace qgraph
