// Spatial weight matrices: neighbor graphs from lattices and point sets,
// row standardization, spectra and admissible rho intervals.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <lapacke.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace psarann {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class ContiguityRule { rook, bishop, queen };

inline std::string to_string(ContiguityRule r) {
  switch (r) {
    case ContiguityRule::rook: return "rook";
    case ContiguityRule::bishop: return "bishop";
    default: return "queen";
  }
}

inline ContiguityRule contiguity_from_string(const std::string& s) {
  if (s == "rook") return ContiguityRule::rook;
  if (s == "bishop") return ContiguityRule::bishop;
  if (s == "queen") return ContiguityRule::queen;
  throw std::invalid_argument("unknown contiguity rule: " + s);
}

// A rows x cols grid, units numbered row-major starting at the top-left.
struct LatticeSpec {
  int rows = 1;
  int cols = 1;
  ContiguityRule rule = ContiguityRule::queen;
};

struct PointSet {
  std::vector<std::array<double, 2>> coordinates;

  int size() const { return static_cast<int>(coordinates.size()); }
  double distance(int i, int j) const {
    const double dx = coordinates[i][0] - coordinates[j][0];
    const double dy = coordinates[i][1] - coordinates[j][1];
    return std::hypot(dx, dy);
  }
  void validate() const {
    for (const auto& c : coordinates)
      if (!std::isfinite(c[0]) || !std::isfinite(c[1]))
        throw std::invalid_argument("point coordinates must be finite");
    for (int i = 0; i < size(); ++i)
      for (int j = i + 1; j < size(); ++j)
        if (coordinates[i] == coordinates[j])
          throw std::invalid_argument("duplicate points make distances degenerate");
  }
};

// 0/1 neighbor indicators, zero diagonal. Directed graphs (k-nearest) allowed.
struct AdjacencyMatrix {
  int n = 0;
  SparseMat entries;
  bool symmetric = false;
  std::optional<LatticeSpec> lattice;
};

struct RhoInterval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

// Nonnegative weights; when standardized every row sums to 1 and `degrees`
// holds the adjacency row sums used for the scaling.
struct WeightMatrix {
  int n = 0;
  SparseMat w;
  bool standardized = false;
  bool from_symmetric_adjacency = false;
  Eigen::VectorXd degrees;
  std::optional<LatticeSpec> lattice;
  std::optional<Eigen::VectorXd> spectrum;  // ascending when present
  std::optional<RhoInterval> rho_interval;
};

namespace detail {

inline bool is_structurally_symmetric(const SparseMat& m) {
  SparseMat t = SparseMat(m.transpose());
  if (t.nonZeros() != m.nonZeros()) return false;
  for (int i = 0; i < m.outerSize(); ++i) {
    SparseMat::InnerIterator a(m, i), b(t, i);
    for (; a && b; ++a, ++b)
      if (a.col() != b.col() || a.value() != b.value()) return false;
    if (a || b) return false;
  }
  return true;
}

inline SparseMat from_triplets(int n, std::vector<Eigen::Triplet<double>>& trip) {
  SparseMat m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

// Queen: Chebyshev distance 1; rook: Manhattan distance 1; bishop: both
// coordinate offsets of absolute value 1.
inline AdjacencyMatrix build_lattice_adjacency(const LatticeSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1)
    throw std::invalid_argument("lattice dimensions must be positive");
  const int n = spec.rows * spec.cols;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 8);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const int u = r * spec.cols + c;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          bool keep = false;
          switch (spec.rule) {
            case ContiguityRule::rook: keep = std::abs(dr) + std::abs(dc) == 1; break;
            case ContiguityRule::bishop: keep = dr != 0 && dc != 0; break;
            case ContiguityRule::queen: keep = true; break;
          }
          if (!keep) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= spec.rows || cc < 0 || cc >= spec.cols) continue;
          trip.emplace_back(u, rr * spec.cols + cc, 1.0);
        }
      }
    }
  }
  AdjacencyMatrix a;
  a.n = n;
  a.entries = detail::from_triplets(n, trip);
  a.symmetric = true;
  a.lattice = spec;
  return a;
}

// Neighbors within the smallest threshold T that leaves no unit isolated:
// T = max_i min_{j != i} d(i, j).
inline AdjacencyMatrix build_minimum_distance(const PointSet& points) {
  points.validate();
  const int n = points.size();
  if (n < 2) throw std::invalid_argument("minimum-distance graph needs at least 2 points");
  double threshold = 0.0;
  for (int i = 0; i < n; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) nearest = std::min(nearest, points.distance(i, j));
    threshold = std::max(threshold, nearest);
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = points.distance(i, j);
      if (d > 0.0 && d <= threshold) trip.emplace_back(i, j, 1.0);
    }
  AdjacencyMatrix a;
  a.n = n;
  a.entries = detail::from_triplets(n, trip);
  a.symmetric = true;
  return a;
}

// Directed: row i marks the k nearest other points, ties broken by lower index.
inline AdjacencyMatrix build_knn(const PointSet& points, int k) {
  points.validate();
  const int n = points.size();
  if (n < 2) throw std::invalid_argument("k-nearest graph needs at least 2 points");
  if (k < 1 || k > n - 1) throw std::invalid_argument("k must satisfy 1 <= k <= n-1");
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.emplace_back(points.distance(i, j), j);
    std::sort(order.begin(), order.end());
    for (int m = 0; m < k; ++m) trip.emplace_back(i, order[m].second, 1.0);
  }
  AdjacencyMatrix a;
  a.n = n;
  a.entries = detail::from_triplets(n, trip);
  a.symmetric = detail::is_structurally_symmetric(a.entries);
  return a;
}

// Circles of radius r_i = min_{k != i} d(i,k) must cross in two points:
// |r_i - r_j| < d(i,j) < r_i + r_j, strictly (tangency does not count).
inline AdjacencyMatrix build_sphere_of_influence(const PointSet& points) {
  points.validate();
  const int n = points.size();
  if (n < 2) throw std::invalid_argument("sphere-of-influence graph needs at least 2 points");
  std::vector<double> radius(n);
  for (int i = 0; i < n; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) nearest = std::min(nearest, points.distance(i, j));
    radius[i] = nearest;
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = points.distance(i, j);
      if (std::abs(radius[i] - radius[j]) < d && d < radius[i] + radius[j]) {
        trip.emplace_back(i, j, 1.0);
      }
    }
  AdjacencyMatrix a;
  a.n = n;
  a.entries = detail::from_triplets(n, trip);
  a.symmetric = true;
  return a;
}

// Union of i->j and j->i edges; keeps an asymmetric k-nearest graph usable
// where a symmetric matrix is required.
inline AdjacencyMatrix symmetrize(const AdjacencyMatrix& adj) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * static_cast<size_t>(adj.entries.nonZeros()));
  for (int i = 0; i < adj.entries.outerSize(); ++i)
    for (SparseMat::InnerIterator it(adj.entries, i); it; ++it) {
      trip.emplace_back(it.row(), it.col(), 1.0);
      trip.emplace_back(it.col(), it.row(), 1.0);
    }
  AdjacencyMatrix out;
  out.n = adj.n;
  SparseMat m(adj.n, adj.n);
  m.setFromTriplets(trip.begin(), trip.end(), [](double, double) { return 1.0; });
  m.makeCompressed();
  out.entries = std::move(m);
  out.symmetric = true;
  out.lattice = adj.lattice;
  return out;
}

// Wraps a raw 0/1 adjacency as an unstandardized weight matrix.
inline WeightMatrix as_weight_matrix(const AdjacencyMatrix& adj) {
  WeightMatrix w;
  w.n = adj.n;
  w.w = adj.entries;
  w.standardized = false;
  w.from_symmetric_adjacency = adj.symmetric;
  w.lattice = adj.lattice;
  return w;
}

inline WeightMatrix row_standardize(const AdjacencyMatrix& adj) {
  WeightMatrix out;
  out.n = adj.n;
  out.degrees = Eigen::VectorXd::Zero(adj.n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(adj.entries.nonZeros()));
  for (int i = 0; i < adj.n; ++i) {
    double row_sum = 0.0;
    for (SparseMat::InnerIterator it(adj.entries, i); it; ++it) row_sum += it.value();
    if (row_sum == 0.0)
      throw std::invalid_argument("unit " + std::to_string(i + 1) +
                                  " has no neighbors; drop it before standardizing");
    out.degrees[i] = row_sum;
    for (SparseMat::InnerIterator it(adj.entries, i); it; ++it)
      trip.emplace_back(i, it.col(), it.value() / row_sum);
  }
  out.w = detail::from_triplets(adj.n, trip);
  out.standardized = true;
  out.from_symmetric_adjacency = adj.symmetric;
  out.lattice = adj.lattice;
  return out;
}

namespace detail {

// All eigenvalues of a dense symmetric matrix, ascending. The input is
// consumed. Values-only LAPACK drivers; the two-stage reduction pays off
// from moderate sizes up.
inline Eigen::VectorXd dense_symmetric_eigenvalues(Eigen::MatrixXd m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd vals(n);
  if (n == 0) return vals;
  if (n == 1) {
    vals[0] = m(0, 0);
    return vals;
  }
  lapack_int info;
  if (n >= 512) {
    info = LAPACKE_dsyevd_2stage(LAPACK_COL_MAJOR, 'N', 'L', n, m.data(), n, vals.data());
  } else {
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, m.data(), n, vals.data());
  }
  if (info != 0) throw std::runtime_error("symmetric eigenvalue computation failed");
  return vals;
}

// One half of a symmetry reduction: orthonormal basis P for an eigenspace of
// a signed involution J commuting with S, so that spec(S) splits into
// spec(P'SP) over the two sectors.
struct SymmetrySector {
  SparseMat m;                    // P' S P, symmetric
  std::vector<int> rep;           // block index -> parent basis index
  std::vector<int> partner;       // involution image of rep (== rep for fixed)
  int character = +1;             // which eigenspace of J this sector spans
};

// perm/sign describe J: J e_u = sign[u] * e_perm[u], J^2 = I, J S J = S.
// Fixed points must carry sign +1 (they all do for reflection symmetries).
inline std::array<SymmetrySector, 2> split_by_involution(
    const SparseMat& s, const std::vector<int>& perm, const std::vector<int>& sign) {
  const int n = static_cast<int>(s.rows());
  std::array<SymmetrySector, 2> sectors;
  sectors[0].character = +1;
  sectors[1].character = -1;
  std::vector<Eigen::Triplet<double>> p_plus, p_minus;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int u = 0; u < n; ++u) {
    const int v = perm[u];
    if (v == u) {
      if (sign[u] != +1) throw std::logic_error("fixed point with negative sign");
      const int idx = static_cast<int>(sectors[0].rep.size());
      sectors[0].rep.push_back(u);
      sectors[0].partner.push_back(u);
      p_plus.emplace_back(u, idx, 1.0);
    } else if (u < v) {
      const double su = static_cast<double>(sign[u]);
      int idx = static_cast<int>(sectors[0].rep.size());
      sectors[0].rep.push_back(u);
      sectors[0].partner.push_back(v);
      p_plus.emplace_back(u, idx, inv_sqrt2);
      p_plus.emplace_back(v, idx, su * inv_sqrt2);
      idx = static_cast<int>(sectors[1].rep.size());
      sectors[1].rep.push_back(u);
      sectors[1].partner.push_back(v);
      p_minus.emplace_back(u, idx, inv_sqrt2);
      p_minus.emplace_back(v, idx, -su * inv_sqrt2);
    }
  }
  {
    Eigen::SparseMatrix<double> p(n, static_cast<int>(sectors[0].rep.size()));
    p.setFromTriplets(p_plus.begin(), p_plus.end());
    Eigen::SparseMatrix<double> sc = Eigen::SparseMatrix<double>(s);
    sectors[0].m = SparseMat((p.transpose() * sc * p).pruned());
  }
  {
    Eigen::SparseMatrix<double> p(n, static_cast<int>(sectors[1].rep.size()));
    p.setFromTriplets(p_minus.begin(), p_minus.end());
    Eigen::SparseMatrix<double> sc = Eigen::SparseMatrix<double>(s);
    sectors[1].m = SparseMat((p.transpose() * sc * p).pruned());
  }
  return sectors;
}

// Spectrum of the symmetric matrix `s` defined on an r x c grid, exploiting
// the two grid reflections. Each reflection halves the eigenproblem; the
// blocks after the first split inherit the second reflection as a signed
// involution on their basis.
inline Eigen::VectorXd lattice_symmetric_spectrum(const SparseMat& s, int rows, int cols) {
  const int n = rows * cols;
  auto flip_rows = [&](int u) {
    const int r = u / cols, c = u % cols;
    return (rows - 1 - r) * cols + c;
  };
  auto flip_cols = [&](int u) {
    const int r = u / cols, c = u % cols;
    return r * cols + (cols - 1 - c);
  };

  std::vector<double> all_vals;
  all_vals.reserve(n);

  std::vector<int> perm1(n), sign1(n, +1);
  for (int u = 0; u < n; ++u) perm1[u] = flip_rows(u);

  auto sectors = split_by_involution(s, perm1, sign1);
  for (const auto& sec : sectors) {
    const int m = static_cast<int>(sec.rep.size());
    if (m == 0) continue;
    // Index of each rep within this sector, for mapping the second reflection.
    std::vector<int> index_of(n, -1);
    for (int k = 0; k < m; ++k) index_of[sec.rep[k]] = k;
    std::vector<int> perm2(m), sign2(m);
    for (int k = 0; k < m; ++k) {
      const int w = flip_cols(sec.rep[k]);
      const int wp = perm1[w];
      const int rep = std::min(w, wp);
      perm2[k] = index_of[rep];
      sign2[k] = (rep == w) ? +1 : sec.character;
    }
    auto inner = split_by_involution(sec.m, perm2, sign2);
    for (const auto& blk : inner) {
      if (blk.rep.empty()) continue;
      Eigen::VectorXd vals = dense_symmetric_eigenvalues(Eigen::MatrixXd(blk.m));
      all_vals.insert(all_vals.end(), vals.data(), vals.data() + vals.size());
    }
  }
  std::sort(all_vals.begin(), all_vals.end());
  return Eigen::Map<Eigen::VectorXd>(all_vals.data(), static_cast<int>(all_vals.size()));
}

}  // namespace detail

struct SpectrumResult {
  Eigen::VectorXd spectrum;  // ascending
  RhoInterval rho_interval;
};

// Real spectrum of W. For a row-standardized matrix built from a symmetric
// adjacency, D^-1 A is similar to the symmetric D^-1/2 A D^-1/2, which is
// what gets decomposed. The admissible interval is (-1/tau, 1/tau) with
// tau = max |tau_i|.
inline SpectrumResult spectrum_and_bounds(const WeightMatrix& w) {
  if (w.n == 0) throw std::invalid_argument("empty weight matrix");
  SparseMat sym;
  if (w.standardized) {
    if (!w.from_symmetric_adjacency)
      throw std::invalid_argument(
          "spectrum requires a symmetric adjacency behind the standardized matrix");
    // S_ij = w_ij * sqrt(d_i / d_j)
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(w.w.nonZeros()));
    for (int i = 0; i < w.n; ++i)
      for (SparseMat::InnerIterator it(w.w, i); it; ++it)
        trip.emplace_back(i, it.col(),
                          it.value() * std::sqrt(w.degrees[i] / w.degrees[it.col()]));
    sym = detail::from_triplets(w.n, trip);
  } else {
    if (!detail::is_structurally_symmetric(w.w))
      throw std::invalid_argument("spectrum of a general asymmetric matrix is unsupported");
    sym = w.w;
  }

  SpectrumResult out;
  if (w.lattice && w.lattice->rows * w.lattice->cols == w.n) {
    out.spectrum = detail::lattice_symmetric_spectrum(sym, w.lattice->rows, w.lattice->cols);
  } else {
    out.spectrum = detail::dense_symmetric_eigenvalues(Eigen::MatrixXd(sym));
  }
  const double tau = out.spectrum.size() > 0
                         ? std::max(std::abs(out.spectrum[0]),
                                    std::abs(out.spectrum[out.spectrum.size() - 1]))
                         : 0.0;
  if (tau > 0.0) {
    out.rho_interval = RhoInterval{-1.0 / tau, 1.0 / tau};
  } else {
    out.rho_interval = RhoInterval{};  // zero matrix: unconstrained
  }
  return out;
}

// Copy of `w` with the spectrum and rho interval cached.
inline WeightMatrix with_spectrum(WeightMatrix w) {
  if (!w.spectrum) {
    SpectrumResult s = spectrum_and_bounds(w);
    w.spectrum = std::move(s.spectrum);
    w.rho_interval = s.rho_interval;
  }
  return w;
}

}  // namespace psarann
