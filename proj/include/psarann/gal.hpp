// GAL neighbor-list exchange format. Header line "0 n", then per unit a
// line "id k" (1-based) followed by a line of k neighbor ids. Stores the
// adjacency only; weights come from row standardization afterwards.
#pragma once

#include "psarann/spatial_weights.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace psarann {

inline void write_gal(const AdjacencyMatrix& adj, std::ostream& os) {
  os << "0 " << adj.n << "\n";
  for (int i = 0; i < adj.n; ++i) {
    std::vector<int> nbrs;
    for (SparseMat::InnerIterator it(adj.entries, i); it; ++it)
      nbrs.push_back(static_cast<int>(it.col()) + 1);
    std::sort(nbrs.begin(), nbrs.end());
    os << (i + 1) << " " << nbrs.size() << "\n";
    for (size_t k = 0; k < nbrs.size(); ++k) os << nbrs[k] << (k + 1 < nbrs.size() ? " " : "");
    os << "\n";
  }
}

inline AdjacencyMatrix read_gal(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("GAL: empty input");
  std::istringstream header(line);
  long flag = -1, n = -1;
  std::string rest;
  if (!(header >> flag >> n) || (header >> rest) || flag != 0 || n < 0)
    throw std::runtime_error("GAL: malformed header line");

  std::vector<Eigen::Triplet<double>> trip;
  for (long i = 1; i <= n; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("GAL: missing record for unit " + std::to_string(i));
    std::istringstream rec(line);
    long id = 0, count = -1;
    if (!(rec >> id >> count) || id != i || count < 0)
      throw std::runtime_error("GAL: malformed record header for unit " + std::to_string(i));
    if (!std::getline(is, line))
      throw std::runtime_error("GAL: missing neighbor line for unit " + std::to_string(i));
    std::istringstream nbrs(line);
    long nb = 0, seen = 0;
    while (nbrs >> nb) {
      if (nb < 1 || nb > n)
        throw std::runtime_error("GAL: neighbor id " + std::to_string(nb) + " out of range");
      trip.emplace_back(static_cast<int>(i - 1), static_cast<int>(nb - 1), 1.0);
      ++seen;
    }
    if (seen != count)
      throw std::runtime_error("GAL: neighbor count mismatch for unit " + std::to_string(i));
  }
  AdjacencyMatrix adj;
  adj.n = static_cast<int>(n);
  SparseMat m(adj.n, adj.n);
  m.setFromTriplets(trip.begin(), trip.end(), [](double, double) { return 1.0; });
  m.makeCompressed();
  adj.entries = std::move(m);
  adj.symmetric = detail::is_structurally_symmetric(adj.entries);
  return adj;
}

inline void write_gal_file(const AdjacencyMatrix& adj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_gal(adj, os);
}

inline AdjacencyMatrix read_gal_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_gal(is);
}

}  // namespace psarann
