#pragma once

#include <string>
#include <vector>

#include "cardiac/errors.hpp"

namespace cardiac {

// Ascending bin edges over [0, 100]; bin i covers [edges[i], edges[i+1]) and
// the top bin additionally includes 100. Centers are edge midpoints.
struct BinSpec {
  std::vector<double> edges;  // K+1 values

  static BinSpec uniform(int k) {
    if (k < 1) throw ConfigError("BinSpec: bin count must be >= 1");
    BinSpec b;
    b.edges.resize(static_cast<size_t>(k) + 1);
    for (int i = 0; i <= k; ++i) b.edges[static_cast<size_t>(i)] = 100.0 * i / k;
    b.edges.front() = 0.0;
    b.edges.back() = 100.0;
    return b;
  }

  // Clinical severity scheme: severely reduced, moderately reduced,
  // mildly reduced (45-54%), normal.
  static BinSpec clinical4() {
    BinSpec b;
    b.edges = {0.0, 30.0, 45.0, 55.0, 100.0};
    return b;
  }

  int K() const { return static_cast<int>(edges.size()) - 1; }
  double center(int i) const { return 0.5 * (edges[static_cast<size_t>(i)] + edges[static_cast<size_t>(i) + 1]); }

  std::vector<double> centers() const {
    std::vector<double> c(static_cast<size_t>(K()));
    for (int i = 0; i < K(); ++i) c[static_cast<size_t>(i)] = center(i);
    return c;
  }

  void validate() const {
    if (K() < 1) throw ConfigError("BinSpec: need at least one bin");
    if (edges.front() != 0.0 || edges.back() != 100.0)
      throw ConfigError("BinSpec: edges must span [0, 100]");
    for (size_t i = 1; i < edges.size(); ++i)
      if (edges[i] <= edges[i - 1]) throw ConfigError("BinSpec: edges must be strictly ascending");
  }
};

inline int assign_bin(double ef, const BinSpec& bins) {
  if (ef < 0.0 || ef > 100.0)
    throw ValidationError("assign_bin: EF " + std::to_string(ef) + " outside [0, 100]");
  if (ef >= 100.0) return bins.K() - 1;
  int lo = 0, hi = bins.K() - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (ef >= bins.edges[static_cast<size_t>(mid)]) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

inline BinSpec parse_bin_scheme(const std::string& scheme, int k) {
  if (scheme == "uniform") return BinSpec::uniform(k);
  if (scheme == "clinical4") return BinSpec::clinical4();
  throw ConfigError("unknown bin scheme: " + scheme);
}

}  // namespace cardiac
