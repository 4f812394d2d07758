#include "mktsim/rainflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mktsim::rainflow {

namespace {

struct TieEvents {
  std::vector<int> nodes;  // interior nodes whose perturbation may change the pattern
  int sites = 0;           // distinct tie locations (flat runs, tied extractions)

  void add_site(std::initializer_list<int> ns, int n_nodes) {
    ++sites;
    for (int s : ns) {
      if (s > 0 && s < n_nodes - 1) nodes.push_back(s);
    }
  }
};

bool is_strict_extremum(const double* x, int node, int prev, int next) {
  const double m = x[node], a = x[prev], b = x[next];
  return (m > a + kFlatTol && m > b + kFlatTol) || (m < a - kFlatTol && m < b - kFlatTol);
}

// Drop interior switching nodes that stopped being strict extrema after an
// extraction. Nodes tied with a neighbour are left for the 4-tuple scan to
// extract as a degenerate pair.
void merge_non_extrema(const double* x, std::vector<int>& sw) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int p = 1; p + 1 < static_cast<int>(sw.size()); ++p) {
      const double m = x[sw[p]], a = x[sw[p - 1]], b = x[sw[p + 1]];
      if (std::abs(m - a) <= kFlatTol || std::abs(m - b) <= kFlatTol) continue;
      if (!is_strict_extremum(x, sw[p], sw[p - 1], sw[p + 1])) {
        sw.erase(sw.begin() + p);
        changed = true;
        break;
      }
    }
  }
}

// Core of the Rainflow stages: switching-point identification, full-cycle
// extraction (leftmost window, "smallest or equal" middle range), residual
// half-cycles. Half-cycles are appended in extraction order.
void decompose(const double* x, int n_nodes, std::vector<HalfCycle>& out, TieEvents* ties) {
  out.clear();
  if (n_nodes < 2) throw InvalidHorizonError("SoC profile needs at least 2 nodes");

  // Runs of equal values (within kFlatTol between consecutive nodes).
  std::vector<int> run_start, run_end;
  run_start.push_back(0);
  for (int t = 1; t < n_nodes; ++t) {
    if (std::abs(x[t] - x[t - 1]) > kFlatTol) {
      run_end.push_back(t - 1);
      run_start.push_back(t);
    }
  }
  run_end.push_back(n_nodes - 1);
  const int n_runs = static_cast<int>(run_start.size());
  if (n_runs == 1) return;  // constant profile: no half-cycles

  auto dir = [&](int i) {  // direction of the segment between run i and run i+1
    return x[run_start[i + 1]] > x[run_end[i]] ? +1 : -1;
  };

  std::vector<int> sw;  // switching node list
  sw.push_back(0);
  for (int i = 1; i + 1 < n_runs; ++i) {
    const int len = run_end[i] - run_start[i] + 1;
    if (dir(i - 1) != dir(i)) {
      // Flat extremum: merged to its leftmost node.
      sw.push_back(run_start[i]);
      if (len > 1 && ties) ties->add_site({run_start[i], run_end[i]}, n_nodes);
    } else if (len > 1) {
      // Flat run inside a monotone stretch: consecutive node pairs become
      // zero-depth tied pairs; an odd leftover node is transparent.
      for (int k = 0; k + 1 < len; k += 2) {
        sw.push_back(run_start[i] + k);
        sw.push_back(run_start[i] + k + 1);
      }
      if (ties) ties->add_site({run_start[i], run_end[i]}, n_nodes);
    }
  }
  sw.push_back(n_nodes - 1);

  // Full-cycle extraction.
  for (;;) {
    bool extracted = false;
    for (int w = 0; w + 3 < static_cast<int>(sw.size()); ++w) {
      const int s1 = sw[w], s2 = sw[w + 1], s3 = sw[w + 2], s4 = sw[w + 3];
      const double d1 = std::abs(x[s1] - x[s2]);
      const double d2 = std::abs(x[s2] - x[s3]);
      const double d3 = std::abs(x[s3] - x[s4]);
      if (d2 <= d1 + kTieTol && d2 <= d3 + kTieTol) {
        if (ties && d2 > kFlatTol &&
            (std::abs(d2 - d1) <= kTieTol || std::abs(d2 - d3) <= kTieTol)) {
          ties->add_site({s1, s2, s3, s4}, n_nodes);
        }
        int src, snk;
        if (x[s2] != x[s3]) {
          src = x[s2] > x[s3] ? s2 : s3;
        } else {
          // Exactly tied pair: orient by the incoming direction so the left
          // node plays the virtual maximum on a rising stretch.
          src = x[s2] > x[s1] ? s2 : s3;
        }
        snk = (src == s2) ? s3 : s2;
        out.push_back({src, snk, HalfCycleKind::kFullCycleHalf, std::abs(x[src] - x[snk])});
        out.push_back(out.back());
        sw.erase(sw.begin() + w + 1, sw.begin() + w + 3);
        merge_non_extrema(x, sw);
        extracted = true;
        break;
      }
    }
    if (!extracted) break;
  }

  // Residual half-cycles between the remaining switching points.
  for (int i = 0; i + 1 < static_cast<int>(sw.size()); ++i) {
    const int a = sw[i], b = sw[i + 1];
    const double depth = std::abs(x[a] - x[b]);
    if (depth <= kFlatTol) continue;
    const int src = x[a] > x[b] ? a : b;
    const int snk = (src == a) ? b : a;
    out.push_back({src, snk, HalfCycleKind::kResidualHalf, depth});
  }
}

Eigen::VectorXd depth_vector(const std::vector<HalfCycle>& halves, int horizon) {
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(horizon);
  for (int i = 0; i < static_cast<int>(halves.size()); ++i) nu[i] = halves[i].depth;
  return nu;
}

Eigen::VectorXd soc_of(const Eigen::VectorXd& rates, double capacity, double x0) {
  Eigen::VectorXd x(rates.size() + 1);
  x[0] = x0;
  for (int t = 0; t < rates.size(); ++t) x[t + 1] = x[t] - rates[t] / capacity;
  return x;
}

void check_bounds(const Eigen::VectorXd& soc) {
  for (int t = 0; t < soc.size(); ++t) {
    if (soc[t] < -kFlatTol || soc[t] > 1.0 + kFlatTol) {
      throw InfeasibleProfileError("induced SoC " + std::to_string(soc[t]) + " at node " +
                                   std::to_string(t) + " is outside [0, 1]");
    }
  }
}

// Row value of a half-cycle pattern at rate vector u: +/- (1/E) * contiguous sum.
double row_value(const HalfCycle& h, const Eigen::VectorXd& u, double capacity) {
  double s = 0.0;
  if (h.source < h.sink) {
    for (int t = h.source + 1; t <= h.sink; ++t) s += u[t - 1];
    return s / capacity;
  }
  for (int t = h.sink + 1; t <= h.source; ++t) s += u[t - 1];
  return -s / capacity;
}

void write_row(Eigen::MatrixXd& n_mat, int row, const HalfCycle& h, double capacity) {
  if (h.source < h.sink) {
    for (int t = h.source + 1; t <= h.sink; ++t) n_mat(row, t - 1) = 1.0 / capacity;
  } else {
    for (int t = h.sink + 1; t <= h.source; ++t) n_mat(row, t - 1) = -1.0 / capacity;
  }
}

// Align a perturbed decomposition to the canonical depth slots. Vanished tied
// pairs become zero rows; anything that cannot be matched by value fails.
bool align_to_canonical(const std::vector<HalfCycle>& variant, const Eigen::VectorXd& nu,
                        const Eigen::VectorXd& u, double capacity, int horizon,
                        Eigen::MatrixXd& aligned) {
  aligned = Eigen::MatrixXd::Zero(horizon, horizon);
  std::vector<bool> used(variant.size(), false);
  const double tol = 1e-9 * (1.0 + nu.cwiseAbs().maxCoeff());
  for (int r = 0; r < nu.size(); ++r) {
    bool matched = false;
    for (int k = 0; k < static_cast<int>(variant.size()); ++k) {
      if (used[k]) continue;
      if (std::abs(row_value(variant[k], u, capacity) - nu[r]) <= tol) {
        write_row(aligned, r, variant[k], capacity);
        used[k] = true;
        matched = true;
        break;
      }
    }
    if (!matched && nu[r] > kFlatTol) return false;
  }
  for (bool b : used) {
    if (!b) {
      // leftover variant half-cycle with no canonical slot
      return false;
    }
  }
  const Eigen::VectorXd check = aligned * u;
  return (check - nu).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + nu.cwiseAbs().maxCoeff());
}

RateToDepthOperator build_operator(const Eigen::VectorXd& soc, const Eigen::VectorXd& u,
                                   double capacity) {
  const int horizon = static_cast<int>(u.size());
  TieEvents ties;
  std::vector<HalfCycle> halves;
  decompose(soc.data(), static_cast<int>(soc.size()), halves, &ties);
  const Eigen::VectorXd nu = depth_vector(halves, horizon);

  RateToDepthOperator op;
  Eigen::MatrixXd canonical = Eigen::MatrixXd::Zero(horizon, horizon);
  for (int r = 0; r < static_cast<int>(halves.size()); ++r) write_row(canonical, r, halves[r], capacity);
  op.matrices.push_back(canonical);
  op.canonical_index = 0;

  if (ties.nodes.empty()) return op;
  op.enumeration_complete = ties.sites <= 1;

  // Smallest nonzero gap between distinct profile values fixes the virtual
  // perturbation size.
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < soc.size(); ++i) {
    for (int j = i + 1; j < soc.size(); ++j) {
      const double g = std::abs(soc[i] - soc[j]);
      if (g > kFlatTol) min_gap = std::min(min_gap, g);
    }
  }
  if (!std::isfinite(min_gap)) return op;  // all values tied; nothing to separate
  const double eps = 0.25 * min_gap;
  if (eps <= 10.0 * kFlatTol) {
    op.enumeration_complete = false;
    return op;
  }

  std::vector<int> nodes = ties.nodes;
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  Eigen::VectorXd perturbed = soc;
  std::vector<HalfCycle> variant;
  for (int node : nodes) {
    for (double sign : {+1.0, -1.0}) {
      perturbed[node] = soc[node] + sign * eps;
      decompose(perturbed.data(), static_cast<int>(perturbed.size()), variant, nullptr);
      perturbed[node] = soc[node];

      Eigen::MatrixXd aligned;
      if (!align_to_canonical(variant, nu, u, capacity, horizon, aligned)) {
        op.enumeration_complete = false;
        continue;
      }
      bool duplicate = false;
      for (const auto& m : op.matrices) {
        if ((m - aligned).cwiseAbs().maxCoeff() <= 1e-15) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;
      if (op.count() >= kMaxOperators) {
        op.enumeration_complete = false;
        break;
      }
      op.matrices.push_back(aligned);
    }
    if (op.count() >= kMaxOperators) break;
  }
  return op;
}

}  // namespace

Eigen::MatrixXd Decomposition::incidence() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(horizon + 1, horizon);
  for (int r = 0; r < static_cast<int>(pairings.size()); ++r) {
    m(pairings[r].source, r) = 1.0;
    m(pairings[r].sink, r) = -1.0;
  }
  return m;
}

Decomposition count_cycles(const Eigen::VectorXd& soc) {
  Decomposition d;
  d.horizon = static_cast<int>(soc.size()) - 1;
  decompose(soc.data(), static_cast<int>(soc.size()), d.pairings, nullptr);
  d.depths = depth_vector(d.pairings, d.horizon);
  return d;
}

Eigen::MatrixXd incidence_matrix(const Eigen::VectorXd& soc) {
  return count_cycles(soc).incidence();
}

RateToDepthOperator rate_to_depth_operator(const Eigen::VectorXd& rates, double capacity_mwh,
                                           double initial_soc) {
  const Eigen::VectorXd soc = soc_of(rates, capacity_mwh, initial_soc);
  check_bounds(soc);
  return build_operator(soc, rates, capacity_mwh);
}

Eigen::VectorXd depths_from_rates(const Eigen::VectorXd& rates, double capacity_mwh,
                                  double initial_soc) {
  const Eigen::VectorXd soc = soc_of(rates, capacity_mwh, initial_soc);
  check_bounds(soc);
  return count_cycles(soc).depths;
}

RateToDepthOperator operator_for_shape(const Eigen::VectorXd& shape, double capacity_mwh) {
  const int horizon = static_cast<int>(shape.size());
  Eigen::VectorXd csum = Eigen::VectorXd::Zero(horizon + 1);
  for (int t = 0; t < horizon; ++t) csum[t + 1] = csum[t] + shape[t];
  const double lo = csum.minCoeff(), hi = csum.maxCoeff();
  if (hi - lo <= 0.0) {
    RateToDepthOperator op;
    op.matrices.push_back(Eigen::MatrixXd::Zero(horizon, horizon));
    return op;
  }
  // x = x0 - s * csum spanning [0.05, 0.95]; the pattern is scale invariant.
  // Rates consistent with that profile at the given capacity are s * E * shape,
  // which keeps the internal row/depth cross-checks exact.
  const double scale = 0.9 / (hi - lo);
  Eigen::VectorXd soc = ((0.95 + scale * lo) - (scale * csum).array()).matrix();
  return build_operator(soc, scale * capacity_mwh * shape, capacity_mwh);
}

Eigen::MatrixXd matrix_from_pairings(const std::vector<HalfCycle>& pairings, int horizon,
                                     double capacity_mwh) {
  Eigen::MatrixXd n_mat = Eigen::MatrixXd::Zero(horizon, horizon);
  for (int r = 0; r < static_cast<int>(pairings.size()); ++r)
    write_row(n_mat, r, pairings[r], capacity_mwh);
  return n_mat;
}

double sum_squared_depths(const double* soc, int n_nodes) {
  thread_local std::vector<HalfCycle> halves;
  decompose(soc, n_nodes, halves, nullptr);
  double s = 0.0;
  for (const auto& h : halves) s += h.depth * h.depth;
  return s;
}

}  // namespace mktsim::rainflow
