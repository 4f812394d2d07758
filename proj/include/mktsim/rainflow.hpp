#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mktsim/errors.hpp"

namespace mktsim::rainflow {

// Tolerance for flat segments and tied extrema on normalized SoC values.
inline constexpr double kFlatTol = 1e-9;
// Depth tie tolerance in full-cycle extraction ("smallest or equal").
inline constexpr double kTieTol = 1e-9;
// Cap on the enumeration of alternative rate-to-depth matrices at ties.
inline constexpr int kMaxOperators = 16;

enum class HalfCycleKind { kFullCycleHalf, kResidualHalf };

struct HalfCycle {
  int source = 0;  // node carrying the higher SoC (+1 entry of the incidence column)
  int sink = 0;
  HalfCycleKind kind = HalfCycleKind::kResidualHalf;
  double depth = 0.0;

  bool same_edge(const HalfCycle& o) const {
    return source == o.source && sink == o.sink && kind == o.kind;
  }
};

// Result of cycle counting a SoC profile of T+1 nodes.
struct Decomposition {
  int horizon = 0;                  // T
  Eigen::VectorXd depths;           // length T; extraction order, then zero padding
  std::vector<HalfCycle> pairings;  // one entry per identified half-cycle

  // (T+1) x T node-edge incidence matrix; column r encodes pairings[r].
  Eigen::MatrixXd incidence() const;
};

// Rainflow cycle counting. `soc` holds T+1 nodes; throws InvalidHorizonError for
// fewer than two nodes. Accepts arbitrary real values (bounds are a physical
// concern checked elsewhere).
Decomposition count_cycles(const Eigen::VectorXd& soc);

Eigen::MatrixXd incidence_matrix(const Eigen::VectorXd& soc);

struct RateToDepthOperator {
  // T x T matrices; every N_k satisfies N_k u = depths for the generating rates u.
  std::vector<Eigen::MatrixXd> matrices;
  int canonical_index = 0;
  // False when ties were resolved only partially (multiple tie sites, cap hit,
  // or an alternative pattern that could not be aligned to the canonical slots).
  bool enumeration_complete = true;

  const Eigen::MatrixXd& canonical() const { return matrices.at(canonical_index); }
  int count() const { return static_cast<int>(matrices.size()); }
};

// Piecewise-linear operator mapping rates to cycle depths. The induced SoC
// profile must stay inside [0,1] within kFlatTol, otherwise
// InfeasibleProfileError is thrown. At tied switching extrema the list holds
// the canonical matrix plus the patterns obtained from +/-eps virtual
// perturbation of each single tied node.
RateToDepthOperator rate_to_depth_operator(const Eigen::VectorXd& rates, double capacity_mwh,
                                           double initial_soc);

// depths = N(u) u = Rainflow(soc_from_rates(u)); same preconditions as above.
Eigen::VectorXd depths_from_rates(const Eigen::VectorXd& rates, double capacity_mwh,
                                  double initial_soc);

// Operator pattern for a rate *shape* (e.g. a demand or price vector). The
// induced profile is internally rescaled to span [0.05, 0.95], which leaves the
// pattern unchanged, so no bound check applies. Rows still carry the
// 1/capacity factor. A zero shape yields the all-zero canonical matrix.
RateToDepthOperator operator_for_shape(const Eigen::VectorXd& shape, double capacity_mwh);

// Operator built from an existing decomposition (no bound check, no tie
// enumeration). Used by dispatch loops that freeze the pattern of an iterate.
Eigen::MatrixXd matrix_from_pairings(const std::vector<HalfCycle>& pairings, int horizon,
                                     double capacity_mwh);

// Allocation-light sum of squared depths of a raw SoC profile; the cost kernel
// for grid-search oracles.
double sum_squared_depths(const double* soc, int n_nodes);

}  // namespace mktsim::rainflow
