#pragma once

#include <cstddef>
#include <vector>

#include "fepagent/exec.hpp"
#include "fepagent/roadmap.hpp"

namespace fep::kernels {

// For every node i, the nodes j (j != i, j not already a chain successor)
// reachable in one step: step_feasible from i to j for at least one chain
// predecessor of i, or on speed alone when i has none. When max_k > 0 only
// the max_k nearest (Euclidean, lowest index on ties) are kept. The result
// for each node is sorted by index.
std::vector<std::vector<std::size_t>> feasible_successors(
    const std::vector<PoseVector>& nodes, const std::vector<std::vector<std::size_t>>& predecessors,
    const std::vector<std::vector<std::size_t>>& chain_successors, const roadmap::KinematicBound& bound,
    double rate_hz, std::size_t max_k, Exec exec);

}  // namespace fep::kernels
