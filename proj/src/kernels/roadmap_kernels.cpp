#include "fepagent/kernels/roadmap_kernels.hpp"

#include <algorithm>
#include <utility>

namespace fep::kernels {

namespace {

double squared_distance(const PoseVector& a, const PoseVector& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

std::vector<std::size_t> successors_of(std::size_t i, const std::vector<PoseVector>& nodes,
                                       const std::vector<std::vector<std::size_t>>& predecessors,
                                       const std::vector<std::vector<std::size_t>>& chain_successors,
                                       const roadmap::KinematicBound& bound, double rate_hz, std::size_t max_k) {
    std::vector<std::pair<double, std::size_t>> found;
    const auto& chain = chain_successors[i];
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (j == i || std::find(chain.begin(), chain.end(), j) != chain.end()) continue;
        bool ok = false;
        if (predecessors[i].empty()) {
            ok = roadmap::step_feasible(bound, rate_hz, nullptr, nodes[i], nodes[j]);
        } else {
            for (std::size_t p : predecessors[i]) {
                if (roadmap::step_feasible(bound, rate_hz, &nodes[p], nodes[i], nodes[j])) {
                    ok = true;
                    break;
                }
            }
        }
        if (ok) found.emplace_back(squared_distance(nodes[i], nodes[j]), j);
    }
    if (max_k > 0 && found.size() > max_k) {
        std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(max_k), found.end());
        found.resize(max_k);
    }
    std::vector<std::size_t> out;
    out.reserve(found.size());
    for (const auto& f : found) out.push_back(f.second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> feasible_successors(
    const std::vector<PoseVector>& nodes, const std::vector<std::vector<std::size_t>>& predecessors,
    const std::vector<std::vector<std::size_t>>& chain_successors, const roadmap::KinematicBound& bound,
    double rate_hz, std::size_t max_k, Exec exec) {
    std::vector<std::vector<std::size_t>> out(nodes.size());
    for_each_index(nodes.size(), exec, [&](std::size_t i) {
        out[i] = successors_of(i, nodes, predecessors, chain_successors, bound, rate_hz, max_k);
    });
    return out;
}

}  // namespace fep::kernels
