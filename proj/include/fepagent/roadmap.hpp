#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fepagent/exec.hpp"
#include "fepagent/types.hpp"

// Probabilistic roadmap of agent postures. Nodes are (possibly fused)
// frames of the training motion, chain edges follow recorded time order and
// extra edges connect postures the kinematic bound says are reachable in one
// step. Candidate motions are random walks on this graph.
namespace fep::roadmap {

// Linear envelope |W| <= intercept + slope * |V| on per-joint angular
// acceleration W given angular speed V, plus a per-joint speed ceiling.
struct KinematicBound {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> max_speed;
    std::size_t samples = 0;

    double accel_limit(double speed) const { return intercept + slope * speed; }
};

// V and W are first and second differences scaled by the frame rate. The
// line is a least-squares fit of |W| on |V| over every (joint, frame) pair,
// slope floored at 0, intercept lifted until no observed pair lies above
// it. max_speed is the largest observed |V| per joint.
KinematicBound fit_kinematic_bound(const std::vector<PoseSequence>& sequences);

// True when the step cur -> next stays under the speed ceiling and, given the
// incoming pose prev, under the acceleration envelope; both scaled by (1 + slack).
bool step_feasible(const KinematicBound& bound, double rate_hz, const PoseVector* prev,
                   const PoseVector& cur, const PoseVector& next, double slack = 0.0);

struct Edge {
    std::size_t to = 0;
    double prob = 0.0;
    bool observed = false;  // chain edge (recorded transition) vs feasibility edge
};

struct Roadmap {
    std::vector<PoseVector> nodes;
    std::vector<std::vector<Edge>> out;
    std::vector<std::size_t> provenance;  // frames fused into each node
    std::vector<std::size_t> start_nodes;
    std::vector<bool> idle;               // only edge is a self-loop
    std::vector<std::vector<std::size_t>> trace;  // node index of every input frame, per sequence
    double frame_rate_hz = 8.0;
    KinematicBound bound;

    std::size_t size() const { return nodes.size(); }
    std::size_t dim() const { return nodes.empty() ? 0 : nodes.front().size(); }
    bool terminal(std::size_t i) const { return out[i].empty(); }
    std::size_t edge_count() const;
};

struct BuildConfig {
    double fuse_eps = 0.05;
    double lambda = 0.1;  // weight of each feasibility edge, relative to one observed transition
    // Keep only the nearest k feasibility edges per node (0 keeps all).
    std::size_t max_feasibility_edges = 0;
    Exec exec = Exec::parallel;
};

enum class FuseStrategy { grid, brute_force };

// Greedy scan in frame order: a frame joins the nearest existing node closer
// than eps (lowest index on ties), otherwise it opens a new node. Returns the
// node index of every frame and the node poses (first frame of each node).
struct Fusing {
    std::vector<std::size_t> assignment;
    std::vector<PoseVector> nodes;
};
Fusing fuse_frames(const std::vector<PoseVector>& frames, double eps, FuseStrategy strategy);

Roadmap build_roadmap(const std::vector<PoseSequence>& sequences, const KinematicBound& bound,
                      const BuildConfig& cfg = {});

enum class Source { fep, random_prm, perlin, replay };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct ActionSequence {
    std::vector<std::size_t> nodes;  // empty for perlin motion
    std::vector<PoseVector> poses;
    Source source = Source::random_prm;

    std::size_t size() const { return poses.size(); }
};

inline constexpr std::size_t kDefaultHorizon = 8;
inline constexpr std::size_t kDefaultCandidates = 32;
inline constexpr std::size_t kMaxWalkAttempts = 64;

// M random walks of K steps from start_node following edge probabilities,
// restricted at every step to successors that pass step_feasible given the
// pose walked in from (`previous` supplies it for the first step). A walk
// that gets stuck is redrawn; walk m uses its own stream derived from the seed,
// so walk m is the same for every M.
std::vector<ActionSequence> sample_sequences(const Roadmap& map, std::size_t start_node, std::size_t horizon,
                                             std::size_t count, std::uint64_t rng_seed,
                                             std::optional<std::size_t> previous = std::nullopt,
                                             Exec exec = Exec::parallel);

// a(t) = (pose, 1).
std::vector<double> action_features(const PoseVector& pose);
std::vector<std::vector<double>> sequence_to_actions(const ActionSequence& seq);

// Posture with the largest provenance count; used as the idle pose.
std::size_t most_visited_node(const Roadmap& map);

}  // namespace fep::roadmap
