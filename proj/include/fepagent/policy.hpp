#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "fepagent/exec.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/types.hpp"

// Free-energy action selection and the two baseline motion generators.
namespace fep::policy {

struct FepConfig {
    double w_epistemic = 1.0;
    double w_pragmatic = 1.0;
    std::size_t horizon = roadmap::kDefaultHorizon;
    std::size_t candidates = roadmap::kDefaultCandidates;
    int preferred = 1;
    Exec exec = Exec::parallel;

    // Throws InvalidConfiguration.
    void validate() const;
};

struct ScoredCandidate {
    roadmap::ActionSequence sequence;
    double free_energy = 0.0;
    std::vector<double> entropy;    // per step
    std::vector<double> pragmatic;  // per step
};

// Propagates the belief through transitions only; one distribution per action.
std::vector<iohmm::Distribution> predict_state_rollout(const iohmm::Params& params,
                                                       const iohmm::Distribution& belief,
                                                       const std::vector<iohmm::Action>& actions);

// F = w_e * sum_j H(p_j) + w_p * sum_j -sum_i p_j(i) ln P(o = preferred | s_i).
ScoredCandidate free_energy(const iohmm::Params& params, const iohmm::Distribution& belief,
                            const roadmap::ActionSequence& candidate, const FepConfig& cfg);

// Scores every candidate, serially or with OpenMP. Output is in input order.
std::vector<ScoredCandidate> score_candidates(const iohmm::Params& params, const iohmm::Distribution& belief,
                                              const std::vector<roadmap::ActionSequence>& candidates,
                                              const FepConfig& cfg);

// Index of the smallest free energy; the lowest index wins ties.
std::size_t argmin_free_energy(const std::vector<ScoredCandidate>& scored);

struct Selection {
    roadmap::ActionSequence chosen;
    std::size_t index = 0;
    std::vector<ScoredCandidate> scored;
};

Selection select_action(const iohmm::Params& params, const iohmm::Distribution& belief, const roadmap::Roadmap& map,
                        std::size_t current_node, const FepConfig& cfg, std::uint64_t rng_seed,
                        std::optional<std::size_t> previous_node = std::nullopt);

// Idle pose plus amplitude-scaled 1-D gradient noise per coordinate. Output
// deviates from the idle pose by at most `amplitude` per coordinate.
PoseVector perlin_motion(const PoseVector& idle_pose, double amplitude, double frequency_hz, double t,
                         std::uint64_t rng_seed);

// Raw gradient noise in [-1, 1], zero at integer x.
double gradient_noise(double x, std::uint64_t rng_seed);

// One unscored random walk; identical to select_action's candidate 0 for the same seed.
roadmap::ActionSequence random_prm_motion(const roadmap::Roadmap& map, std::size_t current_node, std::size_t horizon,
                                          std::uint64_t rng_seed,
                                          std::optional<std::size_t> previous_node = std::nullopt);

}  // namespace fep::policy
