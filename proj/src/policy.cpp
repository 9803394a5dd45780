#include "fepagent/policy.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "fepagent/error.hpp"
#include "fepagent/random.hpp"

namespace fep::policy {

void FepConfig::validate() const {
    if (!(w_epistemic >= 0.0) || !(w_pragmatic >= 0.0)) {
        throw InvalidConfiguration("free-energy weights must be nonnegative");
    }
    if (w_epistemic == 0.0 && w_pragmatic == 0.0) {
        throw InvalidConfiguration("at least one free-energy weight must be positive");
    }
    if (horizon == 0) throw InvalidConfiguration("horizon must be positive");
    if (candidates == 0) throw InvalidConfiguration("candidate count must be positive");
    if (preferred != 0 && preferred != 1) throw InvalidConfiguration("preferred observation must be 0 or 1");
}

std::vector<iohmm::Distribution> predict_state_rollout(const iohmm::Params& params,
                                                       const iohmm::Distribution& belief,
                                                       const std::vector<iohmm::Action>& actions) {
    if (actions.empty()) throw InvalidArgument("rollout needs at least one action");
    std::vector<iohmm::Distribution> out;
    out.reserve(actions.size());
    iohmm::Distribution p = belief;
    for (const auto& a : actions) {
        p = iohmm::predict_step(params, p, a);
        out.push_back(p);
    }
    return out;
}

ScoredCandidate free_energy(const iohmm::Params& params, const iohmm::Distribution& belief,
                            const roadmap::ActionSequence& candidate, const FepConfig& cfg) {
    if (candidate.size() != cfg.horizon) {
        throw InvalidArgument("candidate has " + std::to_string(candidate.size()) + " steps, horizon is " +
                              std::to_string(cfg.horizon));
    }
    const auto preds = predict_state_rollout(params, belief, roadmap::sequence_to_actions(candidate));
    std::vector<double> surprisal(params.n_states);
    for (std::size_t i = 0; i < params.n_states; ++i) {
        surprisal[i] = -std::log(iohmm::emission_likelihood(params, i, cfg.preferred));
    }
    ScoredCandidate sc;
    sc.sequence = candidate;
    double h_sum = 0.0, p_sum = 0.0;
    for (const auto& p : preds) {
        const double h = iohmm::entropy(p);
        double g = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) g += p[i] * surprisal[i];
        sc.entropy.push_back(h);
        sc.pragmatic.push_back(g);
        h_sum += h;
        p_sum += g;
    }
    sc.free_energy = cfg.w_epistemic * h_sum + cfg.w_pragmatic * p_sum;
    return sc;
}

std::vector<ScoredCandidate> score_candidates(const iohmm::Params& params, const iohmm::Distribution& belief,
                                              const std::vector<roadmap::ActionSequence>& candidates,
                                              const FepConfig& cfg) {
    std::vector<ScoredCandidate> scored(candidates.size());
    for_each_index(candidates.size(), cfg.exec,
                   [&](std::size_t m) { scored[m] = free_energy(params, belief, candidates[m], cfg); });
    return scored;
}

std::size_t argmin_free_energy(const std::vector<ScoredCandidate>& scored) {
    if (scored.empty()) throw InvalidArgument("no candidates to select from");
    std::size_t best = 0;
    for (std::size_t m = 1; m < scored.size(); ++m) {
        if (scored[m].free_energy < scored[best].free_energy) best = m;
    }
    return best;
}

Selection select_action(const iohmm::Params& params, const iohmm::Distribution& belief, const roadmap::Roadmap& map,
                        std::size_t current_node, const FepConfig& cfg, std::uint64_t rng_seed,
                        std::optional<std::size_t> previous_node) {
    cfg.validate();
    if (map.dim() + 1 != params.action_dim) {
        throw InvalidConfiguration("roadmap pose dim " + std::to_string(map.dim()) +
                                   " does not match IO-HMM action dim " + std::to_string(params.action_dim));
    }
    auto candidates =
        roadmap::sample_sequences(map, current_node, cfg.horizon, cfg.candidates, rng_seed, previous_node, cfg.exec);
    for (auto& c : candidates) c.source = roadmap::Source::fep;
    Selection sel;
    sel.scored = score_candidates(params, belief, candidates, cfg);
    sel.index = argmin_free_energy(sel.scored);
    sel.chosen = sel.scored[sel.index].sequence;
    return sel;
}

namespace {

double fade(double u) { return u * u * u * (u * (u * 6.0 - 15.0) + 10.0); }

// Gradient in [-1, 1] for lattice point i, hashed from the seed.
double lattice_gradient(std::int64_t i, std::uint64_t seed) {
    const std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(i));
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

}  // namespace

double gradient_noise(double x, std::uint64_t rng_seed) {
    const double cell = std::floor(x);
    const auto i = static_cast<std::int64_t>(cell);
    const double u = x - cell;
    const double n0 = lattice_gradient(i, rng_seed) * u;
    const double n1 = lattice_gradient(i + 1, rng_seed) * (u - 1.0);
    // The blend of |n0| <= u and |n1| <= 1 - u never exceeds 1/2, so doubling keeps [-1, 1].
    return 2.0 * (n0 + fade(u) * (n1 - n0));
}

PoseVector perlin_motion(const PoseVector& idle_pose, double amplitude, double frequency_hz, double t,
                         std::uint64_t rng_seed) {
    if (!(amplitude >= 0.0)) throw InvalidArgument("perlin amplitude must be nonnegative");
    PoseVector out = idle_pose;
    const double x = t * frequency_hz;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] += amplitude * gradient_noise(x, mix_seed(rng_seed, 1000 + k));
    }
    return out;
}

roadmap::ActionSequence random_prm_motion(const roadmap::Roadmap& map, std::size_t current_node, std::size_t horizon,
                                          std::uint64_t rng_seed, std::optional<std::size_t> previous_node) {
    auto walks = roadmap::sample_sequences(map, current_node, horizon, 1, rng_seed, previous_node, Exec::serial);
    walks.front().source = roadmap::Source::random_prm;
    return walks.front();
}

}  // namespace fep::policy
