#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fepagent/exec.hpp"

// Input-output hidden Markov model with binary emissions. The initial and
// transition distributions are multinomial-logistic in the action features
// a(t); the emission P(o = 1 | s_i) is logistic in a per-state scalar.
namespace fep::iohmm {

using Action = std::vector<double>;
using Distribution = std::vector<double>;

struct Params {
    std::size_t n_states = 0;
    std::size_t action_dim = 0;
    std::vector<double> theta_in;  // n_states x action_dim
    std::vector<double> theta_tr;  // n_states (from) x n_states (to) x action_dim
    std::vector<double> theta_em;  // n_states

    Params() = default;
    Params(std::size_t states, std::size_t dim);

    double& in(std::size_t i, std::size_t k) { return theta_in[i * action_dim + k]; }
    double in(std::size_t i, std::size_t k) const { return theta_in[i * action_dim + k]; }
    double& tr(std::size_t i, std::size_t j, std::size_t k) { return theta_tr[(i * n_states + j) * action_dim + k]; }
    double tr(std::size_t i, std::size_t j, std::size_t k) const {
        return theta_tr[(i * n_states + j) * action_dim + k];
    }
    // Throws InvalidArgument on inconsistent sizes or non-finite entries.
    void validate() const;
};

Distribution initial_prob(const Params& p, const Action& a1);
Distribution transition_prob(const Params& p, std::size_t from_state, const Action& a);
double emission_prob(const Params& p, std::size_t state);  // P(o = 1 | state)
double emission_likelihood(const Params& p, std::size_t state, int o);

// log L(theta, O, A) by the scaled forward recursion. Emissions are counted
// from t = 1.
double likelihood(const Params& p, const std::vector<int>& observations, const std::vector<Action>& actions);

struct Belief {
    Distribution probabilities;
    double log_evidence = 0.0;
};

// Initial-state prior for the first action, before any observation.
Belief prior_belief(const Params& p, const Action& a1);
// Initial-state prior corrected by the first observation.
Belief initial_belief(const Params& p, const Action& a1, int o1);
// One transition through a(t) without observation correction.
Distribution predict_step(const Params& p, const Distribution& belief, const Action& a);
// Predict through a(t), correct on o(t), renormalise; log_evidence gains log of the normaliser.
Belief forward_update(const Params& p, const Belief& belief, const Action& a, int o);

struct Posteriors {
    std::vector<Distribution> gamma;        // T x S
    std::vector<std::vector<double>> xi;    // T - 1 entries; xi[t - 1] holds P(s(t-1)=i, s(t)=j | O, A), S x S
    double log_likelihood = 0.0;
};

Posteriors forward_backward(const Params& p, const std::vector<int>& observations,
                            const std::vector<Action>& actions);

// Expected complete-data log-likelihood restricted to the initial and
// transition terms, and its gradient. Objective for the generalised M-step.
double mstep_objective(const Params& p, const Posteriors& post, const std::vector<Action>& actions);
struct MStepGradient {
    std::vector<double> theta_in;
    std::vector<double> theta_tr;
};
MStepGradient mstep_gradient(const Params& p, const Posteriors& post, const std::vector<Action>& actions,
                             Exec exec = Exec::parallel);

struct EmConfig {
    std::size_t max_iter = 100;
    double tol = 1e-4;            // stop when |delta log L| < tol
    std::size_t inner_steps = 20;
    double learning_rate = 0.1;
    std::size_t restarts = 3;
    double emission_clamp = 10.0;
    double init_scale = 0.1;
    double starvation = 1e-6;     // a state with sum(gamma) < starvation * T keeps its emission
    Exec exec = Exec::parallel;
};

struct TrainingTrace {
    std::vector<double> log_likelihood;  // one entry per parameter iterate, first is the initial model
    bool converged = false;
    std::size_t iterations = 0;          // M-steps performed
    std::vector<bool> starved;
    std::size_t restart = 0;             // which restart produced the result
};

struct FitResult {
    Params params;
    TrainingTrace trace;
};

// Generalised EM. The emission update is closed form; the initial and
// transition blocks take inner_steps gradient steps each, halving a step
// until the block objective does not decrease. Best of cfg.restarts runs.
FitResult em_fit(const std::vector<int>& observations, const std::vector<Action>& actions, std::size_t n_states,
                 const EmConfig& cfg, std::uint64_t rng_seed);

// A single restart from the initialisation drawn with `rng_seed`.
FitResult em_fit_once(const std::vector<int>& observations, const std::vector<Action>& actions,
                      std::size_t n_states, const EmConfig& cfg, std::uint64_t rng_seed);

double entropy(const Distribution& p);

}  // namespace fep::iohmm
