#include "fepagent/iohmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fepagent/error.hpp"
#include "fepagent/kernels/iohmm_kernels.hpp"
#include "fepagent/random.hpp"

namespace fep::iohmm {

Params::Params(std::size_t states, std::size_t dim)
    : n_states(states),
      action_dim(dim),
      theta_in(states * dim, 0.0),
      theta_tr(states * states * dim, 0.0),
      theta_em(states, 0.0) {}

void Params::validate() const {
    if (n_states == 0 || action_dim == 0) throw InvalidArgument("IO-HMM needs at least one state and one feature");
    if (theta_in.size() != n_states * action_dim || theta_tr.size() != n_states * n_states * action_dim ||
        theta_em.size() != n_states) {
        throw InvalidArgument("IO-HMM parameter arrays have inconsistent sizes");
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(theta_in) || !finite(theta_tr) || !finite(theta_em)) {
        throw InvalidArgument("IO-HMM parameters must be finite");
    }
}

namespace {

void check_action(const Params& p, const Action& a) {
    if (a.size() != p.action_dim) {
        throw InvalidArgument("action has " + std::to_string(a.size()) + " features, model expects " +
                              std::to_string(p.action_dim));
    }
}

Distribution softmax_rows(const double* theta, std::size_t rows, std::size_t dim, const Action& a) {
    Distribution z(rows);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rows; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += theta[j * dim + k] * a[k];
        z[j] = s;
        hi = std::max(hi, s);
    }
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - hi);
        total += v;
    }
    for (double& v : z) v /= total;
    return z;
}

// Row-major S x S transition matrix for action a.
std::vector<double> transition_matrix(const Params& p, const Action& a) {
    const std::size_t s = p.n_states;
    std::vector<double> m(s * s);
    for (std::size_t i = 0; i < s; ++i) {
        const auto row = transition_prob(p, i, a);
        std::copy(row.begin(), row.end(), m.begin() + static_cast<std::ptrdiff_t>(i * s));
    }
    return m;
}

void check_sequences(const Params& p, const std::vector<int>& obs, const std::vector<Action>& actions) {
    if (obs.size() != actions.size()) {
        throw InvalidArgument("observation and action sequences differ in length");
    }
    if (obs.empty()) throw InvalidArgument("sequences must be non-empty");
    for (int o : obs) {
        if (o != 0 && o != 1) throw InvalidArgument("observations must be binary");
    }
    for (const auto& a : actions) check_action(p, a);
}

}  // namespace

Distribution initial_prob(const Params& p, const Action& a1) {
    check_action(p, a1);
    return softmax_rows(p.theta_in.data(), p.n_states, p.action_dim, a1);
}

Distribution transition_prob(const Params& p, std::size_t from_state, const Action& a) {
    if (from_state >= p.n_states) throw InvalidArgument("state index out of range");
    check_action(p, a);
    return softmax_rows(p.theta_tr.data() + from_state * p.n_states * p.action_dim, p.n_states, p.action_dim, a);
}

double emission_prob(const Params& p, std::size_t state) {
    if (state >= p.n_states) throw InvalidArgument("state index out of range");
    const double x = p.theta_em[state];
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double emission_likelihood(const Params& p, std::size_t state, int o) {
    const double e = emission_prob(p, state);
    return o == 1 ? e : 1.0 - e;
}

Belief prior_belief(const Params& p, const Action& a1) { return {initial_prob(p, a1), 0.0}; }

namespace {

Belief correct(const Params& p, Distribution predicted, int o, double log_evidence) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.n_states; ++i) {
        predicted[i] *= emission_likelihood(p, i, o);
        total += predicted[i];
    }
    if (!(total > 0.0)) throw DegenerateEvidence("observation has zero probability under the current belief");
    for (double& v : predicted) v /= total;
    return {std::move(predicted), log_evidence + std::log(total)};
}

}  // namespace

Belief initial_belief(const Params& p, const Action& a1, int o1) { return correct(p, initial_prob(p, a1), o1, 0.0); }

Distribution predict_step(const Params& p, const Distribution& belief, const Action& a) {
    if (belief.size() != p.n_states) throw InvalidArgument("belief size does not match the model");
    check_action(p, a);
    Distribution next(p.n_states, 0.0);
    for (std::size_t i = 0; i < p.n_states; ++i) {
        if (belief[i] == 0.0) continue;
        const auto row = transition_prob(p, i, a);
        for (std::size_t j = 0; j < p.n_states; ++j) next[j] += belief[i] * row[j];
    }
    return next;
}

Belief forward_update(const Params& p, const Belief& belief, const Action& a, int o) {
    return correct(p, predict_step(p, belief.probabilities, a), o, belief.log_evidence);
}

double likelihood(const Params& p, const std::vector<int>& observations, const std::vector<Action>& actions) {
    check_sequences(p, observations, actions);
    Belief b = initial_belief(p, actions[0], observations[0]);
    for (std::size_t t = 1; t < observations.size(); ++t) b = forward_update(p, b, actions[t], observations[t]);
    return b.log_evidence;
}

Posteriors forward_backward(const Params& p, const std::vector<int>& observations,
                            const std::vector<Action>& actions) {
    check_sequences(p, observations, actions);
    const std::size_t n = observations.size();
    const std::size_t s = p.n_states;

    std::vector<std::vector<double>> trans(n);
    for (std::size_t t = 1; t < n; ++t) trans[t] = transition_matrix(p, actions[t]);
    std::vector<std::vector<double>> emit(n, std::vector<double>(s));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < s; ++i) emit[t][i] = emission_likelihood(p, i, observations[t]);
    }

    std::vector<Distribution> alpha(n, Distribution(s));
    std::vector<double> scale(n);
    Posteriors post;
    {
        const auto pi = initial_prob(p, actions[0]);
        double c = 0.0;
        for (std::size_t i = 0; i < s; ++i) c += alpha[0][i] = pi[i] * emit[0][i];
        if (!(c > 0.0)) throw DegenerateEvidence("first observation impossible under the model");
        for (double& v : alpha[0]) v /= c;
        scale[0] = c;
    }
    for (std::size_t t = 1; t < n; ++t) {
        double c = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < s; ++i) acc += alpha[t - 1][i] * trans[t][i * s + j];
            alpha[t][j] = acc * emit[t][j];
            c += alpha[t][j];
        }
        if (!(c > 0.0)) throw DegenerateEvidence("observation sequence impossible under the model");
        for (double& v : alpha[t]) v /= c;
        scale[t] = c;
    }
    for (double c : scale) post.log_likelihood += std::log(c);

    std::vector<Distribution> beta(n, Distribution(s, 1.0));
    for (std::size_t t = n - 1; t-- > 0;) {
        for (std::size_t i = 0; i < s; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s; ++j) acc += trans[t + 1][i * s + j] * emit[t + 1][j] * beta[t + 1][j];
            beta[t][i] = acc / scale[t + 1];
        }
    }

    post.gamma.assign(n, Distribution(s));
    for (std::size_t t = 0; t < n; ++t) {
        double total = 0.0;
        for (std::size_t i = 0; i < s; ++i) total += post.gamma[t][i] = alpha[t][i] * beta[t][i];
        for (double& v : post.gamma[t]) v /= total;
    }
    post.xi.assign(n > 0 ? n - 1 : 0, std::vector<double>(s * s));
    for (std::size_t t = 1; t < n; ++t) {
        auto& x = post.xi[t - 1];
        double total = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < s; ++j) {
                total += x[i * s + j] = alpha[t - 1][i] * trans[t][i * s + j] * emit[t][j] * beta[t][j] / scale[t];
            }
        }
        for (double& v : x) v /= total;
    }
    return post;
}

namespace {

// Block 0: initial model. Block 1 + i: transitions out of state i.
std::vector<kernels::SoftmaxBlock> mstep_blocks(const Params& p, const Posteriors& post,
                                                const std::vector<Action>& actions) {
    const std::size_t s = p.n_states;
    std::vector<kernels::SoftmaxBlock> blocks(s + 1);
    blocks[0].actions = &actions;
    blocks[0].rows = {0};
    blocks[0].weights = {post.gamma[0]};
    for (std::size_t i = 0; i < s; ++i) {
        auto& b = blocks[1 + i];
        b.actions = &actions;
        b.rows.reserve(post.xi.size());
        b.weights.reserve(post.xi.size());
        for (std::size_t t = 1; t < actions.size(); ++t) {
            const auto& x = post.xi[t - 1];
            b.rows.push_back(t);
            b.weights.emplace_back(x.begin() + static_cast<std::ptrdiff_t>(i * s),
                                   x.begin() + static_cast<std::ptrdiff_t>((i + 1) * s));
        }
    }
    return blocks;
}

std::vector<double> block_theta(const Params& p, std::size_t b) {
    const std::size_t width = p.n_states * p.action_dim;
    if (b == 0) return p.theta_in;
    return {p.theta_tr.begin() + static_cast<std::ptrdiff_t>((b - 1) * width),
            p.theta_tr.begin() + static_cast<std::ptrdiff_t>(b * width)};
}

}  // namespace

double mstep_objective(const Params& p, const Posteriors& post, const std::vector<Action>& actions) {
    const auto blocks = mstep_blocks(p, post, actions);
    double q = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        q += kernels::softmax_block_objective(block_theta(p, b), blocks[b], p.n_states, p.action_dim);
    }
    return q;
}

MStepGradient mstep_gradient(const Params& p, const Posteriors& post, const std::vector<Action>& actions,
                             Exec exec) {
    const auto blocks = mstep_blocks(p, post, actions);
    std::vector<std::vector<double>> grads(blocks.size());
    for_each_index(blocks.size(), exec, [&](std::size_t b) {
        grads[b] = kernels::softmax_block_gradient(block_theta(p, b), blocks[b], p.n_states, p.action_dim);
    });
    MStepGradient g;
    g.theta_in = grads[0];
    for (std::size_t b = 1; b < grads.size(); ++b) g.theta_tr.insert(g.theta_tr.end(), grads[b].begin(), grads[b].end());
    return g;
}

namespace {

void m_step(Params& p, const Posteriors& post, const std::vector<int>& obs, const std::vector<Action>& actions,
            const EmConfig& cfg, std::vector<bool>& starved) {
    const std::size_t s = p.n_states;
    const double n = static_cast<double>(obs.size());
    for (std::size_t i = 0; i < s; ++i) {
        double mass = 0.0, hits = 0.0;
        for (std::size_t t = 0; t < obs.size(); ++t) {
            mass += post.gamma[t][i];
            hits += post.gamma[t][i] * obs[t];
        }
        starved[i] = mass < cfg.starvation * n;
        if (starved[i]) continue;
        const double r = std::clamp(hits / mass, 0.0, 1.0);
        const double logit = std::log(r) - std::log1p(-r);
        p.theta_em[i] = std::clamp(logit, -cfg.emission_clamp, cfg.emission_clamp);
    }
    if (s == 1) return;  // a single-state softmax is constant

    const auto blocks = mstep_blocks(p, post, actions);
    std::vector<std::vector<double>> thetas(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) thetas[b] = block_theta(p, b);
    const auto updated =
        kernels::ascend_blocks(thetas, blocks, s, p.action_dim, cfg.inner_steps, cfg.learning_rate, cfg.exec);
    p.theta_in = updated[0];
    const std::size_t width = s * p.action_dim;
    for (std::size_t b = 1; b < updated.size(); ++b) {
        std::copy(updated[b].begin(), updated[b].end(), p.theta_tr.begin() + static_cast<std::ptrdiff_t>((b - 1) * width));
    }
}

}  // namespace

FitResult em_fit_once(const std::vector<int>& observations, const std::vector<Action>& actions,
                      std::size_t n_states, const EmConfig& cfg, std::uint64_t rng_seed) {
    if (n_states == 0) throw InvalidArgument("n_states must be positive");
    if (actions.empty()) throw InvalidArgument("empty training sequence");
    Params p(n_states, actions.front().size());
    check_sequences(p, observations, actions);

    Rng rng = make_rng(rng_seed, 21);
    std::normal_distribution<double> init(0.0, cfg.init_scale);
    for (double& v : p.theta_in) v = init(rng);
    for (double& v : p.theta_tr) v = init(rng);
    for (double& v : p.theta_em) v = init(rng);

    FitResult fit;
    fit.trace.starved.assign(n_states, false);
    const std::size_t max_iter = n_states == 1 ? 1 : cfg.max_iter;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const auto post = forward_backward(p, observations, actions);
        fit.trace.log_likelihood.push_back(post.log_likelihood);
        const auto& ll = fit.trace.log_likelihood;
        if (ll.size() >= 2 && std::abs(ll[ll.size() - 1] - ll[ll.size() - 2]) < cfg.tol) {
            fit.trace.converged = true;
            break;
        }
        m_step(p, post, observations, actions, cfg, fit.trace.starved);
        ++fit.trace.iterations;
    }
    if (!fit.trace.converged) {
        fit.trace.log_likelihood.push_back(likelihood(p, observations, actions));
        fit.trace.converged = n_states == 1;
    }
    fit.params = std::move(p);
    return fit;
}

FitResult em_fit(const std::vector<int>& observations, const std::vector<Action>& actions, std::size_t n_states,
                 const EmConfig& cfg, std::uint64_t rng_seed) {
    const std::size_t restarts = std::max<std::size_t>(1, cfg.restarts);
    FitResult best;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts; ++r) {
        auto fit = em_fit_once(observations, actions, n_states, cfg, mix_seed(rng_seed, r));
        const double ll = fit.trace.log_likelihood.back();
        if (ll > best_ll) {
            best_ll = ll;
            best = std::move(fit);
            best.trace.restart = r;
        }
    }
    return best;
}

double entropy(const Distribution& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

}  // namespace fep::iohmm
