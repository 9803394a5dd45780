#pragma once

// Reference computations written independently of the library code they
// check. Brute force where possible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fepagent/iohmm.hpp"
#include "fepagent/roadmap.hpp"

namespace oracle {

inline std::vector<double> softmax_of(const std::vector<double>& logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (auto& v : p) v /= z;
    return p;
}

inline double dot(const double* w, const std::vector<double>& a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += w[k] * a[k];
    return s;
}

inline std::vector<double> initial(const fep::iohmm::Params& p, const std::vector<double>& a) {
    std::vector<double> l(p.n_states);
    for (std::size_t i = 0; i < p.n_states; ++i) l[i] = dot(&p.theta_in[i * p.action_dim], a);
    return softmax_of(l);
}

inline std::vector<double> transition(const fep::iohmm::Params& p, std::size_t from, const std::vector<double>& a) {
    std::vector<double> l(p.n_states);
    for (std::size_t j = 0; j < p.n_states; ++j) l[j] = dot(&p.theta_tr[(from * p.n_states + j) * p.action_dim], a);
    return softmax_of(l);
}

inline double emit(const fep::iohmm::Params& p, std::size_t s, int o) {
    double q = 1.0 / (1.0 + std::exp(-p.theta_em[s]));
    return o ? q : 1.0 - q;
}

// log of the sum over all S^T state paths.
inline double enumerate_log_likelihood(const fep::iohmm::Params& p, const std::vector<int>& obs,
                                       const std::vector<std::vector<double>>& act) {
    const std::size_t S = p.n_states, T = obs.size();
    std::vector<std::size_t> path(T, 0);
    double total = 0.0;
    while (true) {
        double pr = initial(p, act[0])[path[0]] * emit(p, path[0], obs[0]);
        for (std::size_t t = 1; t < T; ++t) pr *= transition(p, path[t - 1], act[t])[path[t]] * emit(p, path[t], obs[t]);
        total += pr;
        std::size_t k = 0;
        while (k < T && ++path[k] == S) path[k++] = 0;
        if (k == T) break;
    }
    return std::log(total);
}

inline fep::iohmm::Params random_params(std::size_t S, std::size_t D, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, scale);
    fep::iohmm::Params p(S, D);
    for (auto& v : p.theta_in) v = n(g);
    for (auto& v : p.theta_tr) v = n(g);
    for (auto& v : p.theta_em) v = n(g);
    return p;
}

// Action rows of dimension D: D - 1 standard normal features plus a bias 1.
inline std::vector<std::vector<double>> random_actions(std::size_t T, std::size_t D, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> a(T, std::vector<double>(D, 1.0));
    for (auto& row : a)
        for (std::size_t k = 0; k + 1 < D; ++k) row[k] = n(g);
    return a;
}

inline std::size_t draw(const std::vector<double>& p, std::mt19937_64& g) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(g), c = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (u < (c += p[i])) return i;
    return p.size() - 1;
}

// Ancestral sampling of observations from the model given the actions.
inline std::vector<int> sample_observations(const fep::iohmm::Params& p, const std::vector<std::vector<double>>& act,
                                            std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::vector<int> obs(act.size());
    std::size_t s = draw(initial(p, act[0]), g);
    for (std::size_t t = 0; t < act.size(); ++t) {
        if (t > 0) s = draw(transition(p, s, act[t]), g);
        obs[t] = std::uniform_real_distribution<double>(0.0, 1.0)(g) < emit(p, s, 1) ? 1 : 0;
    }
    return obs;
}

// U_x by pair counting: x beats y scores 1, a tie scores 1/2.
inline double u_statistic(const std::vector<double>& x, const std::vector<double>& y) {
    double u = 0.0;
    for (double a : x)
        for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return u;
}

struct Permutation {
    double p_two_sided, p_greater, p_less;
};

// Every split of the pooled sample into groups of the original sizes.
inline Permutation permutation_test(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> pool(x);
    pool.insert(pool.end(), y.begin(), y.end());
    const std::size_t n = pool.size(), nx = x.size();
    const double mu = 0.5 * static_cast<double>(x.size() * y.size());
    const double u_obs = u_statistic(x, y);
    std::size_t total = 0, two = 0, ge = 0, le = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != nx) continue;
        std::vector<double> a, b;
        for (std::size_t i = 0; i < n; ++i) (mask >> i & 1u ? a : b).push_back(pool[i]);
        const double u = u_statistic(a, b);
        ++total;
        if (std::abs(u - mu) >= std::abs(u_obs - mu)) ++two;
        if (u >= u_obs) ++ge;
        if (u <= u_obs) ++le;
    }
    const double t = static_cast<double>(total);
    return {two / t, ge / t, le / t};
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Correlation of x(t) with y(t + lag).
inline double lagged_correlation(const std::vector<double>& x, const std::vector<double>& y, std::size_t lag) {
    std::vector<double> a(x.begin(), x.end() - static_cast<std::ptrdiff_t>(lag));
    std::vector<double> b(y.begin() + static_cast<std::ptrdiff_t>(lag), y.end());
    return pearson(a, b);
}

// The kinematic gate re-derived from its definition, with relative slack:
// |v| <= max_speed and |dv/dt| <= intercept + slope * |v| per coordinate.
inline bool within_bound(const fep::roadmap::KinematicBound& b, double rate, const fep::PoseVector* prev,
                         const fep::PoseVector& cur, const fep::PoseVector& next, double slack) {
    for (std::size_t j = 0; j < cur.size(); ++j) {
        const double v = (next[j] - cur[j]) * rate;
        if (std::abs(v) > b.max_speed[j] * (1.0 + slack) + 1e-9) return false;
        if (prev) {
            const double w = (v - (cur[j] - (*prev)[j]) * rate) * rate;
            if (std::abs(w) > (b.intercept + b.slope * std::abs(v)) * (1.0 + slack) + 1e-9) return false;
        }
    }
    return true;
}

}  // namespace oracle
