#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fepagent/error.hpp"
#include "fepagent/iohmm.hpp"
#include "oracles.hpp"

using namespace fep;
using namespace fep::iohmm;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<int> random_observations(std::size_t T, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::vector<int> o(T);
    for (auto& v : o) v = static_cast<int>(g() & 1u);
    return o;
}

}  // namespace

TEST_CASE("initial_prob") {
    Params p(3, 2);
    SUBCASE("zero parameters give a uniform prior") {
        for (double v : initial_prob(p, {0.4, 1.0})) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("two states with logits 1 and 0") {
        Params q(2, 1);
        q.in(0, 0) = 1.0;
        auto d = initial_prob(q, {1.0});
        CHECK(d[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
        CHECK(d[0] == doctest::Approx(0.7311).epsilon(1e-4));
        CHECK(d[1] == doctest::Approx(0.2689).epsilon(1e-4));
    }
    SUBCASE("shift invariance") {
        auto q = oracle::random_params(3, 2, 4);
        auto before = initial_prob(q, {0.3, 1.0});
        for (std::size_t i = 0; i < 3; ++i) q.in(i, 1) += 7.5;  // bias feature is 1
        auto after = initial_prob(q, {0.3, 1.0});
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(before[i] - after[i]) <= 1e-12);
    }
    SUBCASE("no overflow at huge logits") {
        Params q(2, 1);
        q.in(0, 0) = 1e4;
        auto d = initial_prob(q, {1.0});
        CHECK(d[0] == 1.0);
        CHECK(d[1] == 0.0);
    }
}

TEST_CASE("transition_prob") {
    SUBCASE("uniform row at zero parameters") {
        Params p(4, 3);
        for (double v : transition_prob(p, 2, {1.0, 2.0, 1.0})) CHECK(v == 0.25);
    }
    SUBCASE("logits ln 2 and 0") {
        Params p(2, 1);
        p.tr(1, 0, 0) = std::log(2.0);
        auto d = transition_prob(p, 1, {1.0});
        CHECK(d[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
        CHECK(d[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    SUBCASE("rows are distributions") {
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 10000; ++trial) {
            auto p = oracle::random_params(3, 4, trial, 3.0);
            auto a = oracle::random_actions(1, 4, trial + 1)[0];
            for (std::size_t i = 0; i < 3; ++i) {
                auto d = transition_prob(p, i, a);
                for (double v : d) CHECK(v >= 0.0);
                worst = std::max(worst, std::abs(sum(d) - 1.0));
            }
            worst = std::max(worst, std::abs(sum(initial_prob(p, a)) - 1.0));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("emission_prob") {
    Params p(3, 1);
    p.theta_em = {0.0, 2.0, -2.0};
    CHECK(emission_prob(p, 0) == 0.5);
    CHECK(emission_prob(p, 1) == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(emission_prob(p, 2) == doctest::Approx(0.1192).epsilon(1e-4));
    CHECK(emission_prob(p, 1) + emission_prob(p, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(emission_likelihood(p, 1, 0) == doctest::Approx(1.0 - emission_prob(p, 1)));
}

TEST_CASE("likelihood") {
    SUBCASE("single state collapses to a coin") {
        Params p(1, 2);
        CHECK(likelihood(p, {1, 0, 1}, oracle::random_actions(3, 2, 1)) ==
              doctest::Approx(-3.0 * std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("emission-irrelevant model ignores the actions") {
        auto p = oracle::random_params(3, 3, 2);
        p.theta_em = {0.0, 0.0, 0.0};
        for (std::uint64_t s = 0; s < 5; ++s)
            CHECK(likelihood(p, random_observations(7, s), oracle::random_actions(7, 3, s)) ==
                  doctest::Approx(7.0 * std::log(0.5)).epsilon(1e-13));
    }
    SUBCASE("matches exhaustive path enumeration") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto p = oracle::random_params(3, 3, seed, 1.5);
            auto obs = random_observations(5, seed + 100);
            auto act = oracle::random_actions(5, 3, seed + 200);
            const double want = oracle::enumerate_log_likelihood(p, obs, act);
            CHECK(std::abs(likelihood(p, obs, act) - want) <= 1e-8 * std::abs(want));
        }
    }
    SUBCASE("length mismatch rejected") {
        Params p(2, 1);
        CHECK_THROWS_AS(likelihood(p, {1, 0}, {{1.0}}), InvalidArgument);
    }
}

TEST_CASE("belief updates") {
    SUBCASE("uniform model keeps a uniform belief") {
        Params p(3, 2);
        auto b = initial_belief(p, {0.1, 1.0}, 1);
        for (int t = 0; t < 50; ++t) b = forward_update(p, b, {0.5 * t, 1.0}, t % 2);
        for (double v : b.probabilities) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("one Bayes step") {
        Params p(2, 1);
        p.theta_em = {std::log(9.0), -std::log(9.0)};  // emissions 0.9 and 0.1
        Belief prior{{0.5, 0.5}, 0.0};
        auto post = forward_update(p, prior, {1.0}, 1);
        CHECK(post.probabilities[0] == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(post.probabilities[1] == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(post.log_evidence == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    }
    SUBCASE("sequential updates reproduce the batch likelihood") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto p = oracle::random_params(4, 3, seed);
            auto obs = random_observations(200, seed);
            auto act = oracle::random_actions(200, 3, seed);
            auto b = initial_belief(p, act[0], obs[0]);
            for (std::size_t t = 1; t < obs.size(); ++t) {
                b = forward_update(p, b, act[t], obs[t]);
                CHECK(std::abs(sum(b.probabilities) - 1.0) <= 1e-9);
            }
            CHECK(std::abs(b.log_evidence - likelihood(p, obs, act)) <= 1e-10);
        }
    }
    SUBCASE("prior and predict agree with the oracle") {
        auto p = oracle::random_params(3, 2, 8);
        auto a = oracle::random_actions(2, 2, 9);
        auto prior = prior_belief(p, a[0]);
        auto want = oracle::initial(p, a[0]);
        for (std::size_t i = 0; i < 3; ++i) CHECK(prior.probabilities[i] == doctest::Approx(want[i]).epsilon(1e-14));
        auto next = predict_step(p, prior.probabilities, a[1]);
        for (std::size_t j = 0; j < 3; ++j) {
            double e = 0.0;
            for (std::size_t i = 0; i < 3; ++i) e += want[i] * oracle::transition(p, i, a[1])[j];
            CHECK(next[j] == doctest::Approx(e).epsilon(1e-14));
        }
    }
    SUBCASE("impossible observation") {
        Params p(2, 1);
        p.theta_em = {-1e4, -1e4};
        CHECK_THROWS_AS(forward_update(p, Belief{{0.5, 0.5}, 0.0}, {1.0}, 1), DegenerateEvidence);
    }
}

TEST_CASE("forward_backward posteriors") {
    auto p = oracle::random_params(3, 3, 12);
    auto obs = random_observations(60, 13);
    auto act = oracle::random_actions(60, 3, 14);
    auto post = forward_backward(p, obs, act);
    CHECK(post.log_likelihood == doctest::Approx(likelihood(p, obs, act)).epsilon(1e-12));
    REQUIRE(post.gamma.size() == 60);
    REQUIRE(post.xi.size() == 59);
    for (std::size_t t = 0; t < 60; ++t) CHECK(std::abs(sum(post.gamma[t]) - 1.0) <= 1e-9);
    for (std::size_t t = 1; t < 60; ++t) {
        for (std::size_t i = 0; i < 3; ++i) {
            double row = 0.0, col = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                row += post.xi[t - 1][i * 3 + j];
                col += post.xi[t - 1][j * 3 + i];
            }
            CHECK(std::abs(row - post.gamma[t - 1][i]) <= 1e-9);
            CHECK(std::abs(col - post.gamma[t][i]) <= 1e-9);
        }
    }
    SUBCASE("gamma matches enumeration on a short sequence") {
        auto q = oracle::random_params(2, 2, 3);
        std::vector<int> o{1, 0, 1, 1};
        auto a = oracle::random_actions(4, 2, 5);
        auto fb = forward_backward(q, o, a);
        const double z = std::exp(oracle::enumerate_log_likelihood(q, o, a));
        // P(s_t = i, O) by clamping the path at t
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t i = 0; i < 2; ++i) {
                double joint = 0.0;
                for (unsigned mask = 0; mask < 16; ++mask) {
                    if (((mask >> t) & 1u) != i) continue;
                    double pr = oracle::initial(q, a[0])[mask & 1u] * oracle::emit(q, mask & 1u, o[0]);
                    for (std::size_t k = 1; k < 4; ++k) {
                        const std::size_t from = (mask >> (k - 1)) & 1u, to = (mask >> k) & 1u;
                        pr *= oracle::transition(q, from, a[k])[to] * oracle::emit(q, to, o[k]);
                    }
                    joint += pr;
                }
                CHECK(fb.gamma[t][i] == doctest::Approx(joint / z).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("M-step gradient against finite differences") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto p = oracle::random_params(3, 3, seed);
        auto obs = random_observations(25, seed + 1);
        auto act = oracle::random_actions(25, 3, seed + 2);
        auto post = forward_backward(p, obs, act);
        auto g = mstep_gradient(p, post, act, Exec::serial);
        const double h = 1e-5;
        auto check = [&](std::vector<double>& theta, const std::vector<double>& analytic) {
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double saved = theta[k];
                theta[k] = saved + h;
                const double up = mstep_objective(p, post, act);
                theta[k] = saved - h;
                const double down = mstep_objective(p, post, act);
                theta[k] = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
                CHECK(std::abs(numeric - analytic[k]) / denom < 1e-5);
            }
        };
        check(p.theta_in, g.theta_in);
        check(p.theta_tr, g.theta_tr);
    }
}

TEST_CASE("em_fit") {
    SUBCASE("single state is closed form after one iteration") {
        auto obs = random_observations(101, 4);
        auto act = oracle::random_actions(101, 2, 5);
        auto fit = em_fit(obs, act, 1, EmConfig{}, 3);
        const double m = static_cast<double>(std::count(obs.begin(), obs.end(), 1)) / 101.0;
        CHECK(std::abs(fit.params.theta_em[0] - std::log(m / (1.0 - m))) <= 1e-9);
        CHECK(fit.trace.iterations == 1);
    }
    SUBCASE("monotone trace, reproducible per seed") {
        auto truth = oracle::random_params(3, 3, 31, 1.5);
        auto act = oracle::random_actions(300, 3, 32);
        auto obs = oracle::sample_observations(truth, act, 33);
        EmConfig cfg;
        cfg.max_iter = 15;
        cfg.tol = 0.0;
        cfg.restarts = 2;
        auto a = em_fit(obs, act, 3, cfg, 5), b = em_fit(obs, act, 3, cfg, 5);
        CHECK(a.trace.log_likelihood == b.trace.log_likelihood);
        CHECK(a.params.theta_tr == b.params.theta_tr);
        const auto& ll = a.trace.log_likelihood;
        CHECK(ll.size() == a.trace.iterations + 1);
        for (std::size_t k = 1; k < ll.size(); ++k) {
            CHECK(std::isfinite(ll[k]));
            CHECK(ll[k] - ll[k - 1] >= -1e-7 * std::abs(ll[k - 1]));
        }
        CHECK(ll.back() == doctest::Approx(likelihood(a.params, obs, act)).epsilon(1e-12));
    }
    SUBCASE("emission estimates stay inside the clamp") {
        std::vector<int> obs(60, 1);
        auto act = oracle::random_actions(60, 2, 1);
        auto fit = em_fit(obs, act, 2, EmConfig{}, 1);
        for (double v : fit.params.theta_em) CHECK(std::abs(v) <= 10.0);
    }
    SUBCASE("starved state keeps its emission") {
        // A starvation threshold of half the sequence flags every state but the dominant one.
        std::vector<int> obs(200, 1);
        auto act = oracle::random_actions(200, 2, 6);
        EmConfig cfg;
        cfg.starvation = 0.5;
        cfg.max_iter = 0;
        auto init = em_fit_once(obs, act, 3, cfg, 17);
        CHECK(init.trace.iterations == 0);
        cfg.max_iter = 5;
        auto fit = em_fit_once(obs, act, 3, cfg, 17);
        REQUIRE(fit.trace.starved.size() == 3);
        std::size_t flagged = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            if (fit.trace.starved[i]) {
                ++flagged;
                CHECK(fit.params.theta_em[i] == init.params.theta_em[i]);
            } else {
                CHECK(fit.params.theta_em[i] == 10.0);
            }
        }
        CHECK(flagged >= 1);
    }
}

TEST_CASE("entropy") {
    CHECK(entropy({1.0, 0.0}) == 0.0);
    CHECK(entropy({0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(entropy({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}
