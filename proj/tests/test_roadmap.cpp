#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "fepagent/error.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/signal.hpp"
#include "oracles.hpp"

using namespace fep;
using namespace fep::roadmap;

namespace {

PoseSequence scalar_sequence(const std::vector<double>& v, double rate = 8.0) {
    PoseSequence s;
    s.rate_hz = rate;
    for (double x : v) s.frames.push_back({x});
    return s;
}

KinematicBound loose_bound(std::size_t d) {
    KinematicBound b;
    b.max_speed.assign(d, 1e6);
    b.intercept = 1e9;
    return b;
}

std::vector<PoseSequence> synthetic_agent(std::size_t n, std::uint64_t seed) {
    std::vector<PoseSequence> out;
    for (std::uint64_t r = 0; r < n; ++r) out.push_back(signal::gen_synthetic_interaction(400, 0.8, seed + r).agent);
    return out;
}

}  // namespace

TEST_CASE("fit_kinematic_bound") {
    SUBCASE("stationary data") {
        auto b = fit_kinematic_bound({scalar_sequence(std::vector<double>(20, 1.0))});
        CHECK(b.slope == 0.0);
        CHECK(b.intercept == 0.0);
        CHECK(b.max_speed[0] == 0.0);
    }
    SUBCASE("sine at 8 Hz") {
        std::vector<double> v;
        for (int i = 0; i < 80; ++i) v.push_back(std::sin(2.0 * std::numbers::pi * i / 8.0));
        auto b = fit_kinematic_bound({scalar_sequence(v)});
        const double w = 2.0 * std::numbers::pi;
        CHECK(std::abs(b.max_speed[0] - w) <= 0.1 * w);
        // |W| falls as |V| rises on a sine, so the fitted slope floors at 0 and
        // the intercept carries the peak acceleration.
        CHECK(b.slope == 0.0);
        CHECK(std::abs(b.intercept - w * w) <= 0.1 * w * w);
        CHECK(b.samples == 78);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fit_kinematic_bound({scalar_sequence({0.0, 1.0})}), InvalidDataset);
        CHECK_THROWS_AS(fit_kinematic_bound({scalar_sequence({0.0, 1.0, 2.0, 3.0})}), InvalidDataset);
        CHECK_THROWS_AS(fit_kinematic_bound({}), InvalidDataset);
    }
    SUBCASE("bounds are nonnegative and cover every observed pair") {
        auto seqs = synthetic_agent(3, 1);
        auto b = fit_kinematic_bound(seqs);
        CHECK(b.slope >= 0.0);
        CHECK(b.intercept >= 0.0);
        for (auto& s : seqs)
            for (std::size_t t = 2; t < s.size(); ++t)
                CHECK(oracle::within_bound(b, s.rate_hz, &s.frames[t - 2], s.frames[t - 1], s.frames[t], 0.0));
    }
}

TEST_CASE("build_roadmap") {
    BuildConfig exact;
    exact.fuse_eps = 0.0;
    exact.lambda = 0.0;
    SUBCASE("pure chain") {
        auto map = build_roadmap({scalar_sequence({0.0, 1.0, 2.0, 3.0, 4.0})}, loose_bound(1), exact);
        CHECK(map.size() == 5);
        CHECK(map.edge_count() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(map.out[i].size() == 1);
            CHECK(map.out[i][0].to == i + 1);
            CHECK(map.out[i][0].prob == 1.0);
        }
        CHECK(map.terminal(4));
    }
    SUBCASE("fused revisit splits its successors evenly") {
        std::vector<double> v{0, 10, 20, 30, 40, 50, 60, 20, 80, 90};
        BuildConfig cfg = exact;
        cfg.fuse_eps = 0.5;
        auto map = build_roadmap({scalar_sequence(v)}, loose_bound(1), cfg);
        CHECK(map.size() == 9);
        const std::size_t fused = map.trace[0][2];
        CHECK(map.trace[0][7] == fused);
        CHECK(map.provenance[fused] == 2);
        REQUIRE(map.out[fused].size() == 2);
        CHECK(map.out[fused][0].prob == 0.5);
        CHECK(map.out[fused][1].prob == 0.5);
        CHECK(map.nodes[map.out[fused][0].to][0] == 30.0);
        CHECK(map.nodes[map.out[fused][1].to][0] == 80.0);
    }
    SUBCASE("speed gate blocks distant postures") {
        KinematicBound b;
        b.max_speed = {8.0};  // one unit per frame at 8 Hz
        b.intercept = 1e9;
        BuildConfig cfg;
        cfg.fuse_eps = 0.0;
        auto map = build_roadmap({scalar_sequence({0.0, 1.0, 2.0}), scalar_sequence({5.0, 6.0, 7.0})}, b, cfg);
        for (std::size_t i = 0; i < map.size(); ++i)
            for (auto& e : map.out[i]) CHECK(std::abs(map.nodes[e.to][0] - map.nodes[i][0]) <= 1.0);
    }
    SUBCASE("empty input rejected") { CHECK_THROWS_AS(build_roadmap({}, loose_bound(1)), InvalidDataset); }
}

TEST_CASE("roadmap invariants on synthetic motion") {
    auto seqs = synthetic_agent(4, 10);
    auto bound = fit_kinematic_bound(seqs);
    BuildConfig cfg;
    cfg.max_feasibility_edges = 8;
    auto map = build_roadmap(seqs, bound, cfg);

    std::size_t frames = 0;
    for (auto& s : seqs) frames += s.size();
    CHECK(map.size() <= frames);
    CHECK(std::accumulate(map.provenance.begin(), map.provenance.end(), std::size_t{0}) == frames);

    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.terminal(i)) continue;
        double total = 0.0;
        for (auto& e : map.out[i]) total += e.prob;
        CHECK(std::abs(total - 1.0) <= 1e-9);
        if (map.out[i].size() == 1 && map.out[i][0].to == i) CHECK(map.idle[i]);
    }

    // reachability from the start nodes
    std::vector<bool> seen(map.size(), false);
    std::vector<std::size_t> stack(map.start_nodes);
    for (auto s : stack) seen[s] = true;
    while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        for (auto& e : map.out[i])
            if (!seen[e.to]) {
                seen[e.to] = true;
                stack.push_back(e.to);
            }
    }
    CHECK(std::count(seen.begin(), seen.end(), true) == static_cast<long>(map.size()));

    SUBCASE("sampled walks use existing edges and respect the bound") {
        for (std::size_t start = 0; start < map.size(); start += 37) {
            if (map.terminal(start)) continue;
            auto walks = sample_sequences(map, start, 8, 16, start);
            for (auto& w : walks) {
                CHECK(w.size() == 8);
                std::size_t cur = start;
                const PoseVector* before = nullptr;
                for (std::size_t k = 0; k < w.nodes.size(); ++k) {
                    const auto next = w.nodes[k];
                    bool edge = false;
                    for (auto& e : map.out[cur]) edge = edge || e.to == next;
                    CHECK(edge);
                    CHECK(oracle::within_bound(map.bound, map.frame_rate_hz, before, map.nodes[cur], map.nodes[next], 0.05));
                    CHECK(w.poses[k] == map.nodes[next]);
                    before = &map.nodes[cur];
                    cur = next;
                }
            }
        }
    }
}

TEST_CASE("fuse_eps = 0 reproduces the input chains") {
    auto seqs = synthetic_agent(2, 20);
    BuildConfig cfg;
    cfg.fuse_eps = 0.0;
    cfg.lambda = 0.0;
    auto map = build_roadmap(seqs, fit_kinematic_bound(seqs), cfg);
    REQUIRE(map.trace.size() == 2);
    std::map<std::size_t, std::set<std::size_t>> expected;
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t t = 0; t < seqs[s].size(); ++t) {
            CHECK(map.nodes[map.trace[s][t]] == seqs[s].frames[t]);
            if (t > 0) expected[map.trace[s][t - 1]].insert(map.trace[s][t]);
        }
    }
    CHECK(map.size() == seqs[0].size() + seqs[1].size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        std::set<std::size_t> got;
        for (auto& e : map.out[i]) got.insert(e.to);
        CHECK(got == expected[i]);
    }
}

TEST_CASE("fusing strategies agree") {
    auto seqs = synthetic_agent(2, 30);
    std::vector<PoseVector> frames;
    for (auto& s : seqs) frames.insert(frames.end(), s.frames.begin(), s.frames.end());
    for (double eps : {0.0, 0.02, 0.05, 0.2}) {
        auto a = fuse_frames(frames, eps, FuseStrategy::grid);
        auto b = fuse_frames(frames, eps, FuseStrategy::brute_force);
        CHECK(a.assignment == b.assignment);
        CHECK(a.nodes == b.nodes);
        for (std::size_t f = 0; f < frames.size(); ++f) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < frames[f].size(); ++j) {
                const double diff = frames[f][j] - a.nodes[a.assignment[f]][j];
                d2 += diff * diff;
            }
            CHECK(std::sqrt(d2) <= eps + 1e-12);
        }
    }
}

TEST_CASE("sample_sequences") {
    BuildConfig exact;
    exact.fuse_eps = 0.0;
    exact.lambda = 0.0;
    SUBCASE("chain roadmap yields the unique path") {
        auto map = build_roadmap({scalar_sequence({0, 1, 2, 3, 4, 5, 6})}, loose_bound(1), exact);
        auto walks = sample_sequences(map, 0, 6, 5, 3);
        for (auto& w : walks) CHECK(w.nodes == std::vector<std::size_t>{1, 2, 3, 4, 5, 6});
    }
    SUBCASE("binomial split on a 0.5 / 0.5 fork") {
        BuildConfig cfg = exact;
        cfg.fuse_eps = 0.5;
        auto map = build_roadmap({scalar_sequence({0, 10, 20, 30, 40, 50, 60, 20, 80, 90})}, loose_bound(1), cfg);
        const std::size_t fork = map.trace[0][2];
        auto walks = sample_sequences(map, fork, 1, 10000, 77);
        std::size_t first = 0;
        for (auto& w : walks) first += w.nodes[0] == map.out[fork][0].to;
        CHECK(std::abs(static_cast<double>(first) - 5000.0) <= 150.0);
    }
    SUBCASE("seeded, and walk m does not depend on M") {
        auto seqs = synthetic_agent(2, 40);
        auto map = build_roadmap(seqs, fit_kinematic_bound(seqs));
        auto a = sample_sequences(map, 5, 8, 32, 9), b = sample_sequences(map, 5, 8, 32, 9);
        auto c = sample_sequences(map, 5, 8, 4, 9);
        for (std::size_t m = 0; m < 32; ++m) CHECK(a[m].nodes == b[m].nodes);
        for (std::size_t m = 0; m < 4; ++m) CHECK(a[m].nodes == c[m].nodes);
    }
    SUBCASE("dead end") {
        auto map = build_roadmap({scalar_sequence({0, 1, 2})}, loose_bound(1), exact);
        CHECK_THROWS_AS(sample_sequences(map, 2, 1, 1, 0), DeadEnd);
    }
    SUBCASE("empirical frequencies fit edge probabilities") {
        auto seqs = synthetic_agent(4, 50);
        auto map = build_roadmap(seqs, fit_kinematic_bound(seqs));
        std::size_t node = 0;
        for (std::size_t i = 0; i < map.size(); ++i)
            if (map.out[i].size() > map.out[node].size()) node = i;
        REQUIRE(map.out[node].size() >= 3);
        auto walks = sample_sequences(map, node, 1, 10000, 123);
        std::map<std::size_t, double> seen;
        for (auto& w : walks) seen[w.nodes[0]] += 1.0;
        double chi2 = 0.0;
        for (auto& e : map.out[node]) {
            const double expect = 1e4 * e.prob;
            chi2 += (seen[e.to] - expect) * (seen[e.to] - expect) / expect;
        }
        boost::math::chi_squared dist(static_cast<double>(map.out[node].size() - 1));
        CHECK(chi2 < boost::math::quantile(dist, 0.99));
    }
}

TEST_CASE("action features") {
    PoseVector pose(8, 0.0);
    auto a = action_features(pose);
    CHECK(a.size() == 9);
    CHECK(a.back() == 1.0);
    CHECK(std::all_of(a.begin(), a.end() - 1, [](double v) { return v == 0.0; }));
    ActionSequence seq;
    seq.poses.assign(5, PoseVector(3, 0.2));
    CHECK(sequence_to_actions(seq).size() == 5);
}

TEST_CASE("most visited node is the fused posture with most frames") {
    auto map = build_roadmap({scalar_sequence({0, 5, 0, 5, 0, 9})}, loose_bound(1), BuildConfig{0.5, 0.0});
    CHECK(map.nodes[most_visited_node(map)][0] == 0.0);
}
