#include <doctest.h>

#include <omp.h>

#include <numeric>
#include <random>
#include <stdexcept>

#include "fepagent/discriminator.hpp"
#include "fepagent/io.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/kernels/iohmm_kernels.hpp"
#include "fepagent/kernels/nn_kernels.hpp"
#include "fepagent/kernels/roadmap_kernels.hpp"
#include "fepagent/policy.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/signal.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

// Serial reference kernels against their OpenMP versions. The machine may
// have a single core, so the thread count is forced up to exercise the split.

using namespace fep;

namespace {

const int forced_threads = [] {
    omp_set_num_threads(4);
    return 4;
}();

std::vector<std::vector<double>> random_inputs(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> out(n, std::vector<double>(size));
    for (auto& v : out)
        for (auto& x : v) x = u(g);
    return out;
}

}  // namespace

TEST_CASE("threads are really in use") {
    int seen = 0;
#pragma omp parallel
    {
#pragma omp single
        seen = omp_get_num_threads();
    }
    CHECK(seen == forced_threads);
}

TEST_CASE("for_each_index rethrows the lowest failing index") {
    for (Exec e : {Exec::serial, Exec::parallel}) {
        std::vector<int> hit(100, 0);
        try {
            for_each_index(100, e, [&](std::size_t i) {
                hit[i] = 1;
                if (i == 37 || i == 80) throw std::runtime_error(std::to_string(i));
            });
            FAIL("no exception");
        } catch (const std::runtime_error& err) {
            CHECK(std::string(err.what()) == "37");
        }
        CHECK(std::accumulate(hit.begin(), hit.end(), 0) == 100);
    }
}

TEST_CASE("batch_gradient and predict_batch") {
    auto net = discriminator::make_network(4, 24, {4, 4, 6, 8, 0.5});
    net.initialize(3);
    const auto inputs = random_inputs(37, net.input_shape().size(), 5);
    std::vector<kernels::TrainingSample> batch;
    for (std::size_t i = 0; i < inputs.size(); ++i) batch.push_back({&inputs[i], static_cast<int>(i % 2), 100 + i});

    const auto s = kernels::batch_gradient(net, batch, Exec::serial);
    const auto p = kernels::batch_gradient(net, batch, Exec::parallel);
    CHECK(s.loss == p.loss);
    CHECK(s.correct == p.correct);
    CHECK(s.grad.weights == p.grad.weights);
    CHECK(s.grad.bias == p.grad.bias);

    CHECK(kernels::predict_batch(net, inputs, Exec::serial) == kernels::predict_batch(net, inputs, Exec::parallel));
}

TEST_CASE("discriminator training and evaluation") {
    discriminator::CorpusConfig cc;
    const auto world = std::vector<Recording>{signal::gen_synthetic_interaction(200, 0.8, 1),
                                              signal::gen_synthetic_interaction(200, 0.8, 2)};
    auto corpus = discriminator::build_corpus(world, cc, 3);
    discriminator::TrainConfig tc;
    tc.epochs = 2;
    tc.widths = {4, 4, 6, 8, 0.5};
    tc.exec = Exec::serial;
    auto [a, ra] = discriminator::train(corpus, tc, 4);
    tc.exec = Exec::parallel;
    auto [b, rb] = discriminator::train(corpus, tc, 4);
    CHECK(a.net.flat_parameters() == b.net.flat_parameters());
    const auto ea = discriminator::evaluate(a, corpus, Exec::serial);
    const auto eb = discriminator::evaluate(a, corpus, Exec::parallel);
    CHECK(ea.accuracy == eb.accuracy);
    CHECK(ea.mean_bce == eb.mean_bce);
}

TEST_CASE("feasible_successors and build_roadmap") {
    std::vector<PoseSequence> motion;
    for (std::uint64_t s = 0; s < 3; ++s) motion.push_back(signal::gen_synthetic_interaction(150, 0.8, s).agent);
    const auto bound = roadmap::fit_kinematic_bound(motion);
    for (std::size_t k : {std::size_t{0}, std::size_t{5}}) {
        roadmap::BuildConfig cfg;
        cfg.max_feasibility_edges = k;
        cfg.exec = Exec::serial;
        const auto a = io::to_json(roadmap::build_roadmap(motion, bound, cfg)).dump();
        cfg.exec = Exec::parallel;
        CHECK(io::to_json(roadmap::build_roadmap(motion, bound, cfg)).dump() == a);
    }
    const auto& nodes = fixture::tiny_models().map.nodes;
    const std::vector<std::vector<std::size_t>> none(nodes.size());
    const auto& b = fixture::tiny_models().map.bound;
    CHECK(kernels::feasible_successors(nodes, none, none, b, 8.0, 3, Exec::serial) ==
          kernels::feasible_successors(nodes, none, none, b, 8.0, 3, Exec::parallel));
}

TEST_CASE("sample_sequences") {
    const auto& map = fixture::tiny_models().map;
    const std::size_t start = map.start_nodes.front();
    const auto s = roadmap::sample_sequences(map, start, 8, 40, 9, std::nullopt, Exec::serial);
    const auto p = roadmap::sample_sequences(map, start, 8, 40, 9, std::nullopt, Exec::parallel);
    REQUIRE(s.size() == p.size());
    for (std::size_t m = 0; m < s.size(); ++m) {
        CHECK(s[m].nodes == p[m].nodes);
        CHECK(s[m].poses == p[m].poses);
    }
}

TEST_CASE("score_candidates and select_action") {
    const auto& m = fixture::tiny_models();
    const std::size_t start = m.map.start_nodes.front();
    const auto cands = roadmap::sample_sequences(m.map, start, 8, 32, 2);
    const auto belief = iohmm::prior_belief(m.hmm, roadmap::action_features(m.map.nodes[start])).probabilities;
    policy::FepConfig cfg;
    cfg.exec = Exec::serial;
    const auto s = policy::score_candidates(m.hmm, belief, cands, cfg);
    cfg.exec = Exec::parallel;
    const auto p = policy::score_candidates(m.hmm, belief, cands, cfg);
    REQUIRE(s.size() == p.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i].free_energy == p[i].free_energy);
        CHECK(s[i].entropy == p[i].entropy);
        CHECK(s[i].pragmatic == p[i].pragmatic);
    }
    auto sel_p = policy::select_action(m.hmm, belief, m.map, start, cfg, 4);
    cfg.exec = Exec::serial;
    auto sel_s = policy::select_action(m.hmm, belief, m.map, start, cfg, 4);
    CHECK(sel_s.index == sel_p.index);
    CHECK(sel_s.chosen.nodes == sel_p.chosen.nodes);
}

TEST_CASE("IO-HMM M-step kernels") {
    const std::size_t S = 4, D = 3, T = 300;
    const auto params = oracle::random_params(S, D, 6, 1.0);
    const auto actions = oracle::random_actions(T, D, 7);
    const auto obs = oracle::sample_observations(params, actions, 8);
    const auto post = iohmm::forward_backward(params, obs, actions);

    const auto gs = iohmm::mstep_gradient(params, post, actions, Exec::serial);
    const auto gp = iohmm::mstep_gradient(params, post, actions, Exec::parallel);
    CHECK(gs.theta_in == gp.theta_in);
    CHECK(gs.theta_tr == gp.theta_tr);

    // one block per origin state, as in the transition update
    std::vector<kernels::SoftmaxBlock> blocks(S);
    std::vector<std::vector<double>> thetas(S);
    for (std::size_t i = 0; i < S; ++i) {
        blocks[i].actions = &actions;
        for (std::size_t t = 1; t < T; ++t) {
            blocks[i].rows.push_back(t);
            blocks[i].weights.emplace_back(post.xi[t - 1].begin() + static_cast<std::ptrdiff_t>(i * S),
                                           post.xi[t - 1].begin() + static_cast<std::ptrdiff_t>((i + 1) * S));
        }
        thetas[i].assign(params.theta_tr.begin() + static_cast<std::ptrdiff_t>(i * S * D),
                         params.theta_tr.begin() + static_cast<std::ptrdiff_t>((i + 1) * S * D));
    }
    const auto as = kernels::ascend_blocks(thetas, blocks, S, D, 20, 0.1, Exec::serial);
    const auto ap = kernels::ascend_blocks(thetas, blocks, S, D, 20, 0.1, Exec::parallel);
    CHECK(as == ap);
    for (std::size_t i = 0; i < S; ++i) {
        CHECK(kernels::softmax_block_objective(as[i], blocks[i], S, D) >=
              kernels::softmax_block_objective(thetas[i], blocks[i], S, D));
    }

    iohmm::EmConfig em;
    em.max_iter = 8;
    em.restarts = 2;
    em.exec = Exec::serial;
    const auto fs = iohmm::em_fit(obs, actions, S, em, 3);
    em.exec = Exec::parallel;
    const auto fp = iohmm::em_fit(obs, actions, S, em, 3);
    CHECK(fs.params.theta_tr == fp.params.theta_tr);
    CHECK(fs.trace.log_likelihood == fp.trace.log_likelihood);
}
