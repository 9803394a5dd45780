// Serial reference kernels against their OpenMP versions. Argument 0 runs
// Exec::serial, 1 runs Exec::parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "fepagent/discriminator.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/kernels/iohmm_kernels.hpp"
#include "fepagent/kernels/nn_kernels.hpp"
#include "fepagent/kernels/roadmap_kernels.hpp"
#include "fepagent/policy.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/signal.hpp"

using namespace fep;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

std::vector<std::vector<double>> uniform_rows(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> out(n, std::vector<double>(size));
    for (auto& row : out)
        for (auto& v : row) v = u(g);
    return out;
}

const nn::Network& network() {
    static const nn::Network net = [] {
        auto n = discriminator::make_network(8, 24);
        n.initialize(1);
        return n;
    }();
    return net;
}

std::vector<PoseSequence> agent_motion(std::size_t recordings, std::size_t frames) {
    std::vector<PoseSequence> out;
    for (std::size_t r = 0; r < recordings; ++r) out.push_back(signal::gen_synthetic_interaction(frames, 0.8, r).agent);
    return out;
}

const roadmap::Roadmap& world_map() {
    static const roadmap::Roadmap map = [] {
        const auto motion = agent_motion(8, 600);
        roadmap::BuildConfig cfg;
        cfg.max_feasibility_edges = 8;
        return roadmap::build_roadmap(motion, roadmap::fit_kinematic_bound(motion), cfg);
    }();
    return map;
}

iohmm::Params random_hmm(std::size_t S, std::size_t D, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    iohmm::Params p(S, D);
    for (auto& v : p.theta_in) v = n(g);
    for (auto& v : p.theta_tr) v = n(g);
    for (auto& v : p.theta_em) v = n(g);
    return p;
}

std::vector<iohmm::Action> random_actions(std::size_t T, std::size_t D, std::uint64_t seed) {
    auto rows = uniform_rows(T, D, seed);
    for (auto& r : rows) r.back() = 1.0;
    return rows;
}

void BM_BatchGradient(benchmark::State& state) {
    const auto& net = network();
    const auto inputs = uniform_rows(64, net.input_shape().size(), 2);
    std::vector<kernels::TrainingSample> batch;
    for (std::size_t i = 0; i < inputs.size(); ++i) batch.push_back({&inputs[i], static_cast<int>(i % 2), i});
    for (auto _ : state) benchmark::DoNotOptimize(kernels::batch_gradient(net, batch, exec_of(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_PredictBatch(benchmark::State& state) {
    const auto& net = network();
    const auto inputs = uniform_rows(256, net.input_shape().size(), 3);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::predict_batch(net, inputs, exec_of(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(inputs.size()));
}

void BM_FeasibleSuccessors(benchmark::State& state) {
    const auto motion = agent_motion(4, 400);
    const auto bound = roadmap::fit_kinematic_bound(motion);
    std::vector<PoseVector> nodes;
    std::vector<std::vector<std::size_t>> pred, succ;
    for (const auto& s : motion) {
        for (std::size_t t = 0; t < s.size(); ++t) {
            const std::size_t id = nodes.size();
            nodes.push_back(s.frames[t]);
            pred.emplace_back();
            succ.emplace_back();
            if (t > 0) {
                pred[id].push_back(id - 1);
                succ[id - 1].push_back(id);
            }
        }
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(kernels::feasible_successors(nodes, pred, succ, bound, 8.0, 8, exec_of(state)));
}

void BM_SampleSequences(benchmark::State& state) {
    const auto& map = world_map();
    const std::size_t start = map.start_nodes.front();
    std::uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(roadmap::sample_sequences(map, start, 8, 256, seed++, std::nullopt, exec_of(state)));
}

void BM_ScoreCandidates(benchmark::State& state) {
    const auto& map = world_map();
    const auto hmm = random_hmm(5, map.dim() + 1, 4);
    const auto cands = roadmap::sample_sequences(map, map.start_nodes.front(), 8, 256, 5);
    const iohmm::Distribution belief(5, 0.2);
    policy::FepConfig cfg;
    cfg.exec = exec_of(state);
    for (auto _ : state) benchmark::DoNotOptimize(policy::score_candidates(hmm, belief, cands, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cands.size()));
}

void BM_MStepGradient(benchmark::State& state) {
    const std::size_t S = 5, D = 9, T = 4000;
    const auto p = random_hmm(S, D, 6);
    const auto a = random_actions(T, D, 7);
    std::vector<int> o(T);
    for (std::size_t t = 0; t < T; ++t) o[t] = static_cast<int>((t / 37) % 2);
    const auto post = iohmm::forward_backward(p, o, a);
    for (auto _ : state) benchmark::DoNotOptimize(iohmm::mstep_gradient(p, post, a, exec_of(state)));
}

void BM_AscendBlocks(benchmark::State& state) {
    const std::size_t S = 5, D = 9, T = 4000;
    const auto a = random_actions(T, D, 8);
    std::mt19937_64 g(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<kernels::SoftmaxBlock> blocks(S);
    for (auto& b : blocks) {
        b.actions = &a;
        for (std::size_t t = 1; t < T; ++t) {
            b.rows.push_back(t);
            std::vector<double> w(S);
            for (auto& v : w) v = u(g);
            b.weights.push_back(w);
        }
    }
    const std::vector<std::vector<double>> thetas(S, std::vector<double>(S * D, 0.0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::ascend_blocks(thetas, blocks, S, D, 20, 0.1, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PredictBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FeasibleSuccessors)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SampleSequences)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScoreCandidates)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MStepGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AscendBlocks)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
