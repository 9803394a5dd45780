#include "fepagent/pipeline.hpp"

#include "fepagent/error.hpp"
#include "fepagent/random.hpp"

namespace fep::pipeline {

PipelineConfig::PipelineConfig() {
    train.epochs = 20;
    roadmap.max_feasibility_edges = 8;
}

std::vector<Recording> make_world(const WorldConfig& cfg, std::uint64_t seed) {
    std::vector<Recording> out;
    out.reserve(cfg.recordings);
    for (std::size_t r = 0; r < cfg.recordings; ++r) {
        out.push_back(signal::gen_synthetic_interaction(cfg.frames, cfg.coupling, mix_seed(seed, r), cfg.synthetic));
    }
    return out;
}

ObservationCorpus label_observations(const discriminator::ClassifierParams& disc,
                                     const std::vector<Recording>& recordings, std::size_t block,
                                     std::uint64_t seed) {
    if (block == 0) throw InvalidArgument("observation block must be positive");
    const std::size_t window = disc.window;
    ObservationCorpus corpus;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        const Recording& rec = recordings[r];
        const std::size_t n = rec.size();
        if (n < window + 2 * block) {
            throw InvalidDataset("recording " + std::to_string(r) + " is too short for observation blocks");
        }
        Rng rng = make_rng(seed, r);
        // Partner frame shown at each time.
        std::vector<std::size_t> source(n);
        for (std::size_t start = 0, b = 0; start < n; start += block, ++b) {
            const std::size_t len = std::min(block, n - start);
            std::size_t offset = 0;
            if (b % 2 == 1) {
                std::uniform_int_distribution<std::size_t> pick(block, n - block);
                offset = pick(rng);
            }
            for (std::size_t t = start; t < start + len; ++t) source[t] = (t + offset) % n;
        }
        std::vector<InteractionWindow> windows;
        for (std::size_t end = window; end <= n; ++end) {
            InteractionWindow w;
            for (std::size_t t = end - window; t < end; ++t) {
                w.agent.push_back(rec.agent.frames[t]);
                w.partner.push_back(rec.partner.frames[source[t]]);
            }
            windows.push_back(std::move(w));
        }
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const double s = discriminator::score(disc, windows[i]);
            corpus.scores.push_back(s);
            corpus.observations.push_back(s >= discriminator::kThreshold ? 1 : 0);
            corpus.actions.push_back(roadmap::action_features(windows[i].agent.back()));
        }
    }
    return corpus;
}

ObservationCorpus self_play_observations(const arena::Models& models, const std::vector<Recording>& recordings,
                                         std::uint64_t seed) {
    arena::Models probe = models;
    probe.hmm = iohmm::Params(1, models.dim() + 1);
    ObservationCorpus corpus;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        arena::EpisodeConfig cfg;
        cfg.agent.method = arena::Method::random_prm;
        cfg.ticks = recordings[r].partner.size();
        const auto rep = arena::run_episode(probe, recordings[r].partner, cfg, mix_seed(seed, r));
        for (const auto& t : rep.log) {
            if (!t.o) continue;
            corpus.observations.push_back(*t.o);
            corpus.actions.push_back(roadmap::action_features(t.agent));
            corpus.scores.push_back(*t.disc_score);
        }
    }
    return corpus;
}

PipelineResult build_models(const PipelineConfig& cfg, std::uint64_t seed) {
    PipelineResult res;
    res.world = make_world(cfg.world, mix_seed(seed, 1));

    auto corpus = discriminator::build_corpus(res.world, cfg.corpus, mix_seed(seed, 2));
    auto [disc, report] = discriminator::train(corpus, cfg.train, mix_seed(seed, 3));
    res.models.disc = std::move(disc);
    res.disc_report = std::move(report);

    std::vector<PoseSequence> agent_motion;
    for (const auto& rec : res.world) agent_motion.push_back(rec.agent);
    const auto bound = roadmap::fit_kinematic_bound(agent_motion);
    res.models.map = roadmap::build_roadmap(agent_motion, bound, cfg.roadmap);

    auto obs = label_observations(res.models.disc, res.world, cfg.observation_block, mix_seed(seed, 4));
    if (cfg.self_play) {
        const auto own = self_play_observations(res.models, res.world, mix_seed(seed, 6));
        obs.observations.insert(obs.observations.end(), own.observations.begin(), own.observations.end());
        obs.actions.insert(obs.actions.end(), own.actions.begin(), own.actions.end());
        obs.scores.insert(obs.scores.end(), own.scores.begin(), own.scores.end());
    }
    auto fit = iohmm::em_fit(obs.observations, obs.actions, cfg.states, cfg.em, mix_seed(seed, 5));
    res.models.hmm = std::move(fit.params);
    res.hmm_trace = std::move(fit.trace);
    res.models.check();
    return res;
}

}  // namespace fep::pipeline
