#pragma once

#include "fepagent/arena.hpp"
#include "fepagent/pipeline.hpp"
#include "fepagent/signal.hpp"

namespace fixture {

// Small but complete model set, built once per test binary.
inline const fep::arena::Models& tiny_models() {
    static const fep::arena::Models models = [] {
        fep::pipeline::PipelineConfig cfg;
        cfg.world.recordings = 2;
        cfg.world.frames = 240;
        cfg.train.epochs = 3;
        cfg.train.widths = {4, 4, 6, 8, 0.5};
        cfg.states = 3;
        cfg.observation_block = 60;
        cfg.em.max_iter = 5;
        cfg.em.restarts = 1;
        return fep::pipeline::build_models(cfg, 11).models;
    }();
    return models;
}

inline fep::PoseSequence partner_stream(std::size_t frames, std::uint64_t seed) {
    return fep::signal::gen_synthetic_interaction(frames, 0.8, seed).partner;
}

}  // namespace fixture
