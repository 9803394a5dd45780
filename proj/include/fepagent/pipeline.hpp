#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fepagent/arena.hpp"
#include "fepagent/discriminator.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/signal.hpp"

// End-to-end model building on synthetic interaction recordings.
namespace fep::pipeline {

struct WorldConfig {
    std::size_t recordings = 8;
    std::size_t frames = 600;
    double coupling = 0.8;
    signal::SyntheticConfig synthetic;
};

// Recording r is generated with seed mix_seed(seed, r).
std::vector<Recording> make_world(const WorldConfig& cfg, std::uint64_t seed);

struct ObservationCorpus {
    std::vector<int> observations;
    std::vector<iohmm::Action> actions;
    std::vector<double> scores;
};

// Agent motion of each recording paired alternately, in blocks of `block`
// frames, with its own partner and with partner motion from a random other
// time. Every full window is scored by the discriminator; the action is the
// agent pose of the window's last frame.
ObservationCorpus label_observations(const discriminator::ClassifierParams& disc,
                                     const std::vector<Recording>& recordings, std::size_t block,
                                     std::uint64_t seed);

// Random roadmap walks played against each recording's partner stream,
// scored like a live episode; the agent sees what its own motion earns.
ObservationCorpus self_play_observations(const arena::Models& models, const std::vector<Recording>& recordings,
                                         std::uint64_t seed);

struct PipelineConfig {
    WorldConfig world;
    discriminator::CorpusConfig corpus;
    discriminator::TrainConfig train;
    roadmap::BuildConfig roadmap;
    std::size_t states = 5;
    std::size_t observation_block = 200;
    bool self_play = true;  // append self_play_observations to the labelled blocks
    iohmm::EmConfig em;

    PipelineConfig();
};

struct PipelineResult {
    arena::Models models;
    std::vector<Recording> world;
    discriminator::TrainReport disc_report;
    iohmm::TrainingTrace hmm_trace;
};

PipelineResult build_models(const PipelineConfig& cfg, std::uint64_t seed);

}  // namespace fep::pipeline
