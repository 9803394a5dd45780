#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fepagent/exec.hpp"
#include "fepagent/nn.hpp"
#include "fepagent/signal.hpp"
#include "fepagent/types.hpp"

// Binary classifier over interaction windows: P(the agent/partner pairing
// is a genuine interaction). Its thresholded output is the observation o(t)
// fed to the IO-HMM.
namespace fep::discriminator {

struct ArchWidths {
    std::size_t frame = 16;
    std::size_t conv1 = 16;
    std::size_t conv2 = 32;
    std::size_t hidden = 64;
    double dropout = 0.5;
};

// frame_affine(2d -> frame), conv(3x1, stride 2) x 2 over time, dense(hidden) with
// dropout, dense(1).
std::vector<nn::LayerSpec> default_architecture(std::size_t dim, std::size_t length,
                                                const ArchWidths& widths = {});

// 56 features per frame: FC 56->48, conv 16/32/64 (3x3), FC 3200->128 with
// dropout 0.5, FC 128->1. Chains only for window lengths 19..22.
std::vector<nn::LayerSpec> wide_keypoint_architecture();
inline constexpr std::size_t kWideKeypointFeatures = 56;

// Wide keypoint stack when 2*dim == 56 and the window length chains to 3200
// flattened features, otherwise the default stack.
nn::Network make_network(std::size_t dim, std::size_t length, const ArchWidths& widths = {});

// Row-major (1, L, 2d) tensor: each row is the agent pose followed by the partner pose.
std::vector<double> to_input(const InteractionWindow& w);

struct TrainingMeta {
    std::size_t epochs = 0;
    double train_accuracy = 0.0;
    double heldout_accuracy = 0.0;
};

struct ClassifierParams {
    nn::Network net;
    signal::ScaleParams scale;
    std::size_t window = 0;
    std::size_t dim = 0;
    TrainingMeta meta;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double heldout_accuracy = 0.0;
};

struct TrainReport {
    double initial_train_loss = 0.0;
    std::vector<EpochStats> epochs;
    std::optional<std::size_t> best_epoch;
};

struct TrainConfig {
    std::size_t epochs = 60;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t batch = 32;
    double holdout = 0.2;
    std::size_t jitter_frames = 1;
    double noise_sigma = 0.01;
    ArchWidths widths;
    Exec exec = Exec::parallel;
};

inline constexpr double kEpsilon = 1e-7;
inline constexpr double kThreshold = 0.5;

// Binary cross entropy with the prediction clamped to [eps, 1 - eps].
double bce_loss(double prediction, int label);

// P(real) for a window already scaled with params.scale.
double predict(const ClassifierParams& params, const InteractionWindow& normalized);
// Scales a raw window with params.scale first.
double score(const ClassifierParams& params, const InteractionWindow& raw);

// Mini-batch momentum SGD on mean BCE with a held-out split; returns the
// weights of the best held-out epoch. Dataset must hold both labels.
std::pair<ClassifierParams, TrainReport> train(const std::vector<InteractionWindow>& dataset,
                                               const TrainConfig& cfg, std::uint64_t rng_seed);

// Max relative error between backprop and central differences (step h)
// over every weight, with dropout disabled. Denominator floor 1e-6.
double gradient_check(const nn::Network& net, const InteractionWindow& normalized, int label,
                      double h = 1e-5);

struct Evaluation {
    double accuracy = 0.0;
    double mean_bce = 0.0;
    std::size_t count = 0;
};

Evaluation evaluate(const ClassifierParams& params, const std::vector<InteractionWindow>& raw_labeled,
                    Exec exec = Exec::parallel);

struct CorpusConfig {
    std::size_t window = signal::kDefaultWindow;
    std::size_t stride = 4;
    std::size_t shift_min = 2 * signal::kDefaultWindow;
};

// Real windows from every recording plus one time-shifted negative per real window.
std::vector<InteractionWindow> build_corpus(const std::vector<Recording>& recordings,
                                            const CorpusConfig& cfg, std::uint64_t rng_seed);

}  // namespace fep::discriminator
