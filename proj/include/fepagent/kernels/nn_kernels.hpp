#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fepagent/exec.hpp"
#include "fepagent/nn.hpp"

namespace fep::kernels {

struct TrainingSample {
    const std::vector<double>* input = nullptr;
    int label = 0;
    std::uint64_t dropout_seed = 0;
};

struct BatchGradient {
    nn::Gradient grad;  // sum over the batch
    double loss = 0.0;  // summed BCE
    std::size_t correct = 0;
};

BatchGradient batch_gradient(const nn::Network& net, std::span<const TrainingSample> batch, Exec exec);

// Inference-mode probabilities for every input.
std::vector<double> predict_batch(const nn::Network& net, std::span<const std::vector<double>> inputs,
                                  Exec exec);

}  // namespace fep::kernels
