#pragma once

#include <cstddef>
#include <vector>

#include "fepagent/exec.hpp"

namespace fep::kernels {

// One weighted multinomial-logistic regression problem of the M-step:
// maximise sum_r sum_j weights[r][j] * log softmax_j(theta * actions[rows[r]]).
struct SoftmaxBlock {
    const std::vector<std::vector<double>>* actions = nullptr;
    std::vector<std::size_t> rows;
    std::vector<std::vector<double>> weights;
};

// theta is n_classes x dim, row-major.
double softmax_block_objective(const std::vector<double>& theta, const SoftmaxBlock& block,
                               std::size_t n_classes, std::size_t dim);
std::vector<double> softmax_block_gradient(const std::vector<double>& theta, const SoftmaxBlock& block,
                                           std::size_t n_classes, std::size_t dim);

// `steps` gradient-ascent steps on the weight-normalised objective. A step
// that lowers the objective is halved until it does not (at most 40 times,
// after which the step is dropped), so the objective never decreases.
std::vector<double> ascend_block(std::vector<double> theta, const SoftmaxBlock& block, std::size_t n_classes,
                                 std::size_t dim, std::size_t steps, double learning_rate);

std::vector<std::vector<double>> ascend_blocks(const std::vector<std::vector<double>>& thetas,
                                               const std::vector<SoftmaxBlock>& blocks, std::size_t n_classes,
                                               std::size_t dim, std::size_t steps, double learning_rate,
                                               Exec exec);

}  // namespace fep::kernels
