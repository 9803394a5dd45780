#include "fepagent/kernels/iohmm_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fep::kernels {

namespace {

// Log-softmax of theta * a into out.
void log_softmax(const std::vector<double>& theta, const std::vector<double>& a, std::size_t n_classes,
                 std::size_t dim, std::vector<double>& out) {
    out.resize(n_classes);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_classes; ++j) {
        double z = 0.0;
        for (std::size_t k = 0; k < dim; ++k) z += theta[j * dim + k] * a[k];
        out[j] = z;
        hi = std::max(hi, z);
    }
    double s = 0.0;
    for (double z : out) s += std::exp(z - hi);
    const double lse = hi + std::log(s);
    for (double& z : out) z -= lse;
}

double total_weight(const SoftmaxBlock& block) {
    double w = 0.0;
    for (const auto& row : block.weights) {
        for (double v : row) w += v;
    }
    return w;
}

}  // namespace

double softmax_block_objective(const std::vector<double>& theta, const SoftmaxBlock& block,
                               std::size_t n_classes, std::size_t dim) {
    std::vector<double> ls;
    double q = 0.0;
    for (std::size_t r = 0; r < block.rows.size(); ++r) {
        log_softmax(theta, (*block.actions)[block.rows[r]], n_classes, dim, ls);
        for (std::size_t j = 0; j < n_classes; ++j) q += block.weights[r][j] * ls[j];
    }
    return q;
}

std::vector<double> softmax_block_gradient(const std::vector<double>& theta, const SoftmaxBlock& block,
                                           std::size_t n_classes, std::size_t dim) {
    std::vector<double> g(n_classes * dim, 0.0);
    std::vector<double> ls;
    for (std::size_t r = 0; r < block.rows.size(); ++r) {
        const auto& a = (*block.actions)[block.rows[r]];
        log_softmax(theta, a, n_classes, dim, ls);
        double wsum = 0.0;
        for (double v : block.weights[r]) wsum += v;
        for (std::size_t j = 0; j < n_classes; ++j) {
            const double coef = block.weights[r][j] - wsum * std::exp(ls[j]);
            if (coef == 0.0) continue;
            for (std::size_t k = 0; k < dim; ++k) g[j * dim + k] += coef * a[k];
        }
    }
    return g;
}

std::vector<double> ascend_block(std::vector<double> theta, const SoftmaxBlock& block, std::size_t n_classes,
                                 std::size_t dim, std::size_t steps, double learning_rate) {
    const double w = total_weight(block);
    if (!(w > 0.0)) return theta;
    double q = softmax_block_objective(theta, block, n_classes, dim);
    std::vector<double> trial(theta.size());
    for (std::size_t s = 0; s < steps; ++s) {
        const auto g = softmax_block_gradient(theta, block, n_classes, dim);
        double step = learning_rate / w;
        bool moved = false;
        for (int halvings = 0; halvings <= 40; ++halvings) {
            for (std::size_t k = 0; k < theta.size(); ++k) trial[k] = theta[k] + step * g[k];
            const double qt = softmax_block_objective(trial, block, n_classes, dim);
            if (qt >= q) {
                theta.swap(trial);
                q = qt;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return theta;
}

std::vector<std::vector<double>> ascend_blocks(const std::vector<std::vector<double>>& thetas,
                                               const std::vector<SoftmaxBlock>& blocks, std::size_t n_classes,
                                               std::size_t dim, std::size_t steps, double learning_rate,
                                               Exec exec) {
    std::vector<std::vector<double>> out(blocks.size());
    for_each_index(blocks.size(), exec, [&](std::size_t b) {
        out[b] = ascend_block(thetas[b], blocks[b], n_classes, dim, steps, learning_rate);
    });
    return out;
}

}  // namespace fep::kernels
