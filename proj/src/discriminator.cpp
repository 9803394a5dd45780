#include "fepagent/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fepagent/error.hpp"
#include "fepagent/kernels/nn_kernels.hpp"
#include "fepagent/random.hpp"

namespace fep::discriminator {

using nn::LayerSpec;

std::vector<LayerSpec> default_architecture(std::size_t dim, std::size_t length, const ArchWidths& w) {
    if (length < 7) throw InvalidArgument("default architecture needs windows of at least 7 frames");
    const std::size_t h1 = (length - 3) / 2 + 1;
    const std::size_t h2 = (h1 - 3) / 2 + 1;
    return {
        LayerSpec::frame_affine(2 * dim, w.frame),
        LayerSpec::to_channels(),
        LayerSpec::conv2d(w.frame, w.conv1, 3, 1, 2, 1),
        LayerSpec::relu(),
        LayerSpec::conv2d(w.conv1, w.conv2, 3, 1, 2, 1),
        LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense(w.conv2 * h2, w.hidden),
        LayerSpec::relu(),
        LayerSpec::dropout(w.dropout),
        LayerSpec::dense(w.hidden, 1),
    };
}

std::vector<LayerSpec> wide_keypoint_architecture() {
    return {
        LayerSpec::frame_affine(kWideKeypointFeatures, 48),
        LayerSpec::conv2d(1, 16, 3, 3, 1, 1, 0, 0),
        LayerSpec::relu(),
        LayerSpec::conv2d(16, 32, 3, 3, 2, 2, 1, 0),
        LayerSpec::relu(),
        LayerSpec::conv2d(32, 64, 3, 3, 2, 2, 1, 0),
        LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense(3200, 128),
        LayerSpec::relu(),
        LayerSpec::dropout(0.5),
        LayerSpec::dense(128, 1),
    };
}

nn::Network make_network(std::size_t dim, std::size_t length, const ArchWidths& widths) {
    const nn::Shape input{1, length, 2 * dim};
    if (2 * dim == kWideKeypointFeatures) {
        try {
            return nn::Network(input, wide_keypoint_architecture());
        } catch (const InvalidArgument&) {
            // window length does not chain to 3200 features
        }
    }
    return nn::Network(input, default_architecture(dim, length, widths));
}

std::vector<double> to_input(const InteractionWindow& w) {
    const std::size_t d = w.dim();
    std::vector<double> x;
    x.reserve(w.length() * 2 * d);
    for (std::size_t t = 0; t < w.length(); ++t) {
        x.insert(x.end(), w.agent[t].begin(), w.agent[t].end());
        x.insert(x.end(), w.partner[t].begin(), w.partner[t].end());
    }
    return x;
}

double bce_loss(double prediction, int label) {
    const double p = std::clamp(prediction, kEpsilon, 1.0 - kEpsilon);
    return -(label == 1 ? std::log(p) : std::log1p(-p));
}

namespace {

void check_shape(const ClassifierParams& params, const InteractionWindow& w) {
    if (w.length() != params.window || w.partner.size() != params.window || w.dim() != params.dim) {
        throw InvalidArgument("window shape " + std::to_string(w.length()) + "x" + std::to_string(w.dim()) +
                              " does not match classifier input " + std::to_string(params.window) + "x" +
                              std::to_string(params.dim));
    }
}

}  // namespace

double predict(const ClassifierParams& params, const InteractionWindow& normalized) {
    check_shape(params, normalized);
    return params.net.predict(to_input(normalized));
}

double score(const ClassifierParams& params, const InteractionWindow& raw) {
    check_shape(params, raw);
    return params.net.predict(to_input(params.scale.apply(raw)));
}

std::pair<ClassifierParams, TrainReport> train(const std::vector<InteractionWindow>& dataset,
                                               const TrainConfig& cfg, std::uint64_t rng_seed) {
    if (dataset.empty()) throw InvalidDataset("empty training set");
    std::size_t positives = 0;
    for (const auto& w : dataset) {
        if (!w.label) throw InvalidDataset("training window without a label");
        positives += *w.label == 1;
    }
    if (positives == 0 || positives == dataset.size()) {
        throw InvalidDataset("training set must contain both real and fake windows");
    }
    if (cfg.batch == 0) throw InvalidArgument("batch size must be positive");

    auto norm = signal::normalize01(dataset);
    ClassifierParams params;
    params.window = dataset.front().length();
    params.dim = dataset.front().dim();
    params.scale = norm.params;
    params.net = make_network(params.dim, params.window, cfg.widths);
    params.net.initialize(rng_seed);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = make_rng(rng_seed, 11);
    std::shuffle(order.begin(), order.end(), split_rng);
    auto n_hold = static_cast<std::size_t>(std::round(cfg.holdout * static_cast<double>(order.size())));
    if (n_hold >= order.size()) n_hold = order.size() - 1;
    std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> hold_idx(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());

    std::vector<std::vector<double>> inputs(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) inputs[i] = to_input(norm.windows[i]);
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::vector<double>> xs;
        xs.reserve(idx.size());
        for (auto i : idx) xs.push_back(inputs[i]);
        return xs;
    };
    // Evaluation order is fixed; train_idx itself is reshuffled every epoch.
    const std::vector<std::size_t> train_eval_idx = train_idx;
    const auto train_inputs = gather(train_eval_idx);
    const auto hold_inputs = gather(hold_idx);

    auto assess = [&](const std::vector<std::vector<double>>& xs, const std::vector<std::size_t>& idx,
                      double* loss) {
        if (xs.empty()) return 0.0;
        const auto p = kernels::predict_batch(params.net, xs, cfg.exec);
        std::size_t correct = 0;
        double total = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const int y = *dataset[idx[k]].label;
            correct += (p[k] >= kThreshold) == (y == 1);
            total += bce_loss(p[k], y);
        }
        if (loss != nullptr) *loss = total / static_cast<double>(p.size());
        return static_cast<double>(correct) / static_cast<double>(p.size());
    };

    TrainReport report;
    assess(train_inputs, train_eval_idx, &report.initial_train_loss);

    nn::Network best = params.net;
    double best_hold = -1.0;
    nn::Gradient velocity = params.net.zero_gradient();
    std::vector<std::vector<double>> augmented(cfg.batch);
    std::vector<kernels::TrainingSample> batch;
    Rng shuffle_rng = make_rng(rng_seed, 12);
    std::uint64_t draw = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
        for (std::size_t b0 = 0; b0 < train_idx.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(train_idx.size(), b0 + cfg.batch);
            batch.clear();
            for (std::size_t k = b0; k < b1; ++k) {
                const std::size_t i = train_idx[k];
                const std::uint64_t sample_seed = mix_seed(rng_seed, 1000 + draw++);
                if (cfg.jitter_frames > 0 || cfg.noise_sigma > 0.0) {
                    augmented[k - b0] = to_input(
                        signal::augment(norm.windows[i], cfg.jitter_frames, cfg.noise_sigma, sample_seed));
                } else {
                    augmented[k - b0] = inputs[i];
                }
                batch.push_back({&augmented[k - b0], *dataset[i].label, mix_seed(sample_seed, 1)});
            }
            auto bg = kernels::batch_gradient(params.net, batch, cfg.exec);
            const double inv = 1.0 / static_cast<double>(batch.size());
            auto& layers = params.net.layers();
            for (std::size_t l = 0; l < layers.size(); ++l) {
                for (std::size_t j = 0; j < layers[l].weights.size(); ++j) {
                    double& v = velocity.weights[l][j];
                    v = cfg.momentum * v - cfg.learning_rate * bg.grad.weights[l][j] * inv;
                    layers[l].weights[j] += v;
                }
                for (std::size_t j = 0; j < layers[l].bias.size(); ++j) {
                    double& v = velocity.bias[l][j];
                    v = cfg.momentum * v - cfg.learning_rate * bg.grad.bias[l][j] * inv;
                    layers[l].bias[j] += v;
                }
            }
        }
        EpochStats st;
        st.train_accuracy = assess(train_inputs, train_eval_idx, &st.train_loss);
        st.heldout_accuracy = assess(hold_inputs, hold_idx, nullptr);
        report.epochs.push_back(st);
        if (st.heldout_accuracy > best_hold) {
            best_hold = st.heldout_accuracy;
            best = params.net;
            report.best_epoch = epoch;
        }
    }

    if (report.best_epoch) {
        params.net = best;
        const auto& st = report.epochs[*report.best_epoch];
        params.meta = {cfg.epochs, st.train_accuracy, st.heldout_accuracy};
    } else {
        params.meta = {0, assess(train_inputs, train_eval_idx, nullptr), assess(hold_inputs, hold_idx, nullptr)};
    }
    return {std::move(params), std::move(report)};
}

double gradient_check(const nn::Network& net, const InteractionWindow& normalized, int label, double h) {
    const auto x = to_input(normalized);
    nn::Trace trace;
    const double z = net.forward(x, trace, nullptr);
    nn::Gradient g = net.zero_gradient();
    net.backward(trace, nn::sigmoid(z) - static_cast<double>(label), g);

    std::vector<double> analytic;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        analytic.insert(analytic.end(), g.weights[l].begin(), g.weights[l].end());
        analytic.insert(analytic.end(), g.bias[l].begin(), g.bias[l].end());
    }
    nn::Network probe = net;
    auto flat = probe.flat_parameters();
    double worst = 0.0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double saved = flat[k];
        flat[k] = saved + h;
        probe.set_flat_parameters(flat);
        const double up = nn::bce_with_logit(probe.logit(x), label);
        flat[k] = saved - h;
        probe.set_flat_parameters(flat);
        const double down = nn::bce_with_logit(probe.logit(x), label);
        flat[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
    return worst;
}

Evaluation evaluate(const ClassifierParams& params, const std::vector<InteractionWindow>& raw_labeled,
                    Exec exec) {
    Evaluation ev;
    if (raw_labeled.empty()) return ev;
    std::vector<std::vector<double>> xs;
    xs.reserve(raw_labeled.size());
    for (const auto& w : raw_labeled) {
        check_shape(params, w);
        if (!w.label) throw InvalidDataset("evaluation window without a label");
        xs.push_back(to_input(params.scale.apply(w)));
    }
    const auto p = kernels::predict_batch(params.net, xs, exec);
    std::size_t correct = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const int y = *raw_labeled[i].label;
        correct += (p[i] >= kThreshold) == (y == 1);
        total += bce_loss(p[i], y);
    }
    ev.count = p.size();
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(p.size());
    ev.mean_bce = total / static_cast<double>(p.size());
    return ev;
}

std::vector<InteractionWindow> build_corpus(const std::vector<Recording>& recordings,
                                            const CorpusConfig& cfg, std::uint64_t rng_seed) {
    std::vector<InteractionWindow> real;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        auto ws = signal::make_windows(recordings[r], cfg.window, cfg.stride, r);
        real.insert(real.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
    }
    auto fake = signal::negative_sample(recordings, real, cfg.shift_min, rng_seed);
    std::vector<InteractionWindow> out = std::move(real);
    out.insert(out.end(), std::make_move_iterator(fake.windows.begin()),
               std::make_move_iterator(fake.windows.end()));
    return out;
}

}  // namespace fep::discriminator
