#include "fepagent/kernels/nn_kernels.hpp"

namespace fep::kernels {

namespace {

struct SampleResult {
    nn::Gradient grad;
    double loss = 0.0;
    bool correct = false;
};

void one_sample(const nn::Network& net, const TrainingSample& s, SampleResult& out) {
    nn::Trace trace;
    const double z = net.forward(*s.input, trace, &s.dropout_seed);
    const double p = nn::sigmoid(z);
    out.loss = nn::bce_with_logit(z, s.label);
    out.correct = (p >= 0.5) == (s.label == 1);
    out.grad = net.zero_gradient();
    net.backward(trace, p - static_cast<double>(s.label), out.grad);
}

}  // namespace

BatchGradient batch_gradient(const nn::Network& net, std::span<const TrainingSample> batch, Exec exec) {
    std::vector<SampleResult> results(batch.size());
    for_each_index(batch.size(), exec, [&](std::size_t i) { one_sample(net, batch[i], results[i]); });

    BatchGradient b;
    b.grad = net.zero_gradient();
    for (const auto& r : results) {
        b.grad.add(r.grad);
        b.loss += r.loss;
        b.correct += r.correct;
    }
    return b;
}

std::vector<double> predict_batch(const nn::Network& net, std::span<const std::vector<double>> inputs,
                                  Exec exec) {
    std::vector<double> out(inputs.size());
    for_each_index(inputs.size(), exec, [&](std::size_t i) { out[i] = net.predict(inputs[i]); });
    return out;
}

}  // namespace fep::kernels
