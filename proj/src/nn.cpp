#include "fepagent/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fepagent/error.hpp"
#include "fepagent/random.hpp"

namespace fep::nn {

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::frame_affine: return "frame_affine";
        case LayerKind::to_channels: return "to_channels";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
        case LayerKind::dropout: return "dropout";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::frame_affine, LayerKind::to_channels, LayerKind::conv2d, LayerKind::relu,
                   LayerKind::flatten, LayerKind::dense, LayerKind::dropout}) {
        if (to_string(k) == s) return k;
    }
    throw InvalidArgument("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::frame_affine(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::frame_affine;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::to_channels() {
    LayerSpec s;
    s.kind = LayerKind::to_channels;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                            std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in = cin;
    s.out = cout;
    s.kh = kh;
    s.kw = kw;
    s.sh = sh;
    s.sw = sw;
    s.ph = ph;
    s.pw = pw;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

void Gradient::zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void Gradient::add(const Gradient& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
}

void Gradient::scale(double s) {
    for (auto& w : weights) {
        for (double& v : w) v *= s;
    }
    for (auto& b : bias) {
        for (double& v : b) v *= s;
    }
}

namespace {

std::size_t conv_out(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
    if (n + 2 * p < k || s == 0) return 0;
    return (n + 2 * p - k) / s + 1;
}

[[noreturn]] void shape_error(std::size_t index, const std::string& what) {
    throw InvalidArgument("layer " + std::to_string(index) + ": " + what);
}

}  // namespace

Network::Network(Shape input, std::vector<LayerSpec> specs) : input_(input) {
    Shape cur = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        Layer layer;
        layer.spec = specs[i];
        layer.in_shape = cur;
        const LayerSpec& s = layer.spec;
        switch (s.kind) {
            case LayerKind::frame_affine:
                if (cur.c != 1 || cur.w != s.in) shape_error(i, "frame_affine expects (1, H, in)");
                layer.out_shape = {1, cur.h, s.out};
                layer.weights.resize(s.out * s.in);
                layer.bias.resize(s.out);
                break;
            case LayerKind::to_channels:
                if (cur.c != 1) shape_error(i, "to_channels expects a single channel");
                layer.out_shape = {cur.w, cur.h, 1};
                break;
            case LayerKind::conv2d: {
                if (cur.c != s.in) shape_error(i, "conv2d input channel mismatch");
                const std::size_t ho = conv_out(cur.h, s.kh, s.sh, s.ph);
                const std::size_t wo = conv_out(cur.w, s.kw, s.sw, s.pw);
                if (ho == 0 || wo == 0) shape_error(i, "conv2d kernel larger than input");
                layer.out_shape = {s.out, ho, wo};
                layer.weights.resize(s.out * s.in * s.kh * s.kw);
                layer.bias.resize(s.out);
                break;
            }
            case LayerKind::relu:
            case LayerKind::dropout:
                if (s.kind == LayerKind::dropout && !(s.rate >= 0.0 && s.rate < 1.0)) {
                    shape_error(i, "dropout rate must lie in [0, 1)");
                }
                layer.out_shape = cur;
                break;
            case LayerKind::flatten:
                layer.out_shape = {cur.size(), 1, 1};
                break;
            case LayerKind::dense:
                if (cur.size() != s.in) {
                    shape_error(i, "dense expects " + std::to_string(s.in) + " inputs, got " +
                                       std::to_string(cur.size()));
                }
                layer.out_shape = {s.out, 1, 1};
                layer.weights.resize(s.out * s.in);
                layer.bias.resize(s.out);
                break;
        }
        cur = layer.out_shape;
        layers_.push_back(std::move(layer));
    }
    if (cur.size() != 1) throw InvalidArgument("network must end in a single logit");
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

void Network::initialize(std::uint64_t seed) {
    Rng rng = make_rng(seed, 7);
    for (auto& l : layers_) {
        if (l.weights.empty()) continue;
        std::size_t fan_in = l.spec.in;
        if (l.spec.kind == LayerKind::conv2d) fan_in = l.spec.in * l.spec.kh * l.spec.kw;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& w : l.weights) w = u(rng);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

namespace {

void forward_layer(const Layer& l, const std::vector<double>& x, std::vector<double>& y,
                   const std::vector<double>* mask) {
    const LayerSpec& s = l.spec;
    y.assign(l.out_shape.size(), 0.0);
    switch (s.kind) {
        case LayerKind::frame_affine: {
            const std::size_t rows = l.in_shape.h;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xr = &x[r * s.in];
                double* yr = &y[r * s.out];
                for (std::size_t o = 0; o < s.out; ++o) {
                    const double* wo = &l.weights[o * s.in];
                    double acc = l.bias[o];
                    for (std::size_t i = 0; i < s.in; ++i) acc += wo[i] * xr[i];
                    yr[o] = acc;
                }
            }
            break;
        }
        case LayerKind::to_channels: {
            const std::size_t h = l.in_shape.h, w = l.in_shape.w;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) y[c * h + r] = x[r * w + c];
            }
            break;
        }
        case LayerKind::conv2d: {
            const Shape& in = l.in_shape;
            const Shape& out = l.out_shape;
            for (std::size_t co = 0; co < out.c; ++co) {
                for (std::size_t oh = 0; oh < out.h; ++oh) {
                    for (std::size_t ow = 0; ow < out.w; ++ow) {
                        double acc = l.bias[co];
                        for (std::size_t ci = 0; ci < in.c; ++ci) {
                            for (std::size_t a = 0; a < s.kh; ++a) {
                                const auto ih = static_cast<std::ptrdiff_t>(oh * s.sh + a) -
                                                static_cast<std::ptrdiff_t>(s.ph);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in.h)) continue;
                                for (std::size_t b = 0; b < s.kw; ++b) {
                                    const auto iw = static_cast<std::ptrdiff_t>(ow * s.sw + b) -
                                                    static_cast<std::ptrdiff_t>(s.pw);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in.w)) continue;
                                    acc += l.weights[((co * in.c + ci) * s.kh + a) * s.kw + b] *
                                           x[(ci * in.h + static_cast<std::size_t>(ih)) * in.w +
                                             static_cast<std::size_t>(iw)];
                                }
                            }
                        }
                        y[(co * out.h + oh) * out.w + ow] = acc;
                    }
                }
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case LayerKind::flatten:
            y = x;
            break;
        case LayerKind::dense:
            for (std::size_t o = 0; o < s.out; ++o) {
                const double* wo = &l.weights[o * s.in];
                double acc = l.bias[o];
                for (std::size_t i = 0; i < s.in; ++i) acc += wo[i] * x[i];
                y[o] = acc;
            }
            break;
        case LayerKind::dropout:
            if (mask == nullptr) {
                y = x;
            } else {
                for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * (*mask)[i];
            }
            break;
    }
}

// gx receives d loss / d x; gradient accumulation into gw / gb.
void backward_layer(const Layer& l, const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& gy, std::vector<double>& gx, std::vector<double>& gw,
                    std::vector<double>& gb, const std::vector<double>* mask) {
    const LayerSpec& s = l.spec;
    gx.assign(l.in_shape.size(), 0.0);
    switch (s.kind) {
        case LayerKind::frame_affine: {
            for (std::size_t r = 0; r < l.in_shape.h; ++r) {
                const double* xr = &x[r * s.in];
                const double* gyr = &gy[r * s.out];
                double* gxr = &gx[r * s.in];
                for (std::size_t o = 0; o < s.out; ++o) {
                    const double g = gyr[o];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    const double* wo = &l.weights[o * s.in];
                    double* gwo = &gw[o * s.in];
                    for (std::size_t i = 0; i < s.in; ++i) {
                        gwo[i] += g * xr[i];
                        gxr[i] += g * wo[i];
                    }
                }
            }
            break;
        }
        case LayerKind::to_channels: {
            const std::size_t h = l.in_shape.h, w = l.in_shape.w;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) gx[r * w + c] = gy[c * h + r];
            }
            break;
        }
        case LayerKind::conv2d: {
            const Shape& in = l.in_shape;
            const Shape& out = l.out_shape;
            for (std::size_t co = 0; co < out.c; ++co) {
                for (std::size_t oh = 0; oh < out.h; ++oh) {
                    for (std::size_t ow = 0; ow < out.w; ++ow) {
                        const double g = gy[(co * out.h + oh) * out.w + ow];
                        if (g == 0.0) continue;
                        gb[co] += g;
                        for (std::size_t ci = 0; ci < in.c; ++ci) {
                            for (std::size_t a = 0; a < s.kh; ++a) {
                                const auto ih = static_cast<std::ptrdiff_t>(oh * s.sh + a) -
                                                static_cast<std::ptrdiff_t>(s.ph);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in.h)) continue;
                                for (std::size_t b = 0; b < s.kw; ++b) {
                                    const auto iw = static_cast<std::ptrdiff_t>(ow * s.sw + b) -
                                                    static_cast<std::ptrdiff_t>(s.pw);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in.w)) continue;
                                    const std::size_t wi = ((co * in.c + ci) * s.kh + a) * s.kw + b;
                                    const std::size_t xi = (ci * in.h + static_cast<std::size_t>(ih)) * in.w +
                                                           static_cast<std::size_t>(iw);
                                    gw[wi] += g * x[xi];
                                    gx[xi] += g * l.weights[wi];
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = y[i] > 0.0 ? gy[i] : 0.0;
            break;
        case LayerKind::flatten:
            gx = gy;
            break;
        case LayerKind::dense:
            for (std::size_t o = 0; o < s.out; ++o) {
                const double g = gy[o];
                if (g == 0.0) continue;
                gb[o] += g;
                const double* wo = &l.weights[o * s.in];
                double* gwo = &gw[o * s.in];
                for (std::size_t i = 0; i < s.in; ++i) {
                    gwo[i] += g * x[i];
                    gx[i] += g * wo[i];
                }
            }
            break;
        case LayerKind::dropout:
            if (mask == nullptr) {
                gx = gy;
            } else {
                for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * (*mask)[i];
            }
            break;
    }
}

}  // namespace

double Network::forward(const std::vector<double>& input, Trace& trace,
                        const std::uint64_t* dropout_seed) const {
    if (input.size() != input_.size()) {
        throw InvalidArgument("network input has " + std::to_string(input.size()) + " values, expected " +
                              std::to_string(input_.size()));
    }
    trace.activations.resize(layers_.size() + 1);
    trace.masks.assign(layers_.size(), {});
    trace.activations[0] = input;
    std::uint64_t stream = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        const std::vector<double>* mask = nullptr;
        if (l.spec.kind == LayerKind::dropout && dropout_seed != nullptr && l.spec.rate > 0.0) {
            Rng rng = make_rng(*dropout_seed, stream++);
            std::bernoulli_distribution keep(1.0 - l.spec.rate);
            const double scale = 1.0 / (1.0 - l.spec.rate);
            auto& m = trace.masks[i];
            m.resize(l.in_shape.size());
            for (double& v : m) v = keep(rng) ? scale : 0.0;
            mask = &m;
        }
        forward_layer(l, trace.activations[i], trace.activations[i + 1], mask);
    }
    return trace.activations.back()[0];
}

void Network::backward(const Trace& trace, double dlogit, Gradient& grad) const {
    std::vector<double> gy{dlogit};
    std::vector<double> gx;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto* mask = trace.masks[k].empty() ? nullptr : &trace.masks[k];
        backward_layer(layers_[k], trace.activations[k], trace.activations[k + 1], gy, gx, grad.weights[k],
                       grad.bias[k], mask);
        std::swap(gx, gy);
    }
}

double Network::logit(const std::vector<double>& input) const {
    Trace t;
    return forward(input, t, nullptr);
}

double Network::predict(const std::vector<double>& input) const { return sigmoid(logit(input)); }

Gradient Network::zero_gradient() const {
    Gradient g;
    for (const auto& l : layers_) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

std::vector<double> Network::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void Network::set_flat_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("parameter vector has wrong length");
    std::size_t k = 0;
    for (auto& l : layers_) {
        for (double& w : l.weights) w = flat[k++];
        for (double& b : l.bias) b = flat[k++];
    }
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_with_logit(double z, int label) {
    // softplus(z) - y z
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - (label == 1 ? z : 0.0);
}

}  // namespace fep::nn
