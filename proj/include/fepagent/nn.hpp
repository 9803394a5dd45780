#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// Small hand-rolled feed-forward network used by the interaction
// discriminator: per-frame affine maps, 2-D convolutions over
// (time x feature), dense layers, ReLU and inverted dropout. The network
// outputs a single logit; probabilities come from the logistic function.
namespace fep::nn {

struct Shape {
    std::size_t c = 1, h = 1, w = 1;
    std::size_t size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

enum class LayerKind { frame_affine, to_channels, conv2d, relu, flatten, dense, dropout };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0, out = 0;                // frame_affine, dense, conv2d channels
    std::size_t kh = 1, kw = 1, sh = 1, sw = 1;  // conv2d
    std::size_t ph = 0, pw = 0;                 // conv2d zero padding
    double rate = 0.0;                          // dropout

    static LayerSpec frame_affine(std::size_t in, std::size_t out);
    static LayerSpec to_channels();
    static LayerSpec conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                            std::size_t sh, std::size_t sw, std::size_t ph = 0, std::size_t pw = 0);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec dropout(double rate);
};

struct Layer {
    LayerSpec spec;
    Shape in_shape, out_shape;
    std::vector<double> weights;
    std::vector<double> bias;
};

// Gradient with the same per-layer layout as Network::layers.
struct Gradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    void zero();
    void add(const Gradient& other);
    void scale(double s);
};

// Per-sample state captured by a forward pass and consumed by backward().
struct Trace {
    std::vector<std::vector<double>> activations;  // activations[0] = input
    std::vector<std::vector<double>> masks;        // dropout masks (empty at inference)
};

class Network {
public:
    Network() = default;
    // Throws InvalidArgument when the specs do not chain from `input` to a single logit.
    Network(Shape input, std::vector<LayerSpec> specs);

    const Shape& input_shape() const { return input_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::size_t parameter_count() const;

    // He-uniform weights, zero biases.
    void initialize(std::uint64_t seed);

    // Inference: dropout disabled.
    double logit(const std::vector<double>& input) const;
    double predict(const std::vector<double>& input) const;

    // Training-mode forward pass when dropout_seed is set, inference otherwise.
    double forward(const std::vector<double>& input, Trace& trace, const std::uint64_t* dropout_seed) const;
    // Accumulates d loss / d params into grad given d loss / d logit.
    void backward(const Trace& trace, double dlogit, Gradient& grad) const;

    Gradient zero_gradient() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(const std::vector<double>& flat);

private:
    Shape input_;
    std::vector<Layer> layers_;
};

double sigmoid(double z);
// -[y log sigmoid(z) + (1 - y) log(1 - sigmoid(z))], evaluated stably.
double bce_with_logit(double z, int label);

}  // namespace fep::nn
