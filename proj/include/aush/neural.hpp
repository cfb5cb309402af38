#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aush/random.hpp"

namespace aush {

enum class Activation { Sigmoid, Identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

double sigmoid(double x);

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
    Activation activation = Activation::Sigmoid;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Activation act);

    double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
};

/// Activations recorded by a forward pass.
///
/// values[0] is the input, values[l + 1] the post-activation output of layer l.
/// `input_support` lists the nonzero input coordinates when the input was
/// sparse enough to exploit; empty means "treat as dense".
struct ForwardCache {
    std::vector<std::vector<double>> values;
    std::vector<std::size_t> input_support;
    bool sparse_input = false;
    const void* owner = nullptr;
    std::uint64_t version = 0;

    std::span<const double> output() const { return values.back(); }
};

struct MlpGradients {
    std::vector<std::vector<double>> weights;  // per layer, same shape as DenseLayer::weights
    std::vector<std::vector<double>> bias;
    std::vector<double> input;                 // dLoss/dx of the last backward call

    void add_scaled(const MlpGradients& other, double scale);
    void scale(double s);
    double max_abs() const;
};

class MlpNetwork {
public:
    MlpNetwork() = default;
    explicit MlpNetwork(std::vector<DenseLayer> layers);

    // Glorot-uniform weights, zero biases. hidden layers use hidden_act, the
    // last layer uses output_act. dims = {input, hidden..., output}.
    static MlpNetwork create(std::span<const std::size_t> dims, Activation hidden_act,
                             Activation output_act, Rng& rng);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t num_hidden_layers() const { return layers_.empty() ? 0 : layers_.size() - 1; }
    std::size_t num_parameters() const;

    const DenseLayer& layer(std::size_t l) const { return layers_.at(l); }
    // Mutable access invalidates outstanding forward caches.
    DenseLayer& mutable_layer(std::size_t l);
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::uint64_t version() const { return version_; }
    void touch() { ++version_; }

    MlpGradients zero_gradients() const;
    bool all_finite() const;

    bool operator==(const MlpNetwork& other) const;

private:
    std::vector<DenseLayer> layers_;
    std::uint64_t version_ = 0;
};

ForwardCache mlp_forward(const MlpNetwork& net, std::span<const double> x);

// Accumulates the gradient of a scalar loss into `acc` given dLoss/dOutput.
// acc.input is overwritten with dLoss/dx for this sample unless
// want_input_grad is false, in which case it is left empty.
void mlp_backward_accumulate(const MlpNetwork& net, const ForwardCache& cache,
                             std::span<const double> grad_output, MlpGradients& acc,
                             bool want_input_grad = true);

MlpGradients mlp_backward(const MlpNetwork& net, const ForwardCache& cache,
                          std::span<const double> grad_output);

// grads += lambda * W on weights only (gradient of lambda/2 * ||W||^2).
void add_weight_decay(const MlpNetwork& net, MlpGradients& grads, double lambda);
double weight_norm_sq(const MlpNetwork& net);

struct AdamState {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;

    AdamState() = default;
    AdamState(const MlpNetwork& net, double lr);
};

// Adam step with bias correction; throws NonFiniteError naming the first
// offending parameter when a gradient is NaN/Inf.
void adam_update(MlpNetwork& net, const MlpGradients& grads, AdamState& state);

// Central differences with step h over every parameter and every input
// coordinate. `loss` maps the network output to a scalar.
MlpGradients finite_difference_gradients(const MlpNetwork& net, std::span<const double> x,
                                         const std::function<double(std::span<const double>)>& loss,
                                         double h = 1e-5);

// Central differences of an arbitrary scalar function of the parameters.
MlpGradients finite_difference_gradients(const MlpNetwork& net,
                                         const std::function<double(const MlpNetwork&)>& loss,
                                         double h = 1e-5);

// max |a-b| / max(|a|, |b|, floor) over all parameter entries.
double max_relative_error(const MlpGradients& a, const MlpGradients& b, double floor = 1e-8);

// ---- checkpoints -----------------------------------------------------------
//
// Text format, version 1:
//
//   aush-checkpoint 1
//   kind <mlp|nmf|...>
//   meta <key> <value>          (zero or more)
//   tensor <name> <rows> <cols>
//   <rows lines of cols values, shortest round-trip decimal>
//   ...
//   end
//
// An MLP stores `meta layers <n>`, `meta activation.<l> <sigmoid|identity>` and
// tensors `W.<l>` (out x in) and `b.<l>` (out x 1).

struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool operator==(const Tensor&) const = default;
};

struct Checkpoint {
    std::string kind;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
    const std::string& meta_value(const std::string& key) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint to_checkpoint(const MlpNetwork& net, const std::string& kind = "mlp");
// Reads the layer tensors written by to_checkpoint; `prefix` allows several
// networks in one checkpoint (e.g. "G." and "D.").
void append_network(Checkpoint& ck, const MlpNetwork& net, const std::string& prefix);
MlpNetwork network_from_checkpoint(const Checkpoint& ck, const std::string& prefix = "");

}  // namespace aush
