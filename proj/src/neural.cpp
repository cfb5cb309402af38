#include "aush/neural.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace aush {

namespace {

// Inputs with at most this fraction of nonzeros take the sparse first-layer path.
constexpr double kSparseInputDensity = 0.25;

double activate(Activation a, double z) { return a == Activation::Sigmoid ? sigmoid(z) : z; }

// Derivative expressed through the post-activation value y.
double activation_grad(Activation a, double y) { return a == Activation::Sigmoid ? y * (1.0 - y) : 1.0; }

std::string format_double(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, p);
}

double parse_double_strict(const std::string& s) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::runtime_error("checkpoint: bad number '" + s + "'");
    return x;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Sigmoid ? "sigmoid" : "identity"; }

Activation parse_activation(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
    : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0), activation(act) {}

// ---- gradients -------------------------------------------------------------

void MlpGradients::add_scaled(const MlpGradients& other, double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += s * other.weights[l][i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += s * other.bias[l][i];
    }
}

void MlpGradients::scale(double s) {
    for (auto& w : weights)
        for (auto& x : w) x *= s;
    for (auto& b : bias)
        for (auto& x : b) x *= s;
}

double MlpGradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : weights)
        for (double x : w) m = std::max(m, std::abs(x));
    for (const auto& b : bias)
        for (double x : b) m = std::max(m, std::abs(x));
    return m;
}

// ---- network ---------------------------------------------------------------

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        if (L.weights.size() != L.in * L.out || L.bias.size() != L.out)
            throw std::invalid_argument("layer " + std::to_string(l) + ": parameter shape mismatch");
        if (l > 0 && layers_[l - 1].out != L.in)
            throw std::invalid_argument("layer " + std::to_string(l) + ": input dim does not chain");
    }
}

MlpNetwork MlpNetwork::create(std::span<const std::size_t> dims, Activation hidden_act,
                              Activation output_act, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("MlpNetwork::create needs input and output dims");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] == 0 || dims[l + 1] == 0) throw std::invalid_argument("MlpNetwork::create: zero-width layer");
        const bool last = l + 2 == dims.size();
        DenseLayer layer(dims[l], dims[l + 1], last ? output_act : hidden_act);
        const double a = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        std::uniform_real_distribution<double> init(-a, a);
        for (double& w : layer.weights) w = init(rng);
        layers.push_back(std::move(layer));
    }
    return MlpNetwork(std::move(layers));
}

std::size_t MlpNetwork::input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
std::size_t MlpNetwork::output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

std::size_t MlpNetwork::num_parameters() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.weights.size() + L.bias.size();
    return n;
}

DenseLayer& MlpNetwork::mutable_layer(std::size_t l) {
    ++version_;
    return layers_.at(l);
}

MlpGradients MlpNetwork::zero_gradients() const {
    MlpGradients g;
    for (const auto& L : layers_) {
        g.weights.emplace_back(L.weights.size(), 0.0);
        g.bias.emplace_back(L.bias.size(), 0.0);
    }
    g.input.assign(input_dim(), 0.0);
    return g;
}

bool MlpNetwork::all_finite() const {
    for (const auto& L : layers_) {
        for (double w : L.weights)
            if (!std::isfinite(w)) return false;
        for (double b : L.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

bool MlpNetwork::operator==(const MlpNetwork& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& a = layers_[l];
        const auto& b = other.layers_[l];
        if (a.in != b.in || a.out != b.out || a.activation != b.activation || a.weights != b.weights ||
            a.bias != b.bias)
            return false;
    }
    return true;
}

// ---- forward / backward ----------------------------------------------------

ForwardCache mlp_forward(const MlpNetwork& net, std::span<const double> x) {
    if (net.num_layers() == 0) throw std::invalid_argument("mlp_forward: empty network");
    if (x.size() != net.input_dim())
        throw std::invalid_argument("mlp_forward: input dim " + std::to_string(x.size()) + " != " +
                                    std::to_string(net.input_dim()));
    ForwardCache cache;
    cache.owner = &net;
    cache.version = net.version();
    cache.values.reserve(net.num_layers() + 1);
    cache.values.emplace_back(x.begin(), x.end());

    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) cache.input_support.push_back(i);
    cache.sparse_input = static_cast<double>(cache.input_support.size()) <=
                         kSparseInputDensity * static_cast<double>(x.size());
    if (!cache.sparse_input) cache.input_support.clear();

    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& L = net.layer(l);
        const auto& in = cache.values.back();
        std::vector<double> out(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double* row = &L.weights[o * L.in];
            double z = L.bias[o];
            if (l == 0 && cache.sparse_input) {
                for (std::size_t i : cache.input_support) z += row[i] * in[i];
            } else {
                for (std::size_t i = 0; i < L.in; ++i) z += row[i] * in[i];
            }
            out[o] = activate(L.activation, z);
        }
        cache.values.push_back(std::move(out));
    }
    return cache;
}

void mlp_backward_accumulate(const MlpNetwork& net, const ForwardCache& cache,
                             std::span<const double> grad_output, MlpGradients& acc, bool want_input_grad) {
    if (cache.owner != &net || cache.version != net.version() || cache.values.size() != net.num_layers() + 1)
        throw ContractViolation("mlp_backward: forward cache does not belong to the current network state");
    if (grad_output.size() != net.output_dim())
        throw std::invalid_argument("mlp_backward: grad_output dim mismatch");
    if (acc.weights.size() != net.num_layers()) acc = net.zero_gradients();

    std::vector<double> delta(grad_output.begin(), grad_output.end());
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        const auto& L = net.layer(l);
        const auto& y = cache.values[l + 1];
        const auto& in = cache.values[l];
        for (std::size_t o = 0; o < L.out; ++o) delta[o] *= activation_grad(L.activation, y[o]);

        auto& gw = acc.weights[l];
        auto& gb = acc.bias[l];
        const bool sparse = l == 0 && cache.sparse_input;
        for (std::size_t o = 0; o < L.out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            if (d == 0.0) continue;
            double* grow = &gw[o * L.in];
            if (sparse) {
                for (std::size_t i : cache.input_support) grow[i] += d * in[i];
            } else {
                for (std::size_t i = 0; i < L.in; ++i) grow[i] += d * in[i];
            }
        }
        if (l == 0 && !want_input_grad) {
            acc.input.clear();
            return;
        }
        std::vector<double> prev(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* row = &L.weights[o * L.in];
            for (std::size_t i = 0; i < L.in; ++i) prev[i] += row[i] * d;
        }
        delta = std::move(prev);
    }
    acc.input = std::move(delta);
}

MlpGradients mlp_backward(const MlpNetwork& net, const ForwardCache& cache, std::span<const double> grad_output) {
    MlpGradients g = net.zero_gradients();
    mlp_backward_accumulate(net, cache, grad_output, g);
    return g;
}

void add_weight_decay(const MlpNetwork& net, MlpGradients& grads, double lambda) {
    if (lambda == 0.0) return;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& w = net.layer(l).weights;
        for (std::size_t i = 0; i < w.size(); ++i) grads.weights[l][i] += lambda * w[i];
    }
}

double weight_norm_sq(const MlpNetwork& net) {
    double s = 0.0;
    for (const auto& L : net.layers())
        for (double w : L.weights) s += w * w;
    return s;
}

// ---- Adam ------------------------------------------------------------------

AdamState::AdamState(const MlpNetwork& net, double lr) : learning_rate(lr) {
    for (const auto& L : net.layers()) {
        m_w.emplace_back(L.weights.size(), 0.0);
        v_w.emplace_back(L.weights.size(), 0.0);
        m_b.emplace_back(L.bias.size(), 0.0);
        v_b.emplace_back(L.bias.size(), 0.0);
    }
}

namespace {

void check_finite(std::span<const double> g, const char* what, std::size_t layer) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
            std::ostringstream os;
            os << "adam_update: non-finite gradient " << g[i] << " in " << what << " of layer " << layer
               << " at index " << i;
            throw NonFiniteError(os.str());
        }
    }
}

void adam_block(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                double lr_t, double b1, double b2, double eps) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
    }
}

}  // namespace

void adam_update(MlpNetwork& net, const MlpGradients& grads, AdamState& state) {
    if (state.m_w.size() != net.num_layers() || grads.weights.size() != net.num_layers())
        throw std::invalid_argument("adam_update: state/gradient shape does not match network");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        if (grads.weights[l].size() != net.layer(l).weights.size() || grads.bias[l].size() != net.layer(l).bias.size())
            throw std::invalid_argument("adam_update: gradient shape mismatch at layer " + std::to_string(l));
        check_finite(grads.weights[l], "weights", l);
        check_finite(grads.bias[l], "bias", l);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    // folded bias correction: lr * sqrt(bc2) / bc1, epsilon scaled to match
    // the textbook form m_hat / (sqrt(v_hat) + eps)
    const double lr_t = state.learning_rate * std::sqrt(bc2) / bc1;
    const double eps_t = state.epsilon * std::sqrt(bc2);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& L = net.mutable_layer(l);
        adam_block(L.weights, grads.weights[l], state.m_w[l], state.v_w[l], lr_t, state.beta1, state.beta2, eps_t);
        adam_block(L.bias, grads.bias[l], state.m_b[l], state.v_b[l], lr_t, state.beta1, state.beta2, eps_t);
    }
    if (!net.all_finite()) throw NonFiniteError("adam_update: parameters became non-finite");
}

// ---- finite differences ----------------------------------------------------

MlpGradients finite_difference_gradients(const MlpNetwork& net,
                                         const std::function<double(const MlpNetwork&)>& loss, double h) {
    MlpNetwork probe = net;
    MlpGradients g = net.zero_gradients();
    for (std::size_t l = 0; l < probe.num_layers(); ++l) {
        auto fd = [&](auto member, std::vector<double>& out) {
            const std::size_t n = (probe.layer(l).*member).size();
            for (std::size_t i = 0; i < n; ++i) {
                const double orig = (probe.layer(l).*member)[i];
                (probe.mutable_layer(l).*member)[i] = orig + h;
                const double up = loss(probe);
                (probe.mutable_layer(l).*member)[i] = orig - h;
                const double down = loss(probe);
                (probe.mutable_layer(l).*member)[i] = orig;
                out[i] = (up - down) / (2.0 * h);
            }
        };
        fd(&DenseLayer::weights, g.weights[l]);
        fd(&DenseLayer::bias, g.bias[l]);
    }
    return g;
}

MlpGradients finite_difference_gradients(const MlpNetwork& net, std::span<const double> x,
                                         const std::function<double(std::span<const double>)>& loss, double h) {
    std::vector<double> input(x.begin(), x.end());
    MlpGradients g = finite_difference_gradients(
        net, [&](const MlpNetwork& n) { return loss(mlp_forward(n, input).output()); }, h);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double orig = input[i];
        input[i] = orig + h;
        const double up = loss(mlp_forward(net, input).output());
        input[i] = orig - h;
        const double down = loss(mlp_forward(net, input).output());
        input[i] = orig;
        g.input[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_relative_error(const MlpGradients& a, const MlpGradients& b, double floor) {
    double worst = 0.0;
    auto cmp = [&](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() != y.size()) throw std::invalid_argument("max_relative_error: shape mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double denom = std::max({std::abs(x[i]), std::abs(y[i]), floor});
            worst = std::max(worst, std::abs(x[i] - y[i]) / denom);
        }
    };
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        cmp(a.weights[l], b.weights[l]);
        cmp(a.bias[l], b.bias[l]);
    }
    return worst;
}

// ---- checkpoints -----------------------------------------------------------

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("checkpoint: missing meta key '" + key + "'");
    return it->second;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    out << "aush-checkpoint 1\n";
    out << "kind " << ck.kind << '\n';
    for (const auto& [k, v] : ck.meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& [name, t] : ck.tensors) {
        out << "tensor " << name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (std::size_t r = 0; r < t.rows; ++r) {
            for (std::size_t c = 0; c < t.cols; ++c) {
                if (c) out << ' ';
                out << format_double(t.values[r * t.cols + c]);
            }
            out << '\n';
        }
    }
    out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
    Checkpoint ck;
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "aush-checkpoint")
        throw std::runtime_error("checkpoint: missing 'aush-checkpoint' header");
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    if (!(in >> word) || word != "kind" || !(in >> ck.kind)) throw std::runtime_error("checkpoint: missing kind");
    while (in >> word) {
        if (word == "end") return ck;
        if (word == "meta") {
            std::string k, v;
            in >> k;
            std::getline(in >> std::ws, v);
            ck.meta[k] = v;
        } else if (word == "tensor") {
            std::string name;
            Tensor t;
            if (!(in >> name >> t.rows >> t.cols)) throw std::runtime_error("checkpoint: bad tensor header");
            t.values.resize(t.rows * t.cols);
            std::string tok;
            for (double& x : t.values) {
                if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
                x = parse_double_strict(tok);
            }
            ck.tensors.emplace_back(std::move(name), std::move(t));
        } else {
            throw std::runtime_error("checkpoint: unexpected token '" + word + "'");
        }
    }
    throw std::runtime_error("checkpoint: missing 'end'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in);
}

void append_network(Checkpoint& ck, const MlpNetwork& net, const std::string& prefix) {
    ck.meta[prefix + "layers"] = std::to_string(net.num_layers());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& L = net.layer(l);
        const auto idx = std::to_string(l);
        ck.meta[prefix + "activation." + idx] = to_string(L.activation);
        ck.tensors.push_back({prefix + "W." + idx, Tensor{L.out, L.in, L.weights}});
        ck.tensors.push_back({prefix + "b." + idx, Tensor{L.out, 1, L.bias}});
    }
}

Checkpoint to_checkpoint(const MlpNetwork& net, const std::string& kind) {
    Checkpoint ck;
    ck.kind = kind;
    append_network(ck, net, "");
    return ck;
}

MlpNetwork network_from_checkpoint(const Checkpoint& ck, const std::string& prefix) {
    const auto n = std::stoul(ck.meta_value(prefix + "layers"));
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < n; ++l) {
        const auto idx = std::to_string(l);
        const auto& W = ck.tensor(prefix + "W." + idx);
        const auto& b = ck.tensor(prefix + "b." + idx);
        if (b.rows != W.rows || b.cols != 1) throw std::runtime_error("checkpoint: bias shape mismatch at layer " + idx);
        DenseLayer L(W.cols, W.rows, parse_activation(ck.meta_value(prefix + "activation." + idx)));
        L.weights = W.values;
        L.bias = b.values;
        layers.push_back(std::move(L));
    }
    return MlpNetwork(std::move(layers));
}

}  // namespace aush
