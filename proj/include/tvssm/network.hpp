#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tvssm/rng.hpp"
#include "tvssm/ssm.hpp"
#include "tvssm/tensor.hpp"

namespace tvssm {

enum class Activation { Identity, GELU };

double gelu(double x);
double gelu_derivative(double x);

struct LayerSpec {
    std::size_t h = 1;      // neurons
    std::size_t n = 1;      // state dimension per neuron
    std::size_t n_in = 1;   // input channels per neuron
    std::size_t n_out = 1;  // output channels per neuron
    std::size_t K_A = 1, K_B = 1, K_C = 1;
    bool tv_A = true, tv_B = true, tv_C = true;
    Activation activation = Activation::Identity;
    bool dense_A = false;

    // A time-invariant role is a K=1 constant-basis role.
    std::size_t basis_A() const { return tv_A ? K_A : 1; }
    std::size_t basis_B() const { return tv_B ? K_B : 1; }
    std::size_t basis_C() const { return tv_C ? K_C : 1; }
    std::size_t in_width() const { return h * n_in; }
    std::size_t out_width() const { return h * n_out; }

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::size_t input_channels = 1;
    std::size_t output_channels = 1;
    std::vector<LayerSpec> layers;
    std::size_t T = 128;  // horizon the dictionaries are sampled for
    bool use_norm = true;
    bool share_dictionary = false;  // one dictionary per (layer, role) instead of per (neuron, role)

    void validate() const;
    // Width of the signal entering layer l + 1 (or the output channels for the last layer).
    std::size_t mixing_rows(std::size_t l) const;
    bool has_norm(std::size_t l) const { return use_norm && l + 1 < layers.size(); }

    bool operator==(const NetworkSpec&) const = default;
};

struct NormParams {
    std::vector<double> scale, shift;
    std::vector<double> running_mean, running_var;  // buffers, not trainable

    bool operator==(const NormParams&) const = default;
};

struct LayerParams {
    std::vector<SSMNeuron> neurons;
    Matrix W;         // mixing_rows(l) x out_width()
    NormParams norm;  // empty when the layer has no normalization

    bool operator==(const LayerParams&) const = default;
};

struct NetworkParams {
    NetworkSpec spec;
    Matrix W_in;  // layers[0].in_width() x input_channels
    std::vector<LayerParams> layers;

    bool operator==(const NetworkParams&) const = default;
};

enum class ParamGroup { SSM, Other };

template <typename T>
struct TensorView {
    std::string name;
    std::span<T> values;
    ParamGroup group;
};

// Every trainable tensor, in a fixed order. Two structurally equal networks yield congruent lists.
std::vector<TensorView<double>> trainable_tensors(NetworkParams& params);
std::vector<TensorView<const double>> trainable_tensors(const NetworkParams& params);
std::size_t count_allocated_parameters(const NetworkParams& params);

// Deterministic initialization; consumes rng in a fixed order.
NetworkParams init_network(const NetworkSpec& spec, Rng& rng);
// Structural copy with every trainable value (and buffer) set to zero.
NetworkParams zeros_like(const NetworkParams& params);

// exp(-dt/2) with dt log-spaced over [1e-3, 1e-1] across state indices.
double s4d_real_discrete(std::size_t index, std::size_t n);

enum class Mode { Train, Eval };

// Per (layer, sample, neuron) SSM states; layout [layer][(b * h + j) * n + i].
struct StateBank {
    std::vector<std::vector<double>> layers;

    static StateBank zeros(const NetworkSpec& spec, std::size_t batch);
};

struct LayerCache {
    std::vector<MaterializedNeuron> neurons;
    std::vector<BasisGrid> grid_A, grid_B, grid_C;
    SequenceBatch input;     // into the SSM neurons
    std::vector<double> states;          // (b, j) -> T x n block; empty when recomputed in backward
    std::vector<double> initial_states;  // StateBank layout; empty means zero initial state
    SequenceBatch ssm_out;   // before activation
    SequenceBatch act_out;
    SequenceBatch mixed;     // after W, before normalization
    SequenceBatch normalized;  // x-hat, train mode only
    std::vector<double> batch_mean, batch_var, inv_std;
};

// Above this many state scalars per layer the forward cache drops trajectories.
inline constexpr std::size_t kMaxCachedStates = std::size_t{1} << 22;

struct ForwardCache {
    Mode mode = Mode::Eval;
    std::size_t steps = 0;
    SequenceBatch input;
    std::vector<LayerCache> layers;
};

// SSM -> activation -> mixing W -> batch norm (between layers); the last mixing matrix is the output head.
SequenceBatch network_forward(const NetworkParams& params, const SequenceBatch& input, Mode mode = Mode::Eval,
                              ForwardCache* cache = nullptr, const StateBank* initial = nullptr,
                              StateBank* final_states = nullptr);

// Accumulates dL/dtheta into grads (shaped like params) given dL/doutput.
void network_backward(const NetworkParams& params, const ForwardCache& cache, const SequenceBatch& grad_output,
                      NetworkParams& grads);

void update_running_statistics(NetworkParams& params, const ForwardCache& cache, double momentum = 0.1);

inline constexpr double kNormEpsilon = 1e-5;

struct ParameterCount {
    std::size_t A = 0, B = 0, C = 0, c_bias = 0, W = 0, norm = 0;
    std::vector<std::size_t> per_neuron;  // one entry per layer

    std::size_t ssm() const { return A + B + C + c_bias; }
    std::size_t total() const { return ssm() + W + norm; }
};

ParameterCount count_parameters(const NetworkSpec& spec);
// p = n(K_A + K_B + K_C) + 1 for diagonal A with n_in = n_out = 1.
std::size_t neuron_parameters(const LayerSpec& layer);

struct MacCount {
    std::size_t recurrence = 0;  // A x, B u, C x over T steps
    std::size_t mixing = 0;
    std::size_t norm = 0;
    std::size_t precompute = 0;      // materializing time-varying matrices, excluded from total
    std::size_t matrix_storage = 0;  // scalars held for A(t), B(t), C(t)

    std::size_t total() const { return recurrence + mixing + norm; }
};

MacCount count_macs(const NetworkSpec& spec, std::size_t T);

// n_invar = n_vary (K_A + K_B + K_C) / 3.
std::size_t match_param_budget(std::size_t n_vary, std::size_t K_A, std::size_t K_B, std::size_t K_C);

}  // namespace tvssm
