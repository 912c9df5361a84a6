#include "tvssm/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "tvssm/errors.hpp"

namespace tvssm {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

void NetworkSpec::validate() const {
    if (input_channels == 0 || output_channels == 0) throw InvalidArgument("network needs >= 1 input/output channel");
    if (layers.empty()) throw InvalidArgument("network needs at least one SSM layer");
    if (T == 0) throw InvalidArgument("network horizon T must be positive");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const std::string where = "layer " + std::to_string(l) + ": ";
        if (L.h == 0 || L.n == 0) throw InvalidArgument(where + "h and n must be >= 1");
        if (L.n_in == 0 || L.n_out == 0) throw InvalidArgument(where + "n_in and n_out must be >= 1");
        if (L.K_A == 0 || L.K_B == 0 || L.K_C == 0) throw InvalidArgument(where + "basis counts must be >= 1");
    }
}

std::size_t NetworkSpec::mixing_rows(std::size_t l) const {
    return l + 1 < layers.size() ? layers[l + 1].in_width() : output_channels;
}

StateBank StateBank::zeros(const NetworkSpec& spec, std::size_t batch) {
    StateBank bank;
    for (const auto& L : spec.layers) bank.layers.emplace_back(batch * L.h * L.n, 0.0);
    return bank;
}

namespace {

template <typename P, typename View>
void collect(P& params, std::vector<View>& out) {
    out.push_back({"W_in", params.W_in.data, ParamGroup::Other});
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        for (std::size_t j = 0; j < layer.neurons.size(); ++j) {
            auto& nr = layer.neurons[j];
            const std::string q = p + "neuron" + std::to_string(j) + ".";
            out.push_back({q + "A", nr.A.coeffs, ParamGroup::SSM});
            out.push_back({q + "B", nr.B.coeffs, ParamGroup::SSM});
            out.push_back({q + "C", nr.C.coeffs, ParamGroup::SSM});
            out.push_back({q + "c_bias", nr.c_bias, ParamGroup::Other});
        }
        out.push_back({p + "W", layer.W.data, ParamGroup::Other});
        if (!layer.norm.scale.empty()) {
            out.push_back({p + "norm.scale", layer.norm.scale, ParamGroup::Other});
            out.push_back({p + "norm.shift", layer.norm.shift, ParamGroup::Other});
        }
    }
}

}  // namespace

std::vector<TensorView<double>> trainable_tensors(NetworkParams& params) {
    std::vector<TensorView<double>> out;
    collect(params, out);
    return out;
}

std::vector<TensorView<const double>> trainable_tensors(const NetworkParams& params) {
    std::vector<TensorView<const double>> out;
    collect(params, out);
    return out;
}

std::size_t count_allocated_parameters(const NetworkParams& params) {
    std::size_t total = 0;
    for (const auto& t : trainable_tensors(params)) total += t.values.size();
    return total;
}

double s4d_real_discrete(std::size_t index, std::size_t n) {
    constexpr double lo = 1e-3, hi = 1e-1;
    const double frac = n > 1 ? static_cast<double>(index) / static_cast<double>(n - 1) : 0.0;
    const double dt = std::exp(std::log(lo) + frac * (std::log(hi) - std::log(lo)));
    return std::exp(-0.5 * dt);
}

namespace {

void fill_uniform(Matrix& W, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(W.cols));
    for (auto& w : W.data) w = uniform(rng, -bound, bound);
}

SSMNeuron init_neuron(const LayerSpec& L, BasisDictionary dA, BasisDictionary dB, BasisDictionary dC, Rng& rng) {
    SSMNeuron nr;
    nr.A = TimeVaryingMatrixParam::zeros(L.n, L.n, !L.dense_A, std::move(dA));
    nr.B = TimeVaryingMatrixParam::zeros(L.n, L.n_in, false, std::move(dB));
    nr.C = TimeVaryingMatrixParam::zeros(L.n_out, L.n, false, std::move(dC));
    nr.c_bias.assign(L.n_out, 0.0);

    const std::size_t KA = nr.A.basis_size(), KB = nr.B.basis_size(), KC = nr.C.basis_size();
    for (std::size_t i = 0; i < L.n; ++i) {
        const double a = s4d_real_discrete(i, L.n) / static_cast<double>(KA);
        const std::size_t e = nr.A.diagonal ? i : i * L.n + i;
        for (std::size_t k = 0; k < KA; ++k) nr.A.coeff(e, k) = a;
    }
    std::fill(nr.B.coeffs.begin(), nr.B.coeffs.end(), 1.0 / static_cast<double>(KB));
    for (std::size_t e = 0; e < nr.C.entries(); ++e) {
        const double c = uniform(rng, 0.0, 1.0) / static_cast<double>(KC);
        for (std::size_t k = 0; k < KC; ++k) nr.C.coeff(e, k) = c;
    }
    return nr;
}

}  // namespace

NetworkParams init_network(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    NetworkParams p;
    p.spec = spec;
    p.W_in = Matrix(spec.layers[0].in_width(), spec.input_channels);
    fill_uniform(p.W_in, rng);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        LayerParams layer;
        BasisDictionary sA, sB, sC;
        if (spec.share_dictionary) {
            sA = sample_dictionary(L.basis_A(), spec.T, rng);
            sB = sample_dictionary(L.basis_B(), spec.T, rng);
            sC = sample_dictionary(L.basis_C(), spec.T, rng);
        }
        for (std::size_t j = 0; j < L.h; ++j) {
            if (spec.share_dictionary) {
                layer.neurons.push_back(init_neuron(L, sA, sB, sC, rng));
            } else {
                auto dA = sample_dictionary(L.basis_A(), spec.T, rng);
                auto dB = sample_dictionary(L.basis_B(), spec.T, rng);
                auto dC = sample_dictionary(L.basis_C(), spec.T, rng);
                layer.neurons.push_back(init_neuron(L, std::move(dA), std::move(dB), std::move(dC), rng));
            }
        }
        layer.W = Matrix(spec.mixing_rows(l), L.out_width());
        fill_uniform(layer.W, rng);
        if (spec.has_norm(l)) {
            const std::size_t ch = spec.mixing_rows(l);
            layer.norm = {std::vector<double>(ch, 1.0), std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0),
                          std::vector<double>(ch, 1.0)};
        }
        p.layers.push_back(std::move(layer));
    }
    return p;
}

NetworkParams zeros_like(const NetworkParams& params) {
    NetworkParams z = params;
    std::fill(z.W_in.data.begin(), z.W_in.data.end(), 0.0);
    for (auto& layer : z.layers) {
        for (auto& nr : layer.neurons) {
            std::fill(nr.A.coeffs.begin(), nr.A.coeffs.end(), 0.0);
            std::fill(nr.B.coeffs.begin(), nr.B.coeffs.end(), 0.0);
            std::fill(nr.C.coeffs.begin(), nr.C.coeffs.end(), 0.0);
            std::fill(nr.c_bias.begin(), nr.c_bias.end(), 0.0);
        }
        std::fill(layer.W.data.begin(), layer.W.data.end(), 0.0);
        for (auto* v : {&layer.norm.scale, &layer.norm.shift, &layer.norm.running_mean, &layer.norm.running_var})
            std::fill(v->begin(), v->end(), 0.0);
    }
    return z;
}

namespace {

// out[b, r, t] = sum_c W[r, c] in[b, c, t]
SequenceBatch mix(const Matrix& W, const SequenceBatch& in) {
    SequenceBatch out(in.batch, W.rows, in.steps);
    const std::size_t T = in.steps;
    for (std::size_t b = 0; b < in.batch; ++b) {
        for (std::size_t r = 0; r < W.rows; ++r) {
            double* o = out.data.data() + (b * W.rows + r) * T;
            for (std::size_t c = 0; c < W.cols; ++c) {
                const double w = W(r, c);
                const double* x = in.data.data() + (b * in.channels + c) * T;
                for (std::size_t t = 0; t < T; ++t) o[t] += w * x[t];
            }
        }
    }
    return out;
}

// gW += g . in^T summed over batch and time; returns W^T g.
SequenceBatch mix_backward(const Matrix& W, const SequenceBatch& in, const SequenceBatch& g, Matrix& gW) {
    SequenceBatch gin(in.batch, in.channels, in.steps);
    const std::size_t T = in.steps;
    for (std::size_t b = 0; b < in.batch; ++b) {
        for (std::size_t r = 0; r < W.rows; ++r) {
            const double* gr = g.data.data() + (b * W.rows + r) * T;
            for (std::size_t c = 0; c < W.cols; ++c) {
                const double* x = in.data.data() + (b * in.channels + c) * T;
                double* gi = gin.data.data() + (b * in.channels + c) * T;
                const double w = W(r, c);
                double acc = 0.0;
                for (std::size_t t = 0; t < T; ++t) {
                    acc += gr[t] * x[t];
                    gi[t] += w * gr[t];
                }
                gW(r, c) += acc;
            }
        }
    }
    return gin;
}

void check_finite(const SequenceBatch& s, std::size_t layer, const char* stage) {
    for (double v : s.data)
        if (!std::isfinite(v))
            throw NumericFailure("non-finite value in layer " + std::to_string(layer) + " (" + stage + ")");
}

}  // namespace

SequenceBatch network_forward(const NetworkParams& params, const SequenceBatch& input, Mode mode,
                              ForwardCache* cache, const StateBank* initial, StateBank* final_states) {
    const auto& spec = params.spec;
    if (input.channels != spec.input_channels)
        throw InvalidArgument("input has " + std::to_string(input.channels) + " channels, network expects " +
                              std::to_string(spec.input_channels));
    if (input.steps == 0 || input.batch == 0) throw InvalidArgument("input batch is empty");
    if (input.steps > spec.T)
        throw InvalidArgument("input length " + std::to_string(input.steps) + " exceeds network horizon " +
                              std::to_string(spec.T));
    if (initial && initial->layers.size() != spec.layers.size())
        throw InvalidArgument("initial state bank does not match the network");

    const std::size_t Bsz = input.batch;
    const std::size_t T = input.steps;
    if (cache) {
        cache->mode = mode;
        cache->steps = T;
        cache->input = input;
        cache->layers.assign(spec.layers.size(), {});
    }
    if (final_states) *final_states = StateBank::zeros(spec, Bsz);

    SequenceBatch z = mix(params.W_in, input);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        const auto& layer = params.layers[l];
        const std::size_t n = L.n;

        std::vector<MaterializedNeuron> mats;
        std::vector<BasisGrid> gA, gB, gC;
        mats.reserve(L.h);
        for (const auto& nr : layer.neurons) {
            gA.push_back(nr.A.dict.evaluate_grid(T));
            gB.push_back(nr.B.dict.evaluate_grid(T));
            gC.push_back(nr.C.dict.evaluate_grid(T));
            mats.push_back({materialize(nr.A, gA.back()), materialize(nr.B, gB.back()), materialize(nr.C, gC.back()),
                            nr.c_bias});
        }

        // Large state trajectories are not kept; the backward pass recomputes them per (sample, neuron).
        const bool keep = cache && Bsz * L.h * T * n <= kMaxCachedStates;
        SequenceBatch s(Bsz, L.out_width(), T);
        std::vector<double> states(keep ? Bsz * L.h * T * n : T * n);
        for (std::size_t b = 0; b < Bsz; ++b) {
            for (std::size_t j = 0; j < L.h; ++j) {
                const double* u = z.data.data() + (b * z.channels + j * L.n_in) * T;
                double* y = s.data.data() + (b * s.channels + j * L.n_out) * T;
                double* st = states.data() + (keep ? (b * L.h + j) * T * n : 0);
                const double* x0 = initial ? initial->layers[l].data() + (b * L.h + j) * n : nullptr;
                recurrence_forward(mats[j], T, u, x0, st, y);
                if (final_states)
                    std::copy(st + (T - 1) * n, st + T * n, final_states->layers[l].data() + (b * L.h + j) * n);
            }
        }
        check_finite(s, l, "ssm");

        SequenceBatch a = s;
        if (L.activation == Activation::GELU)
            for (auto& v : a.data) v = gelu(v);

        SequenceBatch m = mix(layer.W, a);
        check_finite(m, l, "mixing");

        SequenceBatch next;
        std::vector<double> mean, var, inv_std;
        SequenceBatch xhat;
        if (spec.has_norm(l)) {
            const std::size_t ch = m.channels;
            next = SequenceBatch(Bsz, ch, T);
            mean.assign(ch, 0.0);
            var.assign(ch, 0.0);
            inv_std.assign(ch, 0.0);
            if (mode == Mode::Train) xhat = SequenceBatch(Bsz, ch, T);
            const double count = static_cast<double>(Bsz * T);
            for (std::size_t c = 0; c < ch; ++c) {
                double mu, v;
                if (mode == Mode::Train) {
                    double sum = 0.0;
                    for (std::size_t b = 0; b < Bsz; ++b)
                        for (double x : m.channel(b, c)) sum += x;
                    mu = sum / count;
                    double sq = 0.0;
                    for (std::size_t b = 0; b < Bsz; ++b)
                        for (double x : m.channel(b, c)) sq += (x - mu) * (x - mu);
                    v = sq / count;
                } else {
                    mu = layer.norm.running_mean[c];
                    v = layer.norm.running_var[c];
                }
                const double is = 1.0 / std::sqrt(v + kNormEpsilon);
                mean[c] = mu;
                var[c] = v;
                inv_std[c] = is;
                const double g = layer.norm.scale[c], beta = layer.norm.shift[c];
                for (std::size_t b = 0; b < Bsz; ++b) {
                    const auto in = m.channel(b, c);
                    auto out = next.channel(b, c);
                    for (std::size_t t = 0; t < T; ++t) {
                        const double xh = (in[t] - mu) * is;
                        if (mode == Mode::Train) xhat(b, c, t) = xh;
                        out[t] = g * xh + beta;
                    }
                }
            }
        } else {
            next = m;
        }

        if (cache) {
            auto& lc = cache->layers[l];
            lc.neurons = std::move(mats);
            lc.grid_A = std::move(gA);
            lc.grid_B = std::move(gB);
            lc.grid_C = std::move(gC);
            lc.input = std::move(z);
            if (keep) lc.states = std::move(states);
            if (initial) lc.initial_states = initial->layers[l];
            lc.ssm_out = std::move(s);
            lc.act_out = std::move(a);
            lc.mixed = std::move(m);
            lc.normalized = std::move(xhat);
            lc.batch_mean = std::move(mean);
            lc.batch_var = std::move(var);
            lc.inv_std = std::move(inv_std);
        }
        z = std::move(next);
    }
    return z;
}

void network_backward(const NetworkParams& params, const ForwardCache& cache, const SequenceBatch& grad_output,
                      NetworkParams& grads) {
    const auto& spec = params.spec;
    if (cache.layers.size() != spec.layers.size()) throw InvalidArgument("forward cache does not match the network");
    const std::size_t T = cache.steps;
    const std::size_t Bsz = cache.input.batch;
    if (grad_output.batch != Bsz || grad_output.steps != T || grad_output.channels != spec.output_channels)
        throw InvalidArgument("output gradient shape does not match the forward pass");

    SequenceBatch g = grad_output;
    for (std::size_t l = spec.layers.size(); l-- > 0;) {
        const auto& L = spec.layers[l];
        const auto& layer = params.layers[l];
        auto& glayer = grads.layers[l];
        const auto& lc = cache.layers[l];

        if (spec.has_norm(l)) {
            if (cache.mode != Mode::Train) throw InvalidArgument("backward through normalization needs a train-mode cache");
            const std::size_t ch = lc.mixed.channels;
            const double count = static_cast<double>(Bsz * T);
            SequenceBatch gm(Bsz, ch, T);
            for (std::size_t c = 0; c < ch; ++c) {
                const double gamma = layer.norm.scale[c];
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t b = 0; b < Bsz; ++b) {
                    const auto go = g.channel(b, c);
                    const auto xh = lc.normalized.channel(b, c);
                    for (std::size_t t = 0; t < T; ++t) {
                        sum_g += go[t];
                        sum_gx += go[t] * xh[t];
                    }
                }
                glayer.norm.shift[c] += sum_g;
                glayer.norm.scale[c] += sum_gx;
                // dL/dxhat = gamma * g; closed-form batch-norm input gradient
                const double k = gamma * lc.inv_std[c] / count;
                for (std::size_t b = 0; b < Bsz; ++b) {
                    const auto go = g.channel(b, c);
                    const auto xh = lc.normalized.channel(b, c);
                    auto out = gm.channel(b, c);
                    for (std::size_t t = 0; t < T; ++t) out[t] = k * (count * go[t] - sum_g - xh[t] * sum_gx);
                }
            }
            g = std::move(gm);
        }

        SequenceBatch ga = mix_backward(layer.W, lc.act_out, g, glayer.W);
        if (L.activation == Activation::GELU)
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= gelu_derivative(lc.ssm_out.data[i]);

        SequenceBatch gz(Bsz, L.in_width(), T);
        std::vector<double> st(T * L.n), y_scratch(L.n_out * T);
        for (std::size_t j = 0; j < L.h; ++j) {
            const auto& mat = lc.neurons[j];
            ElementGradients eg(mat);
            for (std::size_t b = 0; b < Bsz; ++b) {
                const double* u = lc.input.data.data() + (b * lc.input.channels + j * L.n_in) * T;
                const double* x0 = lc.initial_states.empty() ? nullptr : lc.initial_states.data() + (b * L.h + j) * L.n;
                const double* states = st.data();
                if (lc.states.empty())
                    recurrence_forward(mat, T, u, x0, st.data(), y_scratch.data());
                else
                    states = lc.states.data() + (b * L.h + j) * T * L.n;
                const double* gy = ga.data.data() + (b * ga.channels + j * L.n_out) * T;
                double* gu = gz.data.data() + (b * gz.channels + j * L.n_in) * T;
                recurrence_backward(mat, T, u, states, gy, gu, eg, nullptr);
            }
            auto& gn = glayer.neurons[j];
            accumulate_coefficient_gradient(lc.grid_A[j], mat.A.entries(), eg.A, gn.A.coeffs);
            accumulate_coefficient_gradient(lc.grid_B[j], mat.B.entries(), eg.B, gn.B.coeffs);
            accumulate_coefficient_gradient(lc.grid_C[j], mat.C.entries(), eg.C, gn.C.coeffs);
            for (std::size_t o = 0; o < gn.c_bias.size(); ++o) gn.c_bias[o] += eg.c_bias[o];
        }

        if (l == 0) {
            mix_backward(params.W_in, cache.input, gz, grads.W_in);
        } else {
            g = std::move(gz);
        }
    }
}

void update_running_statistics(NetworkParams& params, const ForwardCache& cache, double momentum) {
    if (cache.mode != Mode::Train) return;
    const double count = static_cast<double>(cache.input.batch * cache.steps);
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (!params.spec.has_norm(l)) continue;
        auto& norm = params.layers[l].norm;
        const auto& lc = cache.layers[l];
        for (std::size_t c = 0; c < norm.running_mean.size(); ++c) {
            norm.running_mean[c] = (1.0 - momentum) * norm.running_mean[c] + momentum * lc.batch_mean[c];
            norm.running_var[c] = (1.0 - momentum) * norm.running_var[c] + momentum * lc.batch_var[c] * unbias;
        }
    }
}

std::size_t neuron_parameters(const LayerSpec& L) {
    const std::size_t a = L.dense_A ? L.n * L.n : L.n;
    return a * L.basis_A() + L.n_in * L.n * L.basis_B() + L.n * L.n_out * L.basis_C() + L.n_out;
}

ParameterCount count_parameters(const NetworkSpec& spec) {
    spec.validate();
    ParameterCount pc;
    pc.W = spec.layers[0].in_width() * spec.input_channels;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        const std::size_t a = L.dense_A ? L.n * L.n : L.n;
        pc.A += L.h * a * L.basis_A();
        pc.B += L.h * L.n_in * L.n * L.basis_B();
        pc.C += L.h * L.n * L.n_out * L.basis_C();
        pc.c_bias += L.h * L.n_out;
        pc.W += spec.mixing_rows(l) * L.out_width();
        if (spec.has_norm(l)) pc.norm += 2 * spec.layers[l + 1].h * spec.layers[l + 1].n_in;
        pc.per_neuron.push_back(neuron_parameters(L));
    }
    return pc;
}

MacCount count_macs(const NetworkSpec& spec, std::size_t T) {
    spec.validate();
    MacCount mc;
    std::size_t mixing_per_step = spec.layers[0].in_width() * spec.input_channels;
    std::size_t rec_per_step = 0, norm_per_step = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        const std::size_t eA = L.dense_A ? L.n * L.n : L.n;
        const std::size_t eB = L.n * L.n_in;
        const std::size_t eC = L.n_out * L.n;
        rec_per_step += L.h * (eA + eB + eC);
        mixing_per_step += spec.mixing_rows(l) * L.out_width();
        if (spec.has_norm(l)) norm_per_step += spec.mixing_rows(l);

        std::size_t pre = 0, store = 0;
        for (auto [tv, e, K] : {std::tuple{L.tv_A, eA, L.K_A}, std::tuple{L.tv_B, eB, L.K_B},
                                std::tuple{L.tv_C, eC, L.K_C}}) {
            if (tv && K > 1) {
                pre += e * K * T;
                store += e * T;
            } else {
                store += e;
            }
        }
        mc.precompute += L.h * pre;
        mc.matrix_storage += L.h * store;
    }
    mc.recurrence = rec_per_step * T;
    mc.mixing = mixing_per_step * T;
    mc.norm = norm_per_step * T;
    return mc;
}

std::size_t match_param_budget(std::size_t n_vary, std::size_t K_A, std::size_t K_B, std::size_t K_C) {
    if (n_vary == 0 || K_A == 0 || K_B == 0 || K_C == 0)
        throw InvalidArgument("match_param_budget: n_vary and basis counts must be positive");
    const std::size_t numer = n_vary * (K_A + K_B + K_C);
    if (numer % 3 != 0) {
        throw InvalidArgument("match_param_budget: n_invar = " + std::to_string(numer) + "/3 = " +
                              std::to_string(static_cast<double>(numer) / 3.0) + " is not an integer");
    }
    return numer / 3;
}

}  // namespace tvssm
