#include "tvssm/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tvssm/errors.hpp"

namespace tvssm {

namespace {

// Four interleaved partial sums; the recurrence is latency-bound on these reductions.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

}  // namespace

TimeVaryingMatrixParam TimeVaryingMatrixParam::zeros(std::size_t rows, std::size_t cols, bool diagonal,
                                                     BasisDictionary dict) {
    if (diagonal && rows != cols) throw InvalidArgument("diagonal matrix parameter must be square");
    TimeVaryingMatrixParam p;
    p.rows = rows;
    p.cols = cols;
    p.diagonal = diagonal;
    p.dict = std::move(dict);
    p.coeffs.assign(p.entries() * p.dict.size(), 0.0);
    return p;
}

void TimeVaryingMatrixParam::validate() const {
    if (diagonal && rows != cols) throw InvalidArgument("diagonal matrix parameter must be square");
    if (coeffs.size() != entries() * dict.size())
        throw InvalidArgument("coefficient tensor size " + std::to_string(coeffs.size()) + " does not match " +
                              std::to_string(entries()) + " entries x K=" + std::to_string(dict.size()));
}

double MaterializedMatrix::element(std::size_t i, std::size_t j, std::size_t t) const {
    if (diagonal) return i == j ? at(t)[i] : 0.0;
    return at(t)[i * cols + j];
}

MaterializedMatrix materialize(const TimeVaryingMatrixParam& param, const BasisGrid& grid) {
    param.validate();
    if (grid.size != param.dict.size()) throw InvalidArgument("basis grid does not match the parameter dictionary");
    const std::size_t E = param.entries();
    const std::size_t K = grid.size;
    MaterializedMatrix m{param.rows, param.cols, param.diagonal, grid.steps,
                         std::vector<double>(grid.steps * E)};
    for (std::size_t t = 0; t < grid.steps; ++t) {
        double* out = m.values.data() + t * E;
        for (std::size_t e = 0; e < E; ++e) {
            const double* c = param.coeffs.data() + e * K;
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += c[k] * grid.data[k * grid.steps + t];
            out[e] = acc;
        }
    }
    return m;
}

MaterializedMatrix materialize(const TimeVaryingMatrixParam& param, std::size_t steps) {
    return materialize(param, param.dict.evaluate_grid(steps));
}

void accumulate_coefficient_gradient(const BasisGrid& grid, std::size_t entries, std::span<const double> elem_grad,
                                     std::span<double> coeff_grad) {
    const std::size_t K = grid.size;
    const std::size_t T = grid.steps;
    if (elem_grad.size() != T * entries || coeff_grad.size() != entries * K)
        throw InvalidArgument("accumulate_coefficient_gradient: shape mismatch");
    for (std::size_t k = 0; k < K; ++k) {
        const double* phi = grid.data.data() + k * T;
        for (std::size_t t = 0; t < T; ++t) {
            const double w = phi[t];
            const double* g = elem_grad.data() + t * entries;
            for (std::size_t e = 0; e < entries; ++e) coeff_grad[e * K + k] += w * g[e];
        }
    }
}

double coefficient_budget(const TimeVaryingMatrixParam& A, std::size_t i) {
    const std::size_t K = A.dict.size();
    const std::size_t e = A.diagonal ? i : i * A.cols + i;
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::fabs(A.coeffs[e * K + k]);
    return sum;
}

bool stability_project(TimeVaryingMatrixParam& A, double eps) {
    if (!A.diagonal) throw InvalidArgument("stability_project requires a diagonal A");
    if (!(eps > 0.0)) throw InvalidArgument("stability_project requires eps > 0");
    const std::size_t K = A.dict.size();
    bool projected = false;
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double budget = coefficient_budget(A, i);
        // budget == 1 already violates the strict bound
        if (budget < 1.0) continue;
        const double scale = 1.0 / (budget + eps);
        for (std::size_t k = 0; k < K; ++k) A.coeffs[i * K + k] *= scale;
        projected = true;
    }
    return projected;
}

void SSMNeuron::validate() const {
    A.validate();
    B.validate();
    C.validate();
    if (A.rows != A.cols) throw InvalidArgument("A must be square");
    if (B.rows != A.rows) throw InvalidArgument("B row count must equal state dimension");
    if (C.cols != A.rows) throw InvalidArgument("C column count must equal state dimension");
    if (B.diagonal || C.diagonal) throw InvalidArgument("B and C are dense");
    if (c_bias.size() != C.rows) throw InvalidArgument("c_bias length must equal n_out");
}

MaterializedNeuron materialize(const SSMNeuron& neuron, std::size_t steps) {
    neuron.validate();
    return {materialize(neuron.A, steps), materialize(neuron.B, steps), materialize(neuron.C, steps),
            neuron.c_bias};
}

void recurrence_forward(const MaterializedNeuron& m, std::size_t steps, const double* u, const double* x0,
                        double* states, double* y) {
    const std::size_t n = m.n();
    const std::size_t nin = m.n_in();
    const std::size_t nout = m.n_out();
    const std::size_t T = steps;
    const bool diag = m.A.diagonal;

    if (x0)
        std::copy(x0, x0 + n, states);
    else
        std::fill(states, states + n, 0.0);

    auto emit = [&](std::size_t t) {
        const double* c = m.C.at(t);
        const double* x = states + t * n;
        for (std::size_t o = 0; o < nout; ++o) {
            y[o * T + t] = dot(c + o * n, x, n) + m.c_bias[o];
        }
    };

    emit(0);
    for (std::size_t t = 1; t < T; ++t) {
        const double* a = m.A.at(t);
        const double* b = m.B.at(t);
        const double* xp = states + (t - 1) * n;
        double* xc = states + t * n;
        if (diag) {
            for (std::size_t i = 0; i < n; ++i) xc[i] = a[i] * xp[i];
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                xc[i] = dot(a + i * n, xp, n);
            }
        }
        for (std::size_t j = 0; j < nin; ++j) {
            const double uj = u[j * T + t - 1];
            for (std::size_t i = 0; i < n; ++i) xc[i] += b[i * nin + j] * uj;
        }
        emit(t);
    }
}

ElementGradients::ElementGradients(const MaterializedNeuron& m)
    : A(m.A.steps * m.A.entries(), 0.0),
      B(m.B.steps * m.B.entries(), 0.0),
      C(m.C.steps * m.C.entries(), 0.0),
      c_bias(m.n_out(), 0.0) {}

void recurrence_backward(const MaterializedNeuron& m, std::size_t steps, const double* u, const double* states,
                         const double* gy, double* gu, ElementGradients& grads, double* gx0) {
    const std::size_t n = m.n();
    const std::size_t nin = m.n_in();
    const std::size_t nout = m.n_out();
    const std::size_t T = steps;
    const bool diag = m.A.diagonal;
    const std::size_t eA = m.A.entries();
    const std::size_t eB = m.B.entries();
    const std::size_t eC = m.C.entries();

    std::vector<double> gx(n, 0.0);
    std::vector<double> tmp(diag ? 0 : n);

    for (std::size_t t = T; t-- > 0;) {
        const double* c = m.C.at(t);
        const double* xc = states + t * n;
        double* gC = grads.C.data() + t * eC;
        for (std::size_t o = 0; o < nout; ++o) {
            const double g = gy[o * T + t];
            if (g == 0.0) continue;
            grads.c_bias[o] += g;
            const double* crow = c + o * n;
            double* gCrow = gC + o * n;
            for (std::size_t i = 0; i < n; ++i) {
                gCrow[i] += g * xc[i];
                gx[i] += crow[i] * g;
            }
        }
        if (t == 0) break;

        const double* a = m.A.at(t);
        const double* b = m.B.at(t);
        const double* xp = states + (t - 1) * n;
        double* gA = grads.A.data() + t * eA;
        double* gB = grads.B.data() + t * eB;
        if (diag) {
            for (std::size_t i = 0; i < n; ++i) gA[i] += gx[i] * xp[i];
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) gA[i * n + j] += gx[i] * xp[j];
        }
        if (nin == 1) {
            const double uj = u[t - 1];
            for (std::size_t i = 0; i < n; ++i) gB[i] += gx[i] * uj;
            if (gu) gu[t - 1] += dot(b, gx.data(), n);
        } else {
            for (std::size_t j = 0; j < nin; ++j) {
                const double uj = u[j * T + t - 1];
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    gB[i * nin + j] += gx[i] * uj;
                    acc += b[i * nin + j] * gx[i];
                }
                if (gu) gu[j * T + t - 1] += acc;
            }
        }
        if (diag) {
            for (std::size_t i = 0; i < n; ++i) gx[i] *= a[i];
        } else {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double g = gx[i];
                const double* arow = a + i * n;
                for (std::size_t j = 0; j < n; ++j) tmp[j] += arow[j] * g;
            }
            gx.swap(tmp);
        }
    }
    if (gx0) std::copy(gx.begin(), gx.end(), gx0);
}

namespace {

void check_inputs(std::size_t n, std::size_t nin, const Matrix& u, std::span<const double> x0) {
    if (u.rows != nin)
        throw InvalidArgument("input has " + std::to_string(u.rows) + " channels, neuron expects n_in=" +
                              std::to_string(nin));
    if (u.cols == 0) throw InvalidArgument("input sequence is empty");
    if (!x0.empty() && x0.size() != n) throw InvalidArgument("x0 length must equal the state dimension");
}

Matrix transpose_states(const std::vector<double>& states, std::size_t T, std::size_t n) {
    Matrix x(n, T);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < n; ++i) x(i, t) = states[t * n + i];
    return x;
}

}  // namespace

NeuronTrajectory tv_forward(const SSMNeuron& neuron, const Matrix& u, std::span<const double> x0) {
    neuron.validate();
    check_inputs(neuron.n(), neuron.n_in(), u, x0);
    const std::size_t T = u.cols;
    const auto m = materialize(neuron, T);
    std::vector<double> states(T * neuron.n());
    NeuronTrajectory out{Matrix(neuron.n_out(), T), {}};
    recurrence_forward(m, T, u.data.data(), x0.empty() ? nullptr : x0.data(), states.data(), out.y.data.data());
    out.x = transpose_states(states, T, neuron.n());
    return out;
}

NeuronTrajectory ti_forward(const Matrix& A, const Matrix& B, const Matrix& C, std::span<const double> c_bias,
                            const Matrix& u, std::span<const double> x0) {
    const std::size_t n = A.rows;
    if (A.cols != n || B.rows != n || C.cols != n) throw InvalidArgument("ti_forward: inconsistent matrix shapes");
    if (c_bias.size() != C.rows) throw InvalidArgument("ti_forward: c_bias length must equal n_out");
    check_inputs(n, B.cols, u, x0);
    const std::size_t T = u.cols;
    NeuronTrajectory out{Matrix(C.rows, T), Matrix(n, T)};
    std::vector<double> x(n, 0.0), next(n);
    if (!x0.empty()) std::copy(x0.begin(), x0.end(), x.begin());
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += A(i, j) * x[j];
                for (std::size_t j = 0; j < B.cols; ++j) acc += B(i, j) * u(j, t - 1);
                next[i] = acc;
            }
            x.swap(next);
        }
        for (std::size_t i = 0; i < n; ++i) out.x(i, t) = x[i];
        for (std::size_t o = 0; o < C.rows; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += C(o, i) * x[i];
            out.y(o, t) = acc + c_bias[o];
        }
    }
    return out;
}

}  // namespace tvssm
