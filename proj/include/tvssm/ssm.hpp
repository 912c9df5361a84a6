#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tvssm/basis.hpp"
#include "tvssm/tensor.hpp"

namespace tvssm {

// Matrix whose every stored element is sum_k coeff[e, k] * phi_k(t) over a fixed dictionary.
// Diagonal matrices store only the `rows` diagonal elements.
struct TimeVaryingMatrixParam {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool diagonal = false;
    BasisDictionary dict;
    std::vector<double> coeffs;  // entries() x K, row-major

    static TimeVaryingMatrixParam zeros(std::size_t rows, std::size_t cols, bool diagonal, BasisDictionary dict);

    std::size_t entries() const { return diagonal ? rows : rows * cols; }
    std::size_t basis_size() const { return dict.size(); }
    double& coeff(std::size_t entry, std::size_t k) { return coeffs[entry * dict.size() + k]; }
    double coeff(std::size_t entry, std::size_t k) const { return coeffs[entry * dict.size() + k]; }

    void validate() const;
    bool operator==(const TimeVaryingMatrixParam&) const = default;
};

// steps x entries trajectory of element values.
struct MaterializedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool diagonal = false;
    std::size_t steps = 0;
    std::vector<double> values;

    std::size_t entries() const { return diagonal ? rows : rows * cols; }
    const double* at(std::size_t t) const { return values.data() + t * entries(); }
    // Dense (i, j) element at time t (zero off the diagonal of a diagonal matrix).
    double element(std::size_t i, std::size_t j, std::size_t t) const;
};

MaterializedMatrix materialize(const TimeVaryingMatrixParam& param, std::size_t steps);
MaterializedMatrix materialize(const TimeVaryingMatrixParam& param, const BasisGrid& grid);

// Chain rule through the basis expansion: g_coeff[e, k] += sum_t phi_k(t) * g_elem[t, e].
void accumulate_coefficient_gradient(const BasisGrid& grid, std::size_t entries, std::span<const double> elem_grad,
                                     std::span<double> coeff_grad);

// Sum_k |a_ii^(k)| for diagonal entry i.
double coefficient_budget(const TimeVaryingMatrixParam& A, std::size_t i);

// Rescale any diagonal row whose coefficient budget reaches 1 by 1/(budget + eps). Returns true if any row changed.
bool stability_project(TimeVaryingMatrixParam& A, double eps = 1e-4);

struct SSMNeuron {
    TimeVaryingMatrixParam A;  // n x n (diagonal by default)
    TimeVaryingMatrixParam B;  // n x n_in
    TimeVaryingMatrixParam C;  // n_out x n
    std::vector<double> c_bias;

    std::size_t n() const { return A.rows; }
    std::size_t n_in() const { return B.cols; }
    std::size_t n_out() const { return C.rows; }
    void validate() const;
    bool operator==(const SSMNeuron&) const = default;
};

struct MaterializedNeuron {
    MaterializedMatrix A, B, C;
    std::vector<double> c_bias;

    std::size_t n() const { return A.rows; }
    std::size_t n_in() const { return B.cols; }
    std::size_t n_out() const { return C.rows; }
    std::size_t steps() const { return A.steps; }
};

MaterializedNeuron materialize(const SSMNeuron& neuron, std::size_t steps);

// Recurrence kernel:
//   x[0] = x0, x[t] = A[t] x[t-1] + B[t] u[t-1] (t >= 1), y[t] = C[t] x[t] + c_bias.
// u is n_in x T (time contiguous), states is T x n, y is n_out x T. x0 == nullptr means zero.
void recurrence_forward(const MaterializedNeuron& m, std::size_t steps, const double* u, const double* x0,
                        double* states, double* y);

// Per-time-step element adjoints for one neuron, summed over however many sequences were pushed through.
struct ElementGradients {
    std::vector<double> A, B, C;  // steps x entries each
    std::vector<double> c_bias;

    explicit ElementGradients(const MaterializedNeuron& m);
    ElementGradients() = default;
};

// Reverse pass of recurrence_forward. gu (n_in x T) is accumulated into when non-null; gx0 is overwritten when
// non-null with dL/dx0.
void recurrence_backward(const MaterializedNeuron& m, std::size_t steps, const double* u, const double* states,
                         const double* gy, double* gu, ElementGradients& grads, double* gx0);

struct NeuronTrajectory {
    Matrix y;  // n_out x T
    Matrix x;  // n x T
};

NeuronTrajectory tv_forward(const SSMNeuron& neuron, const Matrix& u, std::span<const double> x0 = {});

// Static-matrix reference recurrence with dense A.
NeuronTrajectory ti_forward(const Matrix& A, const Matrix& B, const Matrix& C, std::span<const double> c_bias,
                            const Matrix& u, std::span<const double> x0 = {});

}  // namespace tvssm
