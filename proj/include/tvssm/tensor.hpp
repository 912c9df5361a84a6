#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tvssm {

// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

// batch x channels x steps, time contiguous: (b, c, t) -> data[(b * channels + c) * steps + t].
struct SequenceBatch {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t steps = 0;
    std::vector<double> data;

    SequenceBatch() = default;
    SequenceBatch(std::size_t b, std::size_t c, std::size_t t, double fill = 0.0)
        : batch(b), channels(c), steps(t), data(b * c * t, fill) {}

    double& operator()(std::size_t b, std::size_t c, std::size_t t) { return data[(b * channels + c) * steps + t]; }
    double operator()(std::size_t b, std::size_t c, std::size_t t) const {
        return data[(b * channels + c) * steps + t];
    }
    double* sample(std::size_t b) { return data.data() + b * channels * steps; }
    const double* sample(std::size_t b) const { return data.data() + b * channels * steps; }
    std::span<double> channel(std::size_t b, std::size_t c) { return {data.data() + (b * channels + c) * steps, steps}; }
    std::span<const double> channel(std::size_t b, std::size_t c) const {
        return {data.data() + (b * channels + c) * steps, steps};
    }
    std::size_t sample_size() const { return channels * steps; }

    bool same_shape(const SequenceBatch& o) const {
        return batch == o.batch && channels == o.channels && steps == o.steps;
    }
    bool operator==(const SequenceBatch&) const = default;
};

}  // namespace tvssm
