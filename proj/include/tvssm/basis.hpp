#pragma once

#include <cstddef>
#include <vector>

#include "tvssm/rng.hpp"

namespace tvssm {

enum class BasisKind { Constant, Gaussian };

struct BasisFunction {
    BasisKind kind = BasisKind::Constant;
    double mu = 0.0;     // time-step units
    double sigma = 1.0;  // time-step units, > 0
    double amplitude = 1.0;

    static BasisFunction constant() { return {}; }
    static BasisFunction gaussian(double mu, double sigma);

    double operator()(double t) const;

    bool operator==(const BasisFunction&) const = default;
};

// K x T table of basis values, row-major: value(k, t) = data[k * steps + t].
struct BasisGrid {
    std::size_t size = 0;
    std::size_t steps = 0;
    std::vector<double> data;

    double operator()(std::size_t k, std::size_t t) const { return data[k * steps + t]; }
};

// One constant function followed by K-1 Gaussians.
class BasisDictionary {
public:
    BasisDictionary() = default;
    BasisDictionary(std::vector<BasisFunction> functions, std::size_t horizon);

    static BasisDictionary constant_only(std::size_t horizon = 1);

    std::size_t size() const { return functions_.size(); }
    std::size_t horizon() const { return horizon_; }
    const std::vector<BasisFunction>& functions() const { return functions_; }
    const BasisFunction& operator[](std::size_t k) const { return functions_[k]; }

    std::vector<double> evaluate_at(std::size_t t) const;
    BasisGrid evaluate_grid(std::size_t steps) const;

    bool operator==(const BasisDictionary&) const = default;

private:
    std::vector<BasisFunction> functions_{BasisFunction::constant()};
    std::size_t horizon_ = 1;
};

// Gaussian means ~ U(0, T); widths ~ U(T/(5(K-1)+1), T/((K-1)/3+1)).
BasisDictionary sample_dictionary(std::size_t K, std::size_t T, Rng& rng);

struct SigmaRange {
    double lo;
    double hi;
};
SigmaRange gaussian_sigma_range(std::size_t K, std::size_t T);

}  // namespace tvssm
