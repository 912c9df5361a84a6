#include "tvssm/basis.hpp"

#include <cmath>
#include <string>

#include "tvssm/errors.hpp"

namespace tvssm {

BasisFunction BasisFunction::gaussian(double mu, double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("gaussian basis needs sigma > 0, got " + std::to_string(sigma));
    return {BasisKind::Gaussian, mu, sigma, 1.0};
}

double BasisFunction::operator()(double t) const {
    if (kind == BasisKind::Constant) return amplitude;
    const double d = (t - mu) / sigma;
    return amplitude * std::exp(-0.5 * d * d);
}

BasisDictionary::BasisDictionary(std::vector<BasisFunction> functions, std::size_t horizon)
    : functions_(std::move(functions)), horizon_(horizon) {
    if (functions_.empty()) throw InvalidArgument("basis dictionary needs at least one function");
    if (functions_.front().kind != BasisKind::Constant)
        throw InvalidArgument("basis dictionary must start with the constant function");
    for (std::size_t k = 1; k < functions_.size(); ++k) {
        const auto& f = functions_[k];
        if (f.kind != BasisKind::Gaussian) throw InvalidArgument("only the first basis function may be constant");
        if (!(f.sigma > 0.0)) throw InvalidArgument("gaussian basis needs sigma > 0");
    }
    if (horizon_ == 0) throw InvalidArgument("basis dictionary horizon must be positive");
}

BasisDictionary BasisDictionary::constant_only(std::size_t horizon) {
    return BasisDictionary({BasisFunction::constant()}, horizon);
}

std::vector<double> BasisDictionary::evaluate_at(std::size_t t) const {
    std::vector<double> out(functions_.size());
    const double tt = static_cast<double>(t);
    for (std::size_t k = 0; k < functions_.size(); ++k) out[k] = functions_[k](tt);
    return out;
}

BasisGrid BasisDictionary::evaluate_grid(std::size_t steps) const {
    if (steps == 0) throw InvalidArgument("evaluate_grid needs steps >= 1");
    BasisGrid grid{functions_.size(), steps, std::vector<double>(functions_.size() * steps)};
    for (std::size_t k = 0; k < functions_.size(); ++k) {
        const auto& f = functions_[k];
        for (std::size_t t = 0; t < steps; ++t) grid.data[k * steps + t] = f(static_cast<double>(t));
    }
    return grid;
}

SigmaRange gaussian_sigma_range(std::size_t K, std::size_t T) {
    const double km1 = static_cast<double>(K) - 1.0;
    const double horizon = static_cast<double>(T);
    return {horizon / (5.0 * km1 + 1.0), horizon / (km1 / 3.0 + 1.0)};
}

BasisDictionary sample_dictionary(std::size_t K, std::size_t T, Rng& rng) {
    if (K == 0) throw InvalidArgument("sample_dictionary: K must be >= 1");
    if (T == 0) throw InvalidArgument("sample_dictionary: T must be >= 1");
    std::vector<BasisFunction> functions;
    functions.reserve(K);
    functions.push_back(BasisFunction::constant());
    if (K > 1) {
        const auto range = gaussian_sigma_range(K, T);
        for (std::size_t k = 1; k < K; ++k) {
            const double mu = uniform(rng, 0.0, static_cast<double>(T));
            const double sigma = uniform(rng, range.lo, range.hi);
            functions.push_back(BasisFunction::gaussian(mu, sigma));
        }
    }
    return BasisDictionary(std::move(functions), T);
}

}  // namespace tvssm
