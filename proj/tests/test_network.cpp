#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "tvssm/errors.hpp"
#include "tvssm/network.hpp"

using namespace tvssm;

namespace {

LayerSpec layer(std::size_t h, std::size_t n, std::size_t K, bool tv = true) {
    LayerSpec L;
    L.h = h;
    L.n = n;
    L.K_A = L.K_B = L.K_C = K;
    L.tv_A = L.tv_B = L.tv_C = tv;
    return L;
}

NetworkSpec spec_of(std::vector<LayerSpec> layers, std::size_t T = 16, bool norm = true) {
    NetworkSpec s;
    s.layers = std::move(layers);
    s.T = T;
    s.use_norm = norm;
    return s;
}

void randomize(NetworkParams& p, Rng& rng) {
    for (auto& tv : trainable_tensors(p))
        for (auto& v : tv.values) v = uniform(rng, -0.5, 0.5);
    for (auto& L : p.layers) {
        for (auto& v : L.norm.running_mean) v = uniform(rng, -0.2, 0.2);
        for (auto& v : L.norm.running_var) v = uniform(rng, 0.5, 2.0);
        for (auto& nr : L.neurons) stability_project(nr.A);
    }
}

// Applies W_in, then per layer: each neuron, activation, W, normalization, on one sample at a time.
std::vector<std::vector<double>> stage_oracle(const NetworkParams& p, const SequenceBatch& in, std::size_t b,
                                              bool train_stats) {
    const std::size_t T = in.steps;
    std::vector<std::vector<double>> z(p.W_in.rows, std::vector<double>(T, 0.0));
    for (std::size_t r = 0; r < p.W_in.rows; ++r)
        for (std::size_t c = 0; c < p.W_in.cols; ++c)
            for (std::size_t t = 0; t < T; ++t) z[r][t] += p.W_in(r, c) * in(b, c, t);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.spec.layers[l];
        const auto& lp = p.layers[l];
        std::vector<std::vector<double>> s;
        for (std::size_t j = 0; j < L.h; ++j) {
            Matrix u(L.n_in, T);
            for (std::size_t c = 0; c < L.n_in; ++c)
                for (std::size_t t = 0; t < T; ++t) u(c, t) = z[j * L.n_in + c][t];
            const auto tr = tv_forward(lp.neurons[j], u);
            for (std::size_t o = 0; o < L.n_out; ++o) {
                std::vector<double> row(T);
                for (std::size_t t = 0; t < T; ++t) {
                    const double v = tr.y(o, t);
                    row[t] = L.activation == Activation::GELU ? 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))) : v;
                }
                s.push_back(row);
            }
        }
        std::vector<std::vector<double>> m(lp.W.rows, std::vector<double>(T, 0.0));
        for (std::size_t r = 0; r < lp.W.rows; ++r)
            for (std::size_t c = 0; c < lp.W.cols; ++c)
                for (std::size_t t = 0; t < T; ++t) m[r][t] += lp.W(r, c) * s[c][t];
        if (p.spec.has_norm(l) && !train_stats) {
            for (std::size_t r = 0; r < m.size(); ++r)
                for (auto& v : m[r])
                    v = lp.norm.scale[r] * (v - lp.norm.running_mean[r]) / std::sqrt(lp.norm.running_var[r] + 1e-5) +
                        lp.norm.shift[r];
        }
        z = m;
    }
    return z;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("gelu values") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
    for (double x : {-2.0, -0.3, 0.0, 0.4, 1.7}) {
        const double h = 1e-6;
        CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-8));
    }
}

TEST_CASE("A initialization splits the base pole over K_A coefficients") {
    Rng rng(1);
    const auto p = init_network(spec_of({layer(3, 5, 4)}, 64, false), rng);
    for (const auto& nr : p.layers[0].neurons) {
        REQUIRE(nr.A.basis_size() == 4);
        for (std::size_t i = 0; i < 5; ++i) {
            const double base = s4d_real_discrete(i, 5);
            CHECK(base > 0.0);
            CHECK(base < 1.0);
            for (std::size_t k = 0; k < 4; ++k) CHECK(nr.A.coeff(i, k) == doctest::Approx(base / 4.0).epsilon(1e-15));
            CHECK(coefficient_budget(nr.A, i) < 1.0);
            // at a time where every basis function is 1 the element is the base value
            double all_ones = 0.0;
            for (std::size_t k = 0; k < 4; ++k) all_ones += nr.A.coeff(i, k);
            CHECK(all_ones == doctest::Approx(base).epsilon(1e-15));
        }
    }
    // 0.9 split over 4 roles
    CHECK(0.9 / 4.0 == doctest::Approx(0.225));
}

TEST_CASE("s4d poles span exp(-dt/2) for dt in [1e-3, 1e-1]") {
    CHECK(s4d_real_discrete(0, 8) == doctest::Approx(std::exp(-0.5e-3)).epsilon(1e-15));
    CHECK(s4d_real_discrete(7, 8) == doctest::Approx(std::exp(-0.05)).epsilon(1e-15));
}

TEST_CASE("initialization is deterministic per seed") {
    const auto s = spec_of({layer(4, 3, 3), layer(2, 3, 2)});
    Rng a(42), b(42), c(43);
    const auto pa = init_network(s, a), pb = init_network(s, b), pc = init_network(s, c);
    CHECK(pa == pb);
    CHECK_FALSE(pa == pc);
}

TEST_CASE("one neuron with unit mixing collapses to tv_forward") {
    Rng rng(2);
    auto p = init_network(spec_of({layer(1, 3, 4)}, 24, false), rng);
    randomize(p, rng);
    p.W_in(0, 0) = 1.0;
    p.layers[0].W(0, 0) = 1.0;
    SequenceBatch in(1, 1, 24);
    Matrix u(1, 24);
    for (std::size_t t = 0; t < 24; ++t) u(0, t) = in(0, 0, t) = std::cos(0.3 * static_cast<double>(t));
    const auto out = network_forward(p, in);
    const auto ref = tv_forward(p.layers[0].neurons[0], u);
    for (std::size_t t = 0; t < 24; ++t) CHECK(out(0, 0, t) == ref.y(0, t));
}

TEST_CASE("zero input with zero biases gives zero pre-norm output under GELU") {
    Rng rng(3);
    auto L = layer(3, 2, 2);
    L.activation = Activation::GELU;
    const auto p = init_network(spec_of({L}, 10, false), rng);
    const auto out = network_forward(p, SequenceBatch(2, 1, 10));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("network matches the stage-by-stage oracle") {
    Rng rng(4);
    auto L0 = layer(3, 2, 3), L1 = layer(2, 3, 2, false);
    L0.activation = L1.activation = Activation::GELU;
    L1.n_out = 2;
    auto s = spec_of({L0, L1}, 12, true);
    s.input_channels = 2;
    s.output_channels = 3;
    auto p = init_network(s, rng);
    randomize(p, rng);
    SequenceBatch in(3, 2, 12);
    for (auto& v : in.data) v = uniform(rng, -1.0, 1.0);
    const auto out = network_forward(p, in, Mode::Eval);
    REQUIRE(out.channels == 3);
    for (std::size_t b = 0; b < 3; ++b) {
        const auto ref = stage_oracle(p, in, b, false);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < 12; ++t) CHECK(out(b, c, t) == doctest::Approx(ref[c][t]).epsilon(1e-12));
    }
}

TEST_CASE("train-mode normalization uses batch statistics") {
    Rng rng(5);
    auto s = spec_of({layer(2, 2, 2), layer(2, 2, 2)}, 10, true);
    auto p = init_network(s, rng);
    randomize(p, rng);
    for (auto& v : p.layers[0].norm.scale) v = 1.0;
    for (auto& v : p.layers[0].norm.shift) v = 0.0;
    SequenceBatch in(4, 1, 10);
    for (auto& v : in.data) v = uniform(rng, -1.0, 1.0);
    ForwardCache cache;
    network_forward(p, in, Mode::Train, &cache);
    const auto& xh = cache.layers[0].normalized;
    for (std::size_t c = 0; c < xh.channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t b = 0; b < xh.batch; ++b)
            for (double v : xh.channel(b, c)) {
                sum += v;
                sq += v * v;
            }
        const double cnt = static_cast<double>(xh.batch * xh.steps);
        const auto& m = cache.layers[0].mixed;
        double mu = 0.0, var = 0.0;
        for (std::size_t b = 0; b < m.batch; ++b)
            for (double v : m.channel(b, c)) mu += v / cnt;
        for (std::size_t b = 0; b < m.batch; ++b)
            for (double v : m.channel(b, c)) var += (v - mu) * (v - mu) / cnt;
        CHECK(std::abs(sum / cnt) <= 1e-12);
        CHECK(sq / cnt == doctest::Approx(var / (var + kNormEpsilon)).epsilon(1e-10));
    }
}

TEST_CASE("state bank carries the final state into the next call") {
    Rng rng(6);
    auto p = init_network(spec_of({layer(1, 3, 3)}, 8, false), rng);
    randomize(p, rng);
    p.W_in(0, 0) = 1.0;
    p.layers[0].W(0, 0) = 1.0;
    SequenceBatch a(1, 1, 8), b(1, 1, 8);
    Matrix ua(1, 8), ub(1, 8);
    for (std::size_t t = 0; t < 8; ++t) {
        ua(0, t) = a(0, 0, t) = uniform(rng, -1.0, 1.0);
        ub(0, t) = b(0, 0, t) = uniform(rng, -1.0, 1.0);
    }
    const auto& nr = p.layers[0].neurons[0];
    const auto ra = tv_forward(nr, ua);
    std::vector<double> xa(3);
    for (std::size_t i = 0; i < 3; ++i) xa[i] = ra.x(i, 7);
    const auto rb = tv_forward(nr, ub, xa);

    const auto zero = StateBank::zeros(p.spec, 1);
    StateBank mid = zero;
    network_forward(p, a, Mode::Eval, nullptr, &zero, &mid);
    for (std::size_t i = 0; i < 3; ++i) CHECK(mid.layers[0][i] == xa[i]);
    const auto yb = network_forward(p, b, Mode::Eval, nullptr, &mid);
    for (std::size_t t = 0; t < 8; ++t) CHECK(yb(0, 0, t) == rb.y(0, t));
}

TEST_CASE("parameter counts of single neurons") {
    CHECK(neuron_parameters(layer(1, 16, 4, false)) == 49);
    CHECK(neuron_parameters(layer(1, 4, 4, true)) == 49);
    CHECK(neuron_parameters(layer(1, 2, 2, true)) == 13);
    CHECK(neuron_parameters(layer(1, 4, 1, true)) == 13);
    CHECK(neuron_parameters(layer(1, 8, 8, true)) == 193);
    CHECK(neuron_parameters(layer(1, 64, 8, false)) == 193);
}

TEST_CASE("count_parameters equals a traversal of allocated tensors") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        std::vector<LayerSpec> ls;
        const std::size_t nl = 1 + rng() % 3;
        for (std::size_t l = 0; l < nl; ++l) {
            auto L = layer(1 + rng() % 4, 1 + rng() % 4, 1);
            L.K_A = 1 + rng() % 4;
            L.K_B = 1 + rng() % 4;
            L.K_C = 1 + rng() % 4;
            L.tv_A = rng() % 2;
            L.tv_B = rng() % 2;
            L.tv_C = rng() % 2;
            L.n_in = 1 + rng() % 2;
            L.n_out = 1 + rng() % 2;
            L.dense_A = rng() % 4 == 0;
            ls.push_back(L);
        }
        auto s = spec_of(ls, 8, rng() % 2);
        s.input_channels = 1 + rng() % 3;
        s.output_channels = 1 + rng() % 3;
        s.share_dictionary = rng() % 2;
        const auto p = init_network(s, rng);
        std::size_t walked = 0;
        for (const auto& tv : trainable_tensors(p)) walked += tv.values.size();
        CHECK(count_parameters(s).total() == walked);
        CHECK(count_allocated_parameters(p) == walked);
    }
}

TEST_CASE("MAC counts") {
    auto L = layer(1, 4, 1, true);
    const auto one = count_macs(spec_of({L}, 1, false), 1);
    CHECK(one.recurrence == 12);
    const auto t64 = count_macs(spec_of({L}, 64, false), 64);
    const auto t128 = count_macs(spec_of({L}, 128, false), 128);
    CHECK(t128.recurrence == 2 * t64.recurrence);

    const auto tv = spec_of({layer(8, 4, 4, true), layer(4, 4, 4, true)}, 128);
    const auto ti = spec_of({layer(8, 4, 4, false), layer(4, 4, 4, false)}, 128);
    CHECK(count_macs(tv, 128).total() == count_macs(ti, 128).total());
    CHECK(count_macs(tv, 128).precompute > 0);
    CHECK(count_macs(ti, 128).precompute == 0);
    CHECK(count_macs(tv, 128).matrix_storage > count_macs(ti, 128).matrix_storage);
}

TEST_CASE("matched parameter budgets") {
    CHECK(match_param_budget(4, 4, 4, 4) == 16);
    CHECK(match_param_budget(8, 8, 8, 8) == 64);
    CHECK(match_param_budget(2, 2, 2, 2) == 4);
    CHECK(match_param_budget(3, 1, 1, 1) == 3);
    CHECK(match_param_budget(4, 10, 1, 1) == 16);
    CHECK_THROWS_AS(match_param_budget(1, 1, 1, 2), InvalidArgument);
    CHECK_THROWS_AS(match_param_budget(0, 1, 1, 1), InvalidArgument);
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(count_parameters(NetworkSpec{}), InvalidArgument);
    auto s = spec_of({layer(0, 2, 2)});
    CHECK_THROWS_AS(count_parameters(s), InvalidArgument);
}

}  // TEST_SUITE
