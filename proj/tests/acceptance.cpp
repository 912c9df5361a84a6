// Acceptance checks. Usage: acceptance [criterion ...]   (no arguments runs 1-9)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tvssm/datagen.hpp"
#include "tvssm/experiment.hpp"
#include "tvssm/metrics.hpp"
#include "tvssm/network.hpp"
#include "tvssm/serialize.hpp"
#include "tvssm/ssm.hpp"
#include "tvssm/training.hpp"

using namespace tvssm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Verdicts also go to acceptance_results.txt, since ctest hides the output of passing tests.
bool verdict(const std::string& id, bool pass, const std::string& detail) {
    char line[2048];
    std::snprintf(line, sizeof line, "[%s] criterion %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
    std::fputs(line, stdout);
    std::fflush(stdout);
    std::ofstream("acceptance_results.txt", std::ios::app) << line;
    return pass;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

LayerSpec random_layer(Rng& rng, bool tv) {
    LayerSpec L;
    L.h = 1 + rng() % 6;
    L.n = 1 + rng() % 8;
    L.n_in = 1 + rng() % 3;
    L.n_out = 1 + rng() % 3;
    L.K_A = 1 + rng() % 8;
    L.K_B = 1 + rng() % 8;
    L.K_C = 1 + rng() % 8;
    L.tv_A = L.tv_B = L.tv_C = tv;
    L.activation = rng() % 2 ? Activation::GELU : Activation::Identity;
    L.dense_A = rng() % 5 == 0;
    return L;
}

NetworkSpec random_spec(Rng& rng) {
    NetworkSpec s;
    s.T = 4 + rng() % 60;
    s.input_channels = 1 + rng() % 3;
    s.output_channels = 1 + rng() % 3;
    s.use_norm = rng() % 2;
    s.share_dictionary = rng() % 2;
    const std::size_t L = 1 + rng() % 3;
    for (std::size_t l = 0; l < L; ++l) {
        auto ls = random_layer(rng, true);
        ls.tv_A = rng() % 2;
        ls.tv_B = rng() % 2;
        ls.tv_C = rng() % 2;
        s.layers.push_back(ls);
    }
    return s;
}

// 1: analytic gradients against central differences.
bool criterion_1() {
    const auto t0 = Clock::now();
    NetworkSpec s;
    s.T = 8;
    LayerSpec L;
    L.h = 2;
    L.n = 2;
    L.K_A = L.K_B = L.K_C = 2;
    L.activation = Activation::GELU;
    s.layers = {L};
    Rng rng(20240601);
    const auto p = init_network(s, rng);
    SequenceBatch in(2, 1, 8), tgt(2, 1, 8);
    for (auto& v : in.data) v = uniform(rng, -1.0, 1.0);
    for (auto& v : tgt.data) v = uniform(rng, -1.0, 1.0);
    const auto r = fd_check(p, in, tgt, 1e-6, 1e-5);
    const double secs = seconds_since(t0);
    std::size_t n_params = 0;
    for (const auto& t : r.tensors) n_params += t.size;
    return verdict("1", r.passed && r.max_rel_error <= 1e-5 && secs < 10.0,
                   fmt("gradient oracle: %.0f parameters, max rel err %.3e (tol 1e-5, step 1e-6); %.2f s (< 10 s)",
                       static_cast<double>(n_params), r.max_rel_error, secs));
}

// 2: projection bound on 10,000 draws, then monotone max-norm decay of zero-input rollouts.
bool criterion_2() {
    const auto t0 = Clock::now();
    Rng rng(777);
    std::size_t violations = 0;
    double worst_budget = 0.0, largest_draw = 0.0;
    std::vector<TimeVaryingMatrixParam> kept;
    for (int d = 0; d < 10000; ++d) {
        const std::size_t n = 1 + rng() % 4, K = 1 + rng() % 8;
        const std::size_t T = 10000;
        auto A = TimeVaryingMatrixParam::zeros(n, n, true, sample_dictionary(K, T, rng));
        const double target = uniform(rng, 0.0, 10.0);  // absolute coefficient sum before projection
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += std::abs(A.coeff(i, k) = uniform(rng, -1.0, 1.0));
            for (std::size_t k = 0; k < K; ++k) A.coeff(i, k) *= target / s;
            largest_draw = std::max(largest_draw, coefficient_budget(A, i));
        }
        stability_project(A);
        for (std::size_t i = 0; i < n; ++i) {
            const double b = coefficient_budget(A, i);
            worst_budget = std::max(worst_budget, b);
            if (!(b < 1.0)) ++violations;
        }
        if (d % 100 == 0) kept.push_back(std::move(A));
    }

    std::size_t non_monotone = 0;
    const std::size_t steps = 10000;
    for (auto& A : kept) {
        const std::size_t n = A.rows;
        SSMNeuron nr;
        nr.A = A;
        nr.B = TimeVaryingMatrixParam::zeros(n, 1, false, BasisDictionary::constant_only(steps));
        nr.C = TimeVaryingMatrixParam::zeros(1, n, false, BasisDictionary::constant_only(steps));
        nr.c_bias = {0.0};
        std::vector<double> x0(n);
        for (auto& v : x0) v = uniform(rng, -5.0, 5.0);
        const auto tr = tv_forward(nr, Matrix(1, steps), x0);
        double prev = 0.0;
        for (std::size_t i = 0; i < n; ++i) prev = std::max(prev, std::abs(tr.x(i, 0)));
        for (std::size_t t = 1; t < steps; ++t) {
            double cur = 0.0;
            for (std::size_t i = 0; i < n; ++i) cur = std::max(cur, std::abs(tr.x(i, t)));
            // below DBL_MIN a contraction can round back to the same subnormal
            const bool strict = prev >= std::numeric_limits<double>::min();
            if (strict ? !(cur < prev) : !(cur <= prev)) {
                ++non_monotone;
                break;
            }
            prev = cur;
        }
    }
    const double secs = seconds_since(t0);
    return verdict("2", violations == 0 && non_monotone == 0 && secs < 5.0,
                   fmt("stability: 10000 draws (largest pre-projection sum %.3f), %.0f rows with sum >= 1 after "
                       "projection (max %.6f); %.0f of 100 rollouts of 10000 steps not decaying monotonically in max-norm; ",
                       largest_draw, static_cast<double>(violations), worst_budget,
                       static_cast<double>(non_monotone)) +
                       fmt("%.2f s (< 5 s)", secs));
}

// 3: constant-basis time-varying neuron equals the static recurrence.
bool criterion_3() {
    Rng rng(31337);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        const std::size_t n = 1 + rng() % 8, nin = 1 + rng() % 3, nout = 1 + rng() % 3, T = 8 + rng() % 120;
        const bool dense = rng() % 3 == 0;
        const auto d = BasisDictionary::constant_only(T);
        SSMNeuron nr;
        nr.A = TimeVaryingMatrixParam::zeros(n, n, !dense, d);
        nr.B = TimeVaryingMatrixParam::zeros(n, nin, false, d);
        nr.C = TimeVaryingMatrixParam::zeros(nout, n, false, d);
        for (auto& v : nr.A.coeffs) v = uniform(rng, -1.0, 1.0) / (dense ? static_cast<double>(n) : 1.0);
        for (auto& v : nr.B.coeffs) v = uniform(rng, -1.0, 1.0);
        for (auto& v : nr.C.coeffs) v = uniform(rng, -1.0, 1.0);
        nr.c_bias.resize(nout);
        for (auto& v : nr.c_bias) v = uniform(rng, -1.0, 1.0);
        Matrix A(n, n), B(n, nin), C(nout, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                A(i, j) = dense ? nr.A.coeffs[i * n + j] : (i == j ? nr.A.coeffs[i] : 0.0);
        B.data = nr.B.coeffs;
        C.data = nr.C.coeffs;
        Matrix u(nin, T);
        for (auto& v : u.data) v = uniform(rng, -1.0, 1.0);
        std::vector<double> x0(n);
        for (auto& v : x0) v = uniform(rng, -1.0, 1.0);
        const auto tv = tv_forward(nr, u, x0);
        const auto ti = ti_forward(A, B, C, nr.c_bias, u, x0);
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < ti.y.data.size(); ++i) {
            diff = std::max(diff, std::abs(tv.y.data[i] - ti.y.data[i]));
            scale = std::max(scale, std::abs(ti.y.data[i]));
        }
        worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
    }
    return verdict("3", worst <= 1e-12,
                   fmt("constant-basis reduction: 100 configs, max relative error %.3e (tol 1e-12)", worst));
}

// 4: budget rows and exhaustive traversal.
bool criterion_4() {
    bool ok = true;
    std::string rows;
    const std::size_t K[3] = {2, 4, 8}, p_want[3] = {13, 49, 193}, ninv_want[3] = {4, 16, 64};
    for (int r = 0; r < 3; ++r) {
        LayerSpec tv;
        tv.n = K[r];
        tv.K_A = tv.K_B = tv.K_C = K[r];
        LayerSpec ti;
        ti.n = match_param_budget(K[r], K[r], K[r], K[r]);
        ti.tv_A = ti.tv_B = ti.tv_C = false;
        const std::size_t ptv = neuron_parameters(tv), pti = neuron_parameters(ti);
        ok = ok && ti.n == ninv_want[r] && ptv == p_want[r] && pti == p_want[r];
        rows += fmt("(K=%.0f: n_invar=%.0f p_tv=%.0f p_ti=%.0f) ", static_cast<double>(K[r]),
                    static_cast<double>(ti.n), static_cast<double>(ptv), static_cast<double>(pti));
    }
    Rng rng(4444);
    std::size_t mismatches = 0;
    for (int i = 0; i < 50; ++i) {
        const auto s = random_spec(rng);
        const auto p = init_network(s, rng);
        std::size_t walked = 0;
        for (const auto& t : trainable_tensors(p)) walked += t.values.size();
        if (count_parameters(s).total() != walked || count_allocated_parameters(p) != walked) ++mismatches;
    }
    ok = ok && mismatches == 0;
    return verdict("4", ok, "parameter accounting: " + rows + "expected p = 13/49/193, n_invar = 4/16/64; " +
                                fmt("%.0f of 50 random specs disagree with tensor traversal",
                                    static_cast<double>(mismatches)));
}

// 5: identical dimensions, time-varying vs time-invariant roles.
bool criterion_5() {
    Rng rng(5555);
    std::size_t mismatches = 0;
    for (int i = 0; i < 20; ++i) {
        auto tv = random_spec(rng);
        for (auto& L : tv.layers) L.tv_A = L.tv_B = L.tv_C = true;
        auto ti = tv;
        for (auto& L : ti.layers) L.tv_A = L.tv_B = L.tv_C = false;
        const std::size_t T = tv.T;
        if (count_macs(tv, T).total() != count_macs(ti, T).total()) ++mismatches;
    }
    return verdict("5", mismatches == 0,
                   fmt("inference MACs: %.0f of 20 random architectures differ between TV and TI (exact equality)",
                       static_cast<double>(mismatches)));
}

ExperimentResult four_mode_cell(const std::string& model, const std::string& data, std::uint64_t seed) {
    auto c = four_mode_preset(Scale::Desk, model, data);
    c.seed = seed;
    const auto r = run_experiment(c);
    std::printf("  data=%s model=%s:", data.c_str(), model.c_str());
    for (const auto& run : r.runs) std::printf(" %.3e", run.mse);
    std::printf("\n");
    std::fflush(stdout);
    return r;
}

// 6: qualitative Table 1 orderings at desk scale.
bool criterion_6() {
    const auto t0 = Clock::now();
    const std::uint64_t seed = 2025;
    const std::vector<std::string> models{"xxx", "xxo", "xox", "xoo", "oxx", "oxo", "oox", "ooo"};

    std::printf("  (a) test MSE per seed on xxx data, threshold 1e-6\n");
    std::size_t configs_ok = 0;
    for (const auto& m : models) {
        const auto r = four_mode_cell(m, "xxx", seed);
        std::size_t below = 0;
        for (const auto& run : r.runs) below += run.mse < 1e-6;
        configs_ok += 2 * below > r.runs.size();
    }
    const bool a = configs_ok == models.size();

    auto gap = [&](const std::string& data, const std::string& good, std::string& detail) {
        const auto rg = four_mode_cell(good, data, seed), rx = four_mode_cell("xxx", data, seed);
        std::size_t wins = 0;
        for (std::size_t i = 0; i < rg.runs.size(); ++i) {
            const double ratio = rx.runs[i].mse / rg.runs[i].mse;
            wins += ratio >= 10.0;
            detail += fmt(" %.1fx", ratio);
        }
        return 2 * wins > rg.runs.size();
    };
    std::printf("  (b) data=ooo, ooo model vs xxx model\n");
    std::string db, dc;
    const bool b = gap("ooo", "ooo", db);
    std::printf("  (c) data=oxx, oxx model vs xxx model\n");
    const bool c = gap("oxx", "oxx", dc);
    const double secs = seconds_since(t0);

    bool all = true;
    all &= verdict("6a", a, fmt("xxx data: %.0f of 8 model configs reach test MSE < 1e-6 in a majority of 3 seeds",
                                static_cast<double>(configs_ok)));
    all &= verdict("6b", b, "ooo data: xxx/ooo MSE ratio per seed" + db + " (need >= 10x in a majority of 3)");
    all &= verdict("6c", c, "oxx data: xxx/oxx MSE ratio per seed" + dc + " (need >= 10x in a majority of 3)");
    all &= verdict("6", all && secs < 1800.0, fmt("table 1 orderings; %.1f min (< 30 min)", secs / 60.0));
    return all;
}

// 7: denoising ordering with matched budgets.
bool criterion_7() {
    const auto t0 = Clock::now();
    auto tv = denoise_preset(Scale::Desk, true);
    auto ti = denoise_preset(Scale::Desk, false);
    tv.seed = ti.seed = 2025;
    const auto data = experiment_dataset(tv);

    const auto test = data.indices(Split::Test);
    double worst_baseline = 0.0;
    for (std::size_t i : test) {
        const double s = snr_db(data.clean.channel(i, 0), data.targets.channel(i, 0));
        worst_baseline = std::max(worst_baseline, std::abs(s - 5.0));
    }
    const bool budgets = count_parameters(tv.network_spec()).total() == count_parameters(ti.network_spec()).total();

    const auto rtv = run_experiment(tv, &data);
    const auto rti = run_experiment(ti, &data);
    for (const auto* r : {&rtv, &rti}) {
        std::printf("  %s (n=%zu, params %zu):", r->config.name.c_str(), r->config.state_dimension(),
                    r->params.total());
        for (double v : r->report.run_si_snr_db) std::printf(" %.2f", v);
        std::printf(" dB\n");
    }
    const double mtv = rtv.report.si_snr_db.mean, mti = rti.report.si_snr_db.mean;
    const double secs = seconds_since(t0);
    const bool pass = budgets && worst_baseline <= 1e-9 && mtv - mti >= 3.0 && mtv > 5.0 && mti > 5.0 &&
                      rtv.runs.size() == 5 && rti.runs.size() == 5 && secs < 1200.0;
    return verdict("7", pass,
                   fmt("denoising: SI-SNR TV %.2f dB, TI %.2f dB, gap %.2f dB (need >= 3, both > 5); ", mtv, mti,
                       mtv - mti) +
                       fmt("input SNR max |snr - 5| = %.2e (tol 1e-9); params %.0f vs %.0f; ", worst_baseline,
                           static_cast<double>(rtv.params.total()), static_cast<double>(rti.params.total())) +
                       fmt("5 seeds; %.1f min (< 20 min)", secs / 60.0));
}

bool criterion_8() {
    Rng rng(8888);
    double worst_scale = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s(2000), e(2000);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = uniform(rng, -1.0, 1.0);
            e[i] = s[i] + 0.5 * uniform(rng, -1.0, 1.0);
        }
        const double base = si_snr_db(s, e);
        for (double a : {0.1, 1.0, 7.3}) {
            std::vector<double> se(e);
            for (auto& v : se) v *= a;
            worst_scale = std::max(worst_scale, std::abs(si_snr_db(s, se) - base));
        }
    }

    const std::size_t N = 480;
    std::vector<double> s(N), e(N), est(N);
    double ps = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        s[i] = std::sin(2.0 * 3.141592653589793 * 7.0 * static_cast<double>(i) / N);
        e[i] = std::sin(2.0 * 3.141592653589793 * 11.0 * static_cast<double>(i) / N);
        ps += s[i] * s[i];
        pe += e[i] * e[i];
    }
    const double k = std::sqrt(ps / (10.0 * pe));
    for (std::size_t i = 0; i < N; ++i) est[i] = s[i] + k * e[i];
    const double ten = si_snr_db(s, est);

    double worst_mix = 0.0;
    auto clean = synth_clean_signal(48000, rng);
    std::vector<double> noise(48000);
    for (auto& v : noise) v = uniform(rng, -1.0, 1.0);
    for (double target : {-20.0, -10.0, -5.0, 0.0, 2.5, 5.0, 10.0, 20.0, 40.0}) {
        const auto m = mix_at_snr(clean, noise, target);
        worst_mix = std::max(worst_mix, std::abs(snr_db(clean, m.noisy) - target));
    }
    return verdict("8", worst_scale <= 1e-9 && std::abs(ten - 10.0) <= 1e-9 && worst_mix <= 1e-9,
                   fmt("metrics: SI-SNR scale drift %.2e (tol 1e-9); orthogonal example %.12f dB (10 +- 1e-9); "
                       "mix_at_snr worst round-trip error %.2e (tol 1e-9)",
                       worst_scale, ten, worst_mix));
}

std::vector<std::pair<std::string, std::string>> tree_bytes(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root).generic_string();
        std::string bytes = read_text_file(e.path());
        if (rel == "config.json") {
            auto j = json::parse(bytes);
            j.erase("output_dir");  // the only field that names the destination
            bytes = j.dump();
        }
        out.emplace_back(rel, std::move(bytes));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// 9: two end-to-end runs with the same seed, compared byte for byte.
bool criterion_9() {
    const fs::path root = fs::temp_directory_path() / ("tvssm_determinism_" + std::to_string(::getpid()));
    fs::remove_all(root);
    auto c = four_mode_preset(Scale::Desk, "ooo", "ooo");
    c.seed = 99;
    c.output_dir = root / "a";
    run_experiment(c);
    c.output_dir = root / "b";
    run_experiment(c);
    const auto a = tree_bytes(root / "a"), b = tree_bytes(root / "b");
    std::size_t differing = 0, checkpoints = 0, csvs = 0;
    if (a.size() != b.size()) differing = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        if (a[i] != b[i]) ++differing;
        checkpoints += a[i].first.ends_with("checkpoint.json");
        csvs += a[i].first.ends_with(".csv");
    }
    fs::remove_all(root);
    return verdict("9", differing == 0 && checkpoints == 3 && csvs == 4,
                   fmt("determinism: four-mode desk ooo/ooo twice with seed 99; %.0f files (%.0f checkpoints, %.0f "
                       "CSV) compared, %.0f differ",
                       static_cast<double>(a.size()), static_cast<double>(checkpoints), static_cast<double>(csvs),
                       static_cast<double>(differing)));
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<bool()>> all{
        {"1", criterion_1}, {"2", criterion_2}, {"3", criterion_3}, {"4", criterion_4}, {"5", criterion_5},
        {"6", criterion_6}, {"7", criterion_7}, {"8", criterion_8}, {"9", criterion_9}};
    std::vector<std::string> which;
    for (int i = 1; i < argc; ++i) which.emplace_back(argv[i]);
    if (which.empty())
        for (const auto& [k, f] : all) which.push_back(k);
    bool ok = true;
    for (const auto& w : which) {
        const auto it = all.find(w);
        if (it == all.end()) {
            std::fprintf(stderr, "unknown criterion '%s'\n", w.c_str());
            return 2;
        }
        try {
            ok = it->second() && ok;
        } catch (const std::exception& e) {
            ok = verdict(w, false, std::string("threw: ") + e.what()) && ok;
        }
    }
    return ok ? 0 : 1;
}
