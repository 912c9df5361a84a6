#include "tvssm/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "tvssm/errors.hpp"

namespace tvssm {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    if (a.empty()) throw InvalidArgument(std::string(what) + ": empty input");
}

double energy(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

}  // namespace

double mse(std::span<const double> s, std::span<const double> s_hat) {
    check_lengths(s, s_hat, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s_hat[i] - s[i];
        acc += d * d;
    }
    return acc / static_cast<double>(s.size());
}

double snr_db(std::span<const double> target, std::span<const double> estimate) {
    check_lengths(target, estimate, "snr_db");
    const double num = energy(target);
    if (!(num > 0.0)) throw InvalidArgument("snr_db: target is identically zero");
    double den = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = estimate[i] - target[i];
        den += d * d;
    }
    return 10.0 * std::log10(num / std::max(den, kMetricEpsilon * num));
}

double si_snr_db(std::span<const double> target, std::span<const double> estimate) {
    check_lengths(target, estimate, "si_snr_db");
    const auto n = static_cast<double>(target.size());
    double mt = 0.0, me = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        mt += target[i];
        me += estimate[i];
    }
    mt /= n;
    me /= n;
    double tt = 0.0, te = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double t = target[i] - mt;
        tt += t * t;
        te += t * (estimate[i] - me);
    }
    if (!(tt > 0.0)) throw InvalidArgument("si_snr_db: target is constant after mean removal");
    const double alpha = te / tt;
    double s_energy = 0.0, e_energy = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double s = alpha * (target[i] - mt);
        const double e = (estimate[i] - me) - s;
        s_energy += s * s;
        e_energy += e * e;
    }
    const double floor = kMetricEpsilon * tt;
    return 10.0 * std::log10(std::max(s_energy, floor) / std::max(e_energy, kMetricEpsilon * std::max(s_energy, floor)));
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    r.n = values.size();
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(r.n);
    if (r.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
    }
    return r;
}

void MetricReport::add_run(double mse_value, double snr_value, double si_snr_value) {
    run_mse.push_back(mse_value);
    run_snr_db.push_back(snr_value);
    run_si_snr_db.push_back(si_snr_value);
    mse = mean_std(run_mse);
    snr_db = mean_std(run_snr_db);
    si_snr_db = mean_std(run_si_snr_db);
}

std::string MetricReport::format_db() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", si_snr_db.mean, si_snr_db.std);
    return buf;
}

}  // namespace tvssm
