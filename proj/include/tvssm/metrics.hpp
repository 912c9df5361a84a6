#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tvssm {

// Relative guard on the log denominators: caps exact matches at 120 dB.
inline constexpr double kMetricEpsilon = 1e-12;

double mse(std::span<const double> s, std::span<const double> s_hat);
double snr_db(std::span<const double> target, std::span<const double> estimate);
// Both signals are made zero-mean first.
double si_snr_db(std::span<const double> target, std::span<const double> estimate);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
    std::size_t n = 0;
};
MeanStd mean_std(std::span<const double> values);

struct MetricReport {
    MeanStd mse;
    MeanStd snr_db;
    MeanStd si_snr_db;
    std::size_t n_samples = 0;  // test samples per run
    std::vector<double> run_mse, run_snr_db, run_si_snr_db;

    void add_run(double mse_value, double snr_value, double si_snr_value);
    std::string format_db() const;  // "12.34 ± 0.56"
};

}  // namespace tvssm
