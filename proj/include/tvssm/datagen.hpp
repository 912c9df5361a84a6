#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tvssm/rng.hpp"
#include "tvssm/tensor.hpp"

namespace tvssm {

// One mode of the switching system: diagonal A (4), B (4 x 1), C (1 x 4).
struct ModeSystem {
    std::array<double, 4> A_diag;
    std::array<double, 4> B;
    std::array<double, 4> C;
};

struct SLDSSpec {
    std::array<ModeSystem, 4> modes;
    std::size_t cycle_length = 128;  // modes 1 -> 2 -> 3 -> 4, cycle_length / 4 steps each

    static SLDSSpec four_mode(std::size_t cycle_length = 128);
    std::size_t mode_duration() const { return cycle_length / 4; }
    // 0-based mode index active at time t.
    std::size_t mode_at(std::size_t t) const { return (t % cycle_length) / mode_duration(); }
};

// o = switched, x = fixed to the 1-based mode index in `fixed`.
struct SwitchConfig {
    bool switch_A = true;
    bool switch_B = true;
    bool switch_C = true;
    std::array<int, 3> fixed{1, 1, 1};

    static SwitchConfig parse(const std::string& code, std::array<int, 3> fixed = {1, 1, 1});
    std::string code() const;
    void validate() const;
    bool operator==(const SwitchConfig&) const = default;
};

// Every assignment of fixed modes to the non-switching roles (4^#fixed configurations).
std::vector<SwitchConfig> enumerate_fixed_configs(const SwitchConfig& pattern);

// sin(w1 t + p1) + sin(w2 t + p2), w = 2 pi l / N, l ~ U[0, N/2], p ~ U[0, 2 pi].
std::vector<double> sample_sinusoid_input(std::size_t N, Rng& rng);

// x[t] = A x[t-1] + B u[t-1], y[t] = C x[t] with the matrices of the mode active at t. State carries across mode
// boundaries; with reset_each_cycle the state restarts from zero at every multiple of cycle_length.
std::vector<double> slds_simulate(const SLDSSpec& spec, const SwitchConfig& sw, std::span<const double> u,
                                  std::span<const double> x0 = {}, bool reset_each_cycle = false);

enum class Split : std::uint8_t { Train, Val, Test };
std::string split_name(Split s);
Split parse_split(const std::string& s);

struct Dataset {
    SequenceBatch inputs;
    SequenceBatch targets;
    SequenceBatch clean;         // denoising only
    SequenceBatch scaled_noise;  // denoising only
    std::vector<Split> split;
    std::uint64_t seed = 0;
    std::string provenance;  // JSON text of the generation config

    std::vector<std::size_t> indices(Split s) const;
    Dataset subset(Split s) const;
    std::size_t count(Split s) const { return indices(s).size(); }
};

Dataset build_four_mode_dataset(const SwitchConfig& sw, std::size_t n_samples = 2000, std::size_t N = 128,
                                std::uint64_t seed = 0, double train_fraction = 0.8);

// Speech-like stand-in: amplitude-modulated harmonic (voiced) and band-limited noise-like (unvoiced) segments with
// pauses, normalized to unit mean power.
std::vector<double> synth_clean_signal(std::size_t length, Rng& rng, double sample_rate = 48000.0);

double signal_power(std::span<const double> x);

struct Mixture {
    std::vector<double> noisy;
    std::vector<double> scaled_noise;
    double gain = 1.0;  // scaled_noise = gain * noise
};

// Scales noise so that 10 log10(P_clean / P_scaled_noise) = snr_db, noisy = clean + scaled_noise.
Mixture mix_at_snr(std::span<const double> clean, std::span<const double> noise, double snr_db);

struct DenoiseConfig {
    std::size_t n_train = 500;
    std::size_t n_val = 100;
    std::size_t n_test = 100;
    std::size_t length = 48000;
    std::size_t cycle_length = 128;
    double snr_db = 5.0;
    bool carry_state = false;     // carry SLDS state across noise cycles
    bool predict_noise = false;   // targets = scaled noise instead of distorted speech
    double sample_rate = 48000.0;
    std::filesystem::path wav_dir;  // empty: synthetic clean signals

    std::size_t total() const { return n_train + n_val + n_test; }
};

// Inputs: the SLDS excitation scaled by the mixing gain. Targets: distorted speech (clean + scaled SLDS noise).
Dataset build_denoise_dataset(const DenoiseConfig& cfg, std::uint64_t seed);

}  // namespace tvssm
