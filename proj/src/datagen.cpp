#include "tvssm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "tvssm/errors.hpp"
#include "tvssm/wav.hpp"

namespace tvssm {

SLDSSpec SLDSSpec::four_mode(std::size_t cycle_length) {
    SLDSSpec s;
    s.cycle_length = cycle_length;
    s.modes[0] = {{0.9, 0.8, 0.9, 0.8}, {0.9, 0.8, 0.9, 0.8}, {0.1, 0.2, 0.1, 0.2}};
    s.modes[1] = {{-0.1, -0.2, -0.1, -0.2}, {-0.9, -0.8, -0.9, -0.8}, {-0.5, -0.7, -0.7, -0.5}};
    s.modes[2] = {{-0.9, -0.8, -0.9, -0.8}, {-0.1, -0.2, -0.1, -0.2}, {-0.1, -0.2, -0.1, -0.2}};
    s.modes[3] = {{0.1, 0.2, 0.1, 0.2}, {0.1, 0.2, 0.1, 0.2}, {0.9, 0.8, 0.9, 0.8}};
    return s;
}

SwitchConfig SwitchConfig::parse(const std::string& code, std::array<int, 3> fixed) {
    if (code.size() != 3) throw InvalidArgument("switch code must have three o/x characters, got '" + code + "'");
    SwitchConfig sw;
    bool* flags[3] = {&sw.switch_A, &sw.switch_B, &sw.switch_C};
    for (std::size_t i = 0; i < 3; ++i) {
        if (code[i] == 'o')
            *flags[i] = true;
        else if (code[i] == 'x')
            *flags[i] = false;
        else
            throw InvalidArgument("switch code must use 'o' (switched) or 'x' (fixed), got '" + code + "'");
    }
    sw.fixed = fixed;
    sw.validate();
    return sw;
}

std::string SwitchConfig::code() const {
    return std::string{switch_A ? 'o' : 'x', switch_B ? 'o' : 'x', switch_C ? 'o' : 'x'};
}

void SwitchConfig::validate() const {
    for (int j : fixed)
        if (j < 1 || j > 4) throw InvalidArgument("fixed mode indices must be in 1..4");
}

std::vector<SwitchConfig> enumerate_fixed_configs(const SwitchConfig& pattern) {
    std::vector<SwitchConfig> out{pattern};
    const bool switched[3] = {pattern.switch_A, pattern.switch_B, pattern.switch_C};
    for (std::size_t role = 0; role < 3; ++role) {
        if (switched[role]) continue;
        std::vector<SwitchConfig> next;
        for (const auto& base : out)
            for (int m = 1; m <= 4; ++m) {
                auto c = base;
                c.fixed[role] = m;
                next.push_back(c);
            }
        out = std::move(next);
    }
    return out;
}

std::vector<double> sample_sinusoid_input(std::size_t N, Rng& rng) {
    if (N < 2) throw InvalidArgument("sample_sinusoid_input: N must be >= 2");
    std::vector<double> u(N, 0.0);
    const double half = static_cast<double>(N) / 2.0;
    for (int component = 0; component < 2; ++component) {
        const double l = uniform(rng, 0.0, half);
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double omega = 2.0 * std::numbers::pi * l / static_cast<double>(N);
        for (std::size_t t = 0; t < N; ++t) u[t] += std::sin(omega * static_cast<double>(t) + phase);
    }
    return u;
}

std::vector<double> slds_simulate(const SLDSSpec& spec, const SwitchConfig& sw, std::span<const double> u,
                                  std::span<const double> x0, bool reset_each_cycle) {
    sw.validate();
    if (spec.cycle_length == 0 || spec.cycle_length % 4 != 0)
        throw InvalidArgument("slds_simulate: cycle length " + std::to_string(spec.cycle_length) +
                              " is not divisible by 4");
    if (u.size() % spec.cycle_length != 0)
        throw InvalidArgument("slds_simulate: input length " + std::to_string(u.size()) +
                              " is not a multiple of the cycle length");
    if (!x0.empty() && x0.size() != 4) throw InvalidArgument("slds_simulate: x0 must have 4 entries");

    std::array<double, 4> x{};
    if (!x0.empty()) std::copy(x0.begin(), x0.end(), x.begin());
    std::vector<double> y(u.size());
    for (std::size_t t = 0; t < u.size(); ++t) {
        const std::size_t m = spec.mode_at(t);
        const auto& mA = spec.modes[sw.switch_A ? m : static_cast<std::size_t>(sw.fixed[0] - 1)];
        const auto& mB = spec.modes[sw.switch_B ? m : static_cast<std::size_t>(sw.fixed[1] - 1)];
        const auto& mC = spec.modes[sw.switch_C ? m : static_cast<std::size_t>(sw.fixed[2] - 1)];
        if (t % spec.cycle_length == 0 && (t == 0 || reset_each_cycle)) {
            if (t > 0) x.fill(0.0);
        } else {
            for (std::size_t i = 0; i < 4; ++i) x[i] = mA.A_diag[i] * x[i] + mB.B[i] * u[t - 1];
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < 4; ++i) acc += mC.C[i] * x[i];
        y[t] = acc;
    }
    return y;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw InvalidArgument("unknown split '" + s + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

namespace {

SequenceBatch take_rows(const SequenceBatch& src, const std::vector<std::size_t>& rows) {
    if (src.batch == 0) return {};
    SequenceBatch out(rows.size(), src.channels, src.steps);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.sample(rows[i]), src.sample_size(), out.sample(i));
    return out;
}

}  // namespace

Dataset Dataset::subset(Split s) const {
    const auto rows = indices(s);
    Dataset d;
    d.inputs = take_rows(inputs, rows);
    d.targets = take_rows(targets, rows);
    d.clean = take_rows(clean, rows);
    d.scaled_noise = take_rows(scaled_noise, rows);
    d.split.assign(rows.size(), s);
    d.seed = seed;
    d.provenance = provenance;
    return d;
}

Dataset build_four_mode_dataset(const SwitchConfig& sw, std::size_t n_samples, std::size_t N, std::uint64_t seed,
                                double train_fraction) {
    sw.validate();
    if (n_samples == 0) throw InvalidArgument("build_four_mode_dataset: n_samples must be >= 1");
    const auto spec = SLDSSpec::four_mode(N);
    Dataset d;
    d.inputs = SequenceBatch(n_samples, 1, N);
    d.targets = SequenceBatch(n_samples, 1, N);
    d.seed = seed;
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n_samples)));
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng(derive_seed(seed, 0x464du, i));
        const auto u = sample_sinusoid_input(N, rng);
        const auto y = slds_simulate(spec, sw, u);
        std::copy(u.begin(), u.end(), d.inputs.channel(i, 0).begin());
        std::copy(y.begin(), y.end(), d.targets.channel(i, 0).begin());
        d.split.push_back(i < n_train ? Split::Train : Split::Test);
    }
    nlohmann::json prov = {{"task", "four_mode"},      {"switch", sw.code()}, {"fixed", sw.fixed},
                           {"n_samples", n_samples},   {"N", N},              {"seed", seed},
                           {"train_fraction", train_fraction}};
    d.provenance = prov.dump();
    return d;
}

double signal_power(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(x.size());
}

std::vector<double> synth_clean_signal(std::size_t length, Rng& rng, double sample_rate) {
    if (length == 0) throw InvalidArgument("synth_clean_signal: length must be >= 1");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> s(length, 0.0);
    const auto min_seg = static_cast<std::size_t>(0.05 * sample_rate);
    const auto max_seg = static_cast<std::size_t>(0.2 * sample_rate);
    std::size_t pos = 0;
    bool first = true;
    while (pos < length) {
        const auto seg = std::min(length - pos, static_cast<std::size_t>(uniform(rng, static_cast<double>(min_seg),
                                                                                 static_cast<double>(max_seg))));
        const double kind = first ? 0.0 : uniform(rng, 0.0, 1.0);
        first = false;
        const double segd = static_cast<double>(seg);
        const double ramp = std::max(1.0, 0.15 * segd);
        const double am_rate = uniform(rng, 3.0, 7.0);
        const double am_phase = uniform(rng, 0.0, two_pi);
        auto envelope = [&](std::size_t i) {
            const double di = static_cast<double>(i);
            double e = 1.0;
            if (di < ramp) e = 0.5 - 0.5 * std::cos(std::numbers::pi * di / ramp);
            if (segd - di < ramp) e = std::min(e, 0.5 - 0.5 * std::cos(std::numbers::pi * (segd - di) / ramp));
            return e * (1.0 + 0.3 * std::sin(two_pi * am_rate * di / sample_rate + am_phase));
        };

        if (kind < 0.6) {
            // voiced: harmonics of a vibrato f0 below 4 kHz, shaped by two formant bumps
            const double f0 = uniform(rng, 90.0, 250.0);
            const double vib_rate = uniform(rng, 4.0, 6.0);
            const double vib_phase = uniform(rng, 0.0, two_pi);
            const double f1 = uniform(rng, 300.0, 900.0);
            const double f2 = uniform(rng, 900.0, 2500.0);
            const auto harmonics = static_cast<std::size_t>(4000.0 / (f0 * 1.05));
            std::vector<double> amp(harmonics), phase(harmonics);
            for (std::size_t h = 0; h < harmonics; ++h) {
                const double f = f0 * static_cast<double>(h + 1);
                amp[h] = (1.0 / static_cast<double>(h + 1)) *
                         (1.0 + 2.0 * std::exp(-std::pow((f - f1) / 150.0, 2)) +
                          1.5 * std::exp(-std::pow((f - f2) / 200.0, 2)));
                phase[h] = uniform(rng, 0.0, two_pi);
            }
            double base_phase = 0.0;
            for (std::size_t i = 0; i < seg; ++i) {
                const double inst =
                    f0 * (1.0 + 0.03 * std::sin(two_pi * vib_rate * static_cast<double>(i) / sample_rate + vib_phase));
                base_phase += two_pi * inst / sample_rate;
                double v = 0.0;
                for (std::size_t h = 0; h < harmonics; ++h)
                    v += amp[h] * std::sin(static_cast<double>(h + 1) * base_phase + phase[h]);
                s[pos + i] = envelope(i) * v;
            }
        } else if (kind < 0.85) {
            // unvoiced: dense random-phase partials in 1.5-6 kHz
            constexpr std::size_t partials = 32;
            std::array<double, partials> freq{}, phase{};
            for (std::size_t p = 0; p < partials; ++p) {
                freq[p] = uniform(rng, 1500.0, 6000.0);
                phase[p] = uniform(rng, 0.0, two_pi);
            }
            const double level = 0.4 / std::sqrt(static_cast<double>(partials));
            for (std::size_t i = 0; i < seg; ++i) {
                double v = 0.0;
                for (std::size_t p = 0; p < partials; ++p)
                    v += std::sin(two_pi * freq[p] * static_cast<double>(i) / sample_rate + phase[p]);
                s[pos + i] = envelope(i) * level * v;
            }
        }
        // otherwise: pause
        pos += seg;
    }
    const double p = signal_power(s);
    const double scale = 1.0 / std::sqrt(p);
    for (auto& v : s) v *= scale;
    return s;
}

Mixture mix_at_snr(std::span<const double> clean, std::span<const double> noise, double snr_db) {
    if (clean.size() != noise.size()) throw InvalidArgument("mix_at_snr: clean and noise lengths differ");
    const double pc = signal_power(clean);
    const double pn = signal_power(noise);
    if (!(pc > 0.0)) throw InvalidArgument("mix_at_snr: clean signal has zero power");
    if (!(pn > 0.0)) throw InvalidArgument("mix_at_snr: noise has zero power");
    Mixture m;
    m.gain = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
    m.scaled_noise.resize(noise.size());
    m.noisy.resize(noise.size());
    for (std::size_t i = 0; i < noise.size(); ++i) {
        m.scaled_noise[i] = m.gain * noise[i];
        m.noisy[i] = clean[i] + m.scaled_noise[i];
    }
    return m;
}

namespace {

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("WAV directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

Dataset build_denoise_dataset(const DenoiseConfig& cfg, std::uint64_t seed) {
    if (cfg.total() == 0) throw InvalidArgument("build_denoise_dataset: no samples requested");
    if (cfg.length % cfg.cycle_length != 0)
        throw InvalidArgument("build_denoise_dataset: length must be a multiple of the noise cycle length");
    std::vector<std::filesystem::path> wavs;
    if (!cfg.wav_dir.empty()) {
        wavs = list_wavs(cfg.wav_dir);
        if (wavs.size() < cfg.total())
            throw IoError("WAV directory '" + cfg.wav_dir.string() + "' has " + std::to_string(wavs.size()) +
                          " files, " + std::to_string(cfg.total()) + " needed");
    }

    const auto slds = SLDSSpec::four_mode(cfg.cycle_length);
    const SwitchConfig all_switching;
    const std::size_t n = cfg.total();
    const std::size_t L = cfg.length;
    const std::size_t cycles = L / cfg.cycle_length;

    Dataset d;
    d.inputs = SequenceBatch(n, 1, L);
    d.targets = SequenceBatch(n, 1, L);
    d.clean = SequenceBatch(n, 1, L);
    d.scaled_noise = SequenceBatch(n, 1, L);
    d.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x444eu, i));
        std::vector<double> clean;
        if (wavs.empty()) {
            clean = synth_clean_signal(L, rng, cfg.sample_rate);
        } else {
            auto w = read_wav(wavs[i]);
            if (w.samples.size() != L)
                throw IoError("WAV '" + wavs[i].string() + "' has " + std::to_string(w.samples.size()) +
                              " samples, expected " + std::to_string(L));
            clean = std::move(w.samples);
        }
        std::vector<double> drive;
        drive.reserve(L);
        for (std::size_t c = 0; c < cycles; ++c) {
            const auto u = sample_sinusoid_input(cfg.cycle_length, rng);
            drive.insert(drive.end(), u.begin(), u.end());
        }
        const auto noise = slds_simulate(slds, all_switching, drive, {}, !cfg.carry_state);
        const auto mix = mix_at_snr(clean, noise, cfg.snr_db);
        for (std::size_t t = 0; t < L; ++t) {
            d.inputs(i, 0, t) = mix.gain * drive[t];
            d.targets(i, 0, t) = cfg.predict_noise ? mix.scaled_noise[t] : mix.noisy[t];
            d.clean(i, 0, t) = clean[t];
            d.scaled_noise(i, 0, t) = mix.scaled_noise[t];
        }
        d.split.push_back(i < cfg.n_train ? Split::Train : (i < cfg.n_train + cfg.n_val ? Split::Val : Split::Test));
    }
    nlohmann::json prov = {{"task", "denoise"},          {"n_train", cfg.n_train},
                           {"n_val", cfg.n_val},         {"n_test", cfg.n_test},
                           {"length", cfg.length},       {"cycle_length", cfg.cycle_length},
                           {"snr_db", cfg.snr_db},       {"carry_state", cfg.carry_state},
                           {"predict_noise", cfg.predict_noise}, {"sample_rate", cfg.sample_rate},
                           {"wav_dir", cfg.wav_dir.string()},    {"seed", seed}};
    d.provenance = prov.dump();
    return d;
}

}  // namespace tvssm
