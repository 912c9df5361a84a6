#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tvssm/dataset_io.hpp"
#include "tvssm/datagen.hpp"
#include "tvssm/errors.hpp"
#include "tvssm/experiment.hpp"
#include "tvssm/metrics.hpp"
#include "tvssm/serialize.hpp"
#include "tvssm/training.hpp"
#include "tvssm/wav.hpp"

using namespace tvssm;

namespace {

// key=value with dotted keys into nested objects; the value is parsed as JSON when possible.
void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
        node = &(*node)[key.substr(start, dot - start)];
        if (!node->is_object() && !node->is_null()) throw InvalidArgument("'" + key + "' does not name a nested key");
    }
    (*node)[key.substr(start)] = value;
}

json load_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw InvalidArgument("cannot parse '" + path + "': " + e.what());
    }
}

struct ConfigArgs {
    std::string config_path;
    std::string preset;  // four_mode or denoise-tv / denoise-ti
    std::string scale = "desk";
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config_path, "JSON experiment config");
        app->add_option("--preset", preset, "Start from a preset: four_mode, denoise-tv or denoise-ti")
            ->check(CLI::IsMember({"four_mode", "denoise-tv", "denoise-ti"}));
        app->add_option("--scale", scale, "Preset scale")->check(CLI::IsMember({"desk", "paper"}));
        app->add_option("--set", sets, "Override a config field, e.g. --set train.epochs=5");
        app->add_option("--seed", seed, "Base seed");
        app->add_option("-o,--out", out, "Output directory");
    }

    ExperimentConfig resolve() const {
        json j = json::object();
        if (!preset.empty()) {
            const auto s = parse_scale(scale);
            const auto base = preset == "four_mode" ? four_mode_preset(s, "ooo", "ooo")
                                                    : denoise_preset(s, preset == "denoise-tv");
            j = to_json(base);
        }
        if (!config_path.empty()) j.update(load_json_file(config_path), true);
        for (const auto& s : sets) apply_override(j, s);
        if (seed) j["seed"] = *seed;
        if (!out.empty()) j["output_dir"] = out;
        auto cfg = experiment_config_from_json(j);
        cfg.validate();
        return cfg;
    }
};

void print_counts(const NetworkSpec& spec) {
    const auto p = count_parameters(spec);
    const auto m = count_macs(spec, spec.T);
    std::printf("parameters: total %zu (A %zu, B %zu, C %zu, c_bias %zu, W %zu, norm %zu)\n", p.total(), p.A, p.B, p.C,
                p.c_bias, p.W, p.norm);
    for (std::size_t l = 0; l < p.per_neuron.size(); ++l)
        std::printf("  layer %zu: %zu parameters per neuron\n", l, p.per_neuron[l]);
    std::printf("inference MACs over T=%zu: total %zu (recurrence %zu, mixing %zu, norm %zu)\n", spec.T, m.total(),
                m.recurrence, m.mixing, m.norm);
    std::printf("  time-varying matrices: %zu MACs to precompute, %zu scalars stored\n", m.precompute,
                m.matrix_storage);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-varying state-space model networks: data generation, training and evaluation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a four-mode or denoising dataset");
    std::string gen_task = "four_mode", gen_data = "ooo", gen_out, gen_wav_dir, gen_wav_out;
    std::vector<int> gen_fixed{1, 1, 1};
    std::uint64_t gen_seed = 0;
    std::size_t gen_samples = 2000, gen_N = 128, gen_train = 500, gen_val = 100, gen_test = 100, gen_wav_count = 3;
    bool gen_carry = false, gen_predict_noise = false;
    gen->add_option("--task", gen_task)->check(CLI::IsMember({"four_mode", "denoise"}));
    gen->add_option("--data", gen_data, "Switch pattern, o = switched, x = fixed (A, B, C)");
    gen->add_option("--fixed", gen_fixed, "Fixed mode indices for non-switching roles")->expected(3)->delimiter(',');
    gen->add_option("--seed", gen_seed);
    gen->add_option("--n-samples", gen_samples, "Four-mode sample count");
    gen->add_option("--length", gen_N, "Four-mode sequence length (N)");
    gen->add_option("--n-train", gen_train);
    gen->add_option("--n-val", gen_val);
    gen->add_option("--n-test", gen_test);
    gen->add_flag("--carry-state", gen_carry, "Carry SLDS state across noise cycles");
    gen->add_flag("--predict-noise", gen_predict_noise, "Targets are the scaled noise");
    gen->add_option("--wav-dir", gen_wav_dir, "Directory of 16-bit mono WAV clean signals");
    gen->add_option("--wav-out", gen_wav_out, "Write clean/noisy WAVs of the first samples here");
    gen->add_option("--wav-count", gen_wav_count);
    gen->add_option("-o,--out", gen_out, "Dataset file")->required();

    // train
    auto* tr = app.add_subcommand("train", "Run an experiment: train n_seeds models and evaluate on the test split");
    ConfigArgs tr_args;
    tr_args.add(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "test";
    std::size_t ev_segment = 0;
    bool ev_carry = false;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data, "Dataset file")->required();
    ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--segment", ev_segment, "Segment length for long sequences (default: network horizon)");
    ev->add_flag("--carry-state", ev_carry);

    // grid
    auto* gr = app.add_subcommand("grid", "Reproduce an experiment grid");
    std::string gr_grid, gr_scale = "desk", gr_out;
    std::uint64_t gr_seed = 0;
    std::size_t gr_seeds = 0;
    gr->add_option("--grid", gr_grid)->required()->check(CLI::IsMember({"table1", "table4", "table5"}));
    gr->add_option("--scale", gr_scale)->check(CLI::IsMember({"desk", "paper"}));
    gr->add_option("--seed", gr_seed)->required();
    gr->add_option("--n-seeds", gr_seeds, "Runs per cell (default: preset)");
    gr->add_option("-o,--out", gr_out, "Output directory");

    // audit
    auto* au = app.add_subcommand("audit", "Parameter and MAC accounting, or a report over a results directory");
    ConfigArgs au_args;
    au_args.add(au);
    std::string au_results;
    au->add_option("--results", au_results, "Summarize every results.csv below this directory");

    // fd-check
    auto* fd = app.add_subcommand("fd-check", "Compare analytic gradients with central finite differences");
    std::size_t fd_h = 2, fd_n = 2, fd_K = 2, fd_T = 8, fd_batch = 2, fd_layers = 1;
    std::string fd_act = "gelu";
    std::uint64_t fd_seed = 0;
    double fd_step = 1e-6, fd_tol = 1e-5;
    fd->add_option("--neurons", fd_h, "Neurons per layer (h)");
    fd->add_option("--state-dim", fd_n, "State dimension (n)");
    fd->add_option("--basis", fd_K, "Basis functions per role (K)");
    fd->add_option("--steps", fd_T, "Sequence length (T)");
    fd->add_option("--batch", fd_batch);
    fd->add_option("--layers", fd_layers);
    fd->add_option("--activation", fd_act)->check(CLI::IsMember({"identity", "gelu"}));
    fd->add_option("--seed", fd_seed);
    fd->add_option("--step", fd_step);
    fd->add_option("--tolerance", fd_tol);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            Dataset d;
            if (gen_task == "four_mode") {
                const auto sw = SwitchConfig::parse(gen_data, {gen_fixed[0], gen_fixed[1], gen_fixed[2]});
                d = build_four_mode_dataset(sw, gen_samples, gen_N, gen_seed);
            } else {
                DenoiseConfig dc;
                dc.n_train = gen_train;
                dc.n_val = gen_val;
                dc.n_test = gen_test;
                dc.carry_state = gen_carry;
                dc.predict_noise = gen_predict_noise;
                dc.wav_dir = gen_wav_dir;
                d = build_denoise_dataset(dc, gen_seed);
                if (!gen_wav_out.empty()) {
                    const std::filesystem::path dir = gen_wav_out;
                    for (std::size_t i = 0; i < std::min(gen_wav_count, d.inputs.batch); ++i) {
                        const auto clean = d.clean.channel(i, 0);
                        std::vector<double> noisy(clean.size());
                        for (std::size_t t = 0; t < noisy.size(); ++t) noisy[t] = clean[t] + d.scaled_noise(i, 0, t);
                        // Unit-power signals are attenuated to stay inside the 16-bit range.
                        std::vector<double> c(clean.begin(), clean.end());
                        for (auto& v : c) v *= 0.25;
                        for (auto& v : noisy) v *= 0.25;
                        write_wav(dir / ("clean_" + std::to_string(i) + ".wav"), c);
                        write_wav(dir / ("noisy_" + std::to_string(i) + ".wav"), noisy);
                    }
                }
            }
            save_dataset(gen_out, d);
            std::printf("wrote %zu samples to %s (+ %s)\n", d.inputs.batch, gen_out.c_str(),
                        sidecar_path(gen_out).string().c_str());
            return 0;
        }

        if (*tr) {
            const auto cfg = tr_args.resolve();
            const auto res = run_experiment(cfg, nullptr, &std::cerr);
            std::printf("%s: %zu runs, test MSE %.4e ± %.2e", cfg.name.c_str(), res.runs.size(), res.report.mse.mean,
                        res.report.mse.std);
            if (cfg.task == Task::Denoise)
                std::printf(", SNR %.2f ± %.2f dB, SI-SNR %.2f ± %.2f dB", res.report.snr_db.mean,
                            res.report.snr_db.std, res.report.si_snr_db.mean, res.report.si_snr_db.std);
            std::printf("\nparams %zu, inference MACs %zu\n", res.params.total(), res.macs.total());
            if (!cfg.output_dir.empty()) std::printf("results in %s\n", cfg.output_dir.string().c_str());
            return 0;
        }

        if (*ev) {
            const auto params = load_checkpoint(ev_ckpt);
            const auto d = load_dataset(ev_data).subset(parse_split(ev_split));
            if (d.inputs.batch == 0) throw InvalidArgument("split '" + ev_split + "' is empty");
            const std::size_t seg = ev_segment ? ev_segment : params.spec.T;
            const auto pred = predict_long(params, d.inputs, seg, ev_carry);
            std::printf("%s split: %zu samples, MSE %.6e\n", ev_split.c_str(), d.inputs.batch,
                        mse(d.targets.data, pred.data));
            if (d.clean.batch) {
                std::vector<double> snr, si, hat(d.inputs.steps);
                for (std::size_t b = 0; b < d.inputs.batch; ++b) {
                    const auto clean = d.clean.channel(b, 0);
                    for (std::size_t t = 0; t < hat.size(); ++t)
                        hat[t] = clean[t] + d.scaled_noise(b, 0, t) - pred(b, 0, t);
                    snr.push_back(snr_db(clean, hat));
                    si.push_back(si_snr_db(clean, hat));
                }
                const auto s = mean_std(snr), q = mean_std(si);
                std::printf("SNR %.2f ± %.2f dB, SI-SNR %.2f ± %.2f dB\n", s.mean, s.std, q.mean, q.std);
            }
            return 0;
        }

        if (*gr) {
            const auto res =
                reproduce_grid(parse_grid(gr_grid), parse_scale(gr_scale), gr_seed, gr_seeds, gr_out, &std::cerr);
            std::cout << res.markdown();
            return 0;
        }

        if (*au) {
            if (!au_results.empty()) {
                std::cout << emit_report(au_results).markdown;
                return 0;
            }
            const auto cfg = au_args.resolve();
            print_counts(cfg.network_spec());
            return 0;
        }

        if (*fd) {
            NetworkSpec spec;
            spec.T = fd_T;
            for (std::size_t l = 0; l < fd_layers; ++l) {
                LayerSpec ls;
                ls.h = fd_h;
                ls.n = fd_n;
                ls.K_A = ls.K_B = ls.K_C = fd_K;
                ls.activation = parse_activation(fd_act);
                spec.layers.push_back(ls);
            }
            Rng rng(fd_seed);
            const auto params = init_network(spec, rng);
            SequenceBatch x(fd_batch, 1, fd_T), y(fd_batch, 1, fd_T);
            for (auto& v : x.data) v = uniform(rng, -1.0, 1.0);
            for (auto& v : y.data) v = uniform(rng, -1.0, 1.0);
            const auto rep = fd_check(params, x, y, fd_step, fd_tol);
            for (const auto& w : rep.warnings) std::printf("warning: %s\n", w.c_str());
            for (const auto& t : rep.tensors)
                std::printf("%-28s %5zu  max rel %.3e  max abs %.3e%s\n", t.name.c_str(), t.size, t.max_rel_error,
                            t.max_abs_error, t.flagged ? "  FAIL" : "");
            std::printf("%s: max relative error %.3e (tolerance %.1e)\n", rep.passed ? "PASS" : "FAIL",
                        rep.max_rel_error, fd_tol);
            return rep.passed ? 0 : 1;
        }
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
