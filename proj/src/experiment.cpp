#include "tvssm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "tvssm/dataset_io.hpp"
#include "tvssm/errors.hpp"

namespace tvssm {

namespace {

constexpr std::uint64_t kRunStream = 0x52554e;
constexpr std::uint64_t kDataStream = 0x44415441;
constexpr std::uint64_t kFixedStream = 0x464958;

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed_code(const std::array<int, 3>& f) {
    return "A" + std::to_string(f[0]) + "B" + std::to_string(f[1]) + "C" + std::to_string(f[2]);
}

bool valid_code(const std::string& s) {
    return s.size() == 3 && std::all_of(s.begin(), s.end(), [](char c) { return c == 'o' || c == 'x'; });
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    std::string bad;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) bad += (bad.empty() ? "" : ", ") + it.key();
    if (!bad.empty()) throw InvalidArgument("unknown " + where + " key(s): " + bad);
}

json train_to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"lr_ssm", t.lr_ssm},
            {"lr_others", t.lr_others},
            {"wd_ssm", t.wd_ssm},
            {"wd_others", t.wd_others},
            {"warmup_fraction", t.warmup_fraction},
            {"segment_length", t.segment_length},
            {"carry_state", t.carry_state},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_eps", t.adam_eps},
            {"projection_eps", t.projection_eps},
            {"norm_momentum", t.norm_momentum},
            {"eval_batch", t.eval_batch},
            {"checkpoint_every", t.checkpoint_every}};
}

TrainConfig train_from_json(const json& j, TrainConfig t) {
    reject_unknown(j,
                   {"epochs", "batch_size", "lr_ssm", "lr_others", "wd_ssm", "wd_others", "warmup_fraction",
                    "segment_length", "carry_state", "beta1", "beta2", "adam_eps", "projection_eps",
                    "norm_momentum", "eval_batch", "checkpoint_every"},
                   "train");
    take(j, "epochs", t.epochs);
    take(j, "batch_size", t.batch_size);
    take(j, "lr_ssm", t.lr_ssm);
    take(j, "lr_others", t.lr_others);
    take(j, "wd_ssm", t.wd_ssm);
    take(j, "wd_others", t.wd_others);
    take(j, "warmup_fraction", t.warmup_fraction);
    take(j, "segment_length", t.segment_length);
    take(j, "carry_state", t.carry_state);
    take(j, "beta1", t.beta1);
    take(j, "beta2", t.beta2);
    take(j, "adam_eps", t.adam_eps);
    take(j, "projection_eps", t.projection_eps);
    take(j, "norm_momentum", t.norm_momentum);
    take(j, "eval_batch", t.eval_batch);
    take(j, "checkpoint_every", t.checkpoint_every);
    return t;
}

json denoise_to_json(const DenoiseConfig& d) {
    return {{"n_train", d.n_train},         {"n_val", d.n_val},
            {"n_test", d.n_test},           {"length", d.length},
            {"cycle_length", d.cycle_length}, {"snr_db", d.snr_db},
            {"carry_state", d.carry_state}, {"predict_noise", d.predict_noise},
            {"sample_rate", d.sample_rate}, {"wav_dir", d.wav_dir.string()}};
}

DenoiseConfig denoise_from_json(const json& j, DenoiseConfig d) {
    reject_unknown(j,
                   {"n_train", "n_val", "n_test", "length", "cycle_length", "snr_db", "carry_state",
                    "predict_noise", "sample_rate", "wav_dir"},
                   "denoise");
    take(j, "n_train", d.n_train);
    take(j, "n_val", d.n_val);
    take(j, "n_test", d.n_test);
    take(j, "length", d.length);
    take(j, "cycle_length", d.cycle_length);
    take(j, "snr_db", d.snr_db);
    take(j, "carry_state", d.carry_state);
    take(j, "predict_noise", d.predict_noise);
    take(j, "sample_rate", d.sample_rate);
    if (j.contains("wav_dir")) d.wav_dir = j.at("wav_dir").get<std::string>();
    return d;
}

}  // namespace

std::string task_name(Task t) { return t == Task::FourMode ? "four_mode" : "denoise"; }

Task parse_task(const std::string& s) {
    if (s == "four_mode") return Task::FourMode;
    if (s == "denoise") return Task::Denoise;
    throw InvalidArgument("unknown task '" + s + "' (expected four_mode or denoise)");
}

std::size_t ExperimentConfig::state_dimension() const {
    if (match_budget && time_invariant_model()) return match_param_budget(n, K_A, K_B, K_C);
    return n;
}

void ExperimentConfig::validate() const {
    if (name.empty() || name.find_first_of(",\n\"") != std::string::npos)
        throw InvalidArgument("config name must be non-empty and free of commas, quotes and newlines");
    if (!valid_code(model)) throw InvalidArgument("model must be three o/x characters, got '" + model + "'");
    if (!valid_code(data)) throw InvalidArgument("data must be three o/x characters, got '" + data + "'");
    SwitchConfig::parse(data, fixed);
    if (layers == 0 || h == 0 || n == 0) throw InvalidArgument("layers, h and n must be >= 1");
    if (K_A == 0 || K_B == 0 || K_C == 0) throw InvalidArgument("K_A, K_B and K_C must be >= 1");
    if (n_seeds == 0) throw InvalidArgument("n_seeds must be >= 1");
    if (match_budget && !time_invariant_model())
        throw InvalidArgument("match_budget applies to the time-invariant model (model = xxx)");
    if (match_budget) (void)match_param_budget(n, K_A, K_B, K_C);
    if (task == Task::FourMode) {
        if (n_samples < 2) throw InvalidArgument("n_samples must be >= 2");
        if (N == 0 || N % 4 != 0) throw InvalidArgument("N must be a positive multiple of 4");
    } else {
        if (denoise.n_train == 0 || denoise.n_test == 0) throw InvalidArgument("denoise needs train and test samples");
        if (denoise.cycle_length == 0 || denoise.cycle_length % 4 != 0)
            throw InvalidArgument("denoise cycle_length must be a positive multiple of 4");
        if (denoise.length % denoise.cycle_length != 0)
            throw InvalidArgument("denoise length must be a multiple of cycle_length");
        if (train.segment_length == 0 || denoise.length % train.segment_length != 0)
            throw InvalidArgument("denoise training needs a segment_length dividing the signal length");
    }
    train.validate();
    network_spec().validate();
}

NetworkSpec ExperimentConfig::network_spec() const {
    NetworkSpec spec;
    spec.T = task == Task::FourMode ? N : train.segment_length;
    spec.use_norm = use_norm;
    spec.share_dictionary = share_dictionary;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerSpec ls;
        ls.h = h;
        ls.n = state_dimension();
        ls.K_A = K_A;
        ls.K_B = K_B;
        ls.K_C = K_C;
        ls.tv_A = model[0] == 'o';
        ls.tv_B = model[1] == 'o';
        ls.tv_C = model[2] == 'o';
        ls.activation = activation;
        spec.layers.push_back(ls);
    }
    return spec;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["task"] = task_name(c.task);
    j["model"] = c.model;
    j["data"] = c.data;
    if (c.fixed_policy == FixedPolicy::PerRun)
        j["fixed"] = "per_run";
    else
        j["fixed"] = c.fixed;
    j["layers"] = c.layers;
    j["h"] = c.h;
    j["n"] = c.n;
    j["K_A"] = c.K_A;
    j["K_B"] = c.K_B;
    j["K_C"] = c.K_C;
    j["activation"] = activation_name(c.activation);
    j["use_norm"] = c.use_norm;
    j["share_dictionary"] = c.share_dictionary;
    j["match_budget"] = c.match_budget;
    j["n_samples"] = c.n_samples;
    j["N"] = c.N;
    j["denoise"] = denoise_to_json(c.denoise);
    j["train"] = train_to_json(c.train);
    j["n_seeds"] = c.n_seeds;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.string();
    j["dataset_path"] = c.dataset_path.string();
    j["save_checkpoints"] = c.save_checkpoints;
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
    if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
    reject_unknown(j,
                   {"name", "task", "model", "data", "fixed", "layers", "h", "n", "K_A", "K_B", "K_C", "K",
                    "activation", "use_norm", "share_dictionary", "match_budget", "n_samples", "N", "denoise",
                    "train", "n_seeds", "seed", "output_dir", "dataset_path", "save_checkpoints"},
                   "config");
    ExperimentConfig c;
    try {
        take(j, "name", c.name);
        if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
        take(j, "model", c.model);
        take(j, "data", c.data);
        if (j.contains("fixed")) {
            const auto& f = j.at("fixed");
            if (f.is_string()) {
                if (f.get<std::string>() != "per_run")
                    throw InvalidArgument("fixed must be [a, b, c] or \"per_run\"");
                c.fixed_policy = FixedPolicy::PerRun;
            } else {
                c.fixed = f.get<std::array<int, 3>>();
            }
        }
        take(j, "layers", c.layers);
        take(j, "h", c.h);
        take(j, "n", c.n);
        if (j.contains("K")) c.K_A = c.K_B = c.K_C = j.at("K").get<std::size_t>();
        take(j, "K_A", c.K_A);
        take(j, "K_B", c.K_B);
        take(j, "K_C", c.K_C);
        if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
        take(j, "use_norm", c.use_norm);
        take(j, "share_dictionary", c.share_dictionary);
        take(j, "match_budget", c.match_budget);
        take(j, "n_samples", c.n_samples);
        take(j, "N", c.N);
        if (c.task == Task::Denoise) c.train.segment_length = 128;
        if (j.contains("denoise")) c.denoise = denoise_from_json(j.at("denoise"), c.denoise);
        if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
        take(j, "n_seeds", c.n_seeds);
        take(j, "seed", c.seed);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
        take(j, "save_checkpoints", c.save_checkpoints);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed experiment config: ") + e.what());
    }
    return c;
}

std::uint64_t run_seed(std::uint64_t base, std::size_t run) { return derive_seed(base, kRunStream, run); }

namespace {

std::array<int, 3> fixed_for_run(const ExperimentConfig& cfg, std::size_t run) {
    if (cfg.fixed_policy == FixedPolicy::Given) return cfg.fixed;
    const auto all = enumerate_fixed_configs(SwitchConfig::parse(cfg.data, cfg.fixed));
    return all[mix_seed(derive_seed(cfg.seed, kFixedStream, run)) % all.size()].fixed;
}

bool per_run_data(const ExperimentConfig& cfg) {
    return cfg.task == Task::FourMode && cfg.fixed_policy == FixedPolicy::PerRun && cfg.dataset_path.empty();
}

}  // namespace

Dataset experiment_dataset(const ExperimentConfig& cfg, std::size_t run) {
    if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
    if (cfg.task == Task::FourMode) {
        const auto sw = SwitchConfig::parse(cfg.data, fixed_for_run(cfg, run));
        const auto seed = per_run_data(cfg) ? derive_seed(cfg.seed, kDataStream, run) : derive_seed(cfg.seed, kDataStream);
        return build_four_mode_dataset(sw, cfg.n_samples, cfg.N, seed);
    }
    return build_denoise_dataset(cfg.denoise, derive_seed(cfg.seed, kDataStream));
}

namespace {

TrainData as_train_data(const Dataset& d, std::size_t segment_length) {
    return make_train_data(d.inputs, d.targets, segment_length);
}

RunRecord evaluate_run(const ExperimentConfig& cfg, const NetworkParams& params, const Dataset& test) {
    RunRecord r;
    if (cfg.task == Task::FourMode) {
        const auto pred = predict(params, test.inputs, cfg.train.eval_batch);
        r.mse = mse(test.targets.data, pred.data);
        r.snr_db = r.si_snr_db = std::nan("");
        return r;
    }
    const auto pred = predict_long(params, test.inputs, cfg.train.segment_length, cfg.train.carry_state,
                                   cfg.train.eval_batch);
    r.mse = mse(test.targets.data, pred.data);
    std::vector<double> snr, si;
    std::vector<double> clean_hat(test.inputs.steps);
    for (std::size_t b = 0; b < test.inputs.batch; ++b) {
        const auto clean = test.clean.channel(b, 0);
        const auto noise = test.scaled_noise.channel(b, 0);
        const auto yhat = pred.channel(b, 0);
        // Clean speech is recovered by subtracting the prediction from the distorted signal.
        for (std::size_t t = 0; t < clean_hat.size(); ++t) clean_hat[t] = (clean[t] + noise[t]) - yhat[t];
        snr.push_back(snr_db(clean, clean_hat));
        si.push_back(si_snr_db(clean, clean_hat));
    }
    r.snr_db = mean_std(snr).mean;
    r.si_snr_db = mean_std(si).mean;
    return r;
}

void write_outputs(const ExperimentResult& res) {
    const auto& dir = res.config.output_dir;
    if (dir.empty()) return;
    write_text_file(dir / "config.json", to_json(res.config).dump(2) + "\n");
    write_text_file(dir / "results.csv", results_csv(res));
    json s;
    s["config"] = res.config.name;
    s["runs"] = res.runs.size();
    s["mse"] = {{"mean", res.report.mse.mean}, {"std", res.report.mse.std}};
    if (res.config.task == Task::Denoise) {
        s["snr_db"] = {{"mean", res.report.snr_db.mean}, {"std", res.report.snr_db.std}};
        s["si_snr_db"] = {{"mean", res.report.si_snr_db.mean}, {"std", res.report.si_snr_db.std}};
    }
    s["params"] = res.params.total();
    s["inference_macs"] = res.macs.total();
    s["test_samples"] = res.report.n_samples;
    write_text_file(dir / "summary.json", s.dump(2) + "\n");
}

}  // namespace

std::string results_csv(const ExperimentResult& r) {
    std::string out = std::string(kResultsHeader) + "\n";
    for (const auto& run : r.runs) {
        out += r.config.name + "," + std::to_string(run.run) + "," + std::to_string(run.seed) + "," +
               fixed_code(run.fixed) + "," + fmt(run.mse) + "," + fmt(run.snr_db) + "," + fmt(run.si_snr_db) + "," +
               std::to_string(r.params.total()) + "," + std::to_string(r.macs.total()) + "\n";
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset* preloaded, std::ostream* log) {
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    const auto spec = cfg.network_spec();
    res.params = count_parameters(spec);
    res.macs = count_macs(spec, spec.T);

    Dataset shared;
    const Dataset* data = preloaded;
    if (!data && !per_run_data(cfg)) {
        shared = experiment_dataset(cfg);
        data = &shared;
    }

    for (std::size_t run = 0; run < cfg.n_seeds; ++run) {
        Dataset own;
        const Dataset* d = data;
        if (!d) {
            own = experiment_dataset(cfg, run);
            d = &own;
        }
        const auto train_split = d->subset(Split::Train);
        const auto val_split = d->subset(Split::Val);
        const auto test_split = d->subset(Split::Test);
        if (test_split.inputs.batch == 0) throw InvalidArgument("dataset has no test samples");

        TrainConfig tc = cfg.train;
        tc.seed = run_seed(cfg.seed, run);
        const auto run_dir = cfg.output_dir.empty() ? std::filesystem::path{}
                                                    : cfg.output_dir / ("run_" + std::to_string(run));
        if (cfg.save_checkpoints && !run_dir.empty()) tc.checkpoint_path = run_dir / "checkpoint.json";

        const std::size_t seg = cfg.task == Task::Denoise ? tc.segment_length : 0;
        const auto train_data = as_train_data(train_split, seg);
        TrainData val_data;
        if (val_split.inputs.batch) val_data = as_train_data(val_split, seg);
        const auto trained = train(spec, train_data, val_split.inputs.batch ? &val_data : nullptr, tc);

        RunRecord rec = evaluate_run(cfg, trained.params, test_split);
        rec.run = run;
        rec.seed = tc.seed;
        rec.fixed = cfg.task == Task::FourMode ? fixed_for_run(cfg, run) : std::array<int, 3>{0, 0, 0};
        res.runs.push_back(rec);
        res.report.add_run(rec.mse, rec.snr_db, rec.si_snr_db);
        res.report.n_samples = test_split.inputs.batch;

        if (!run_dir.empty()) {
            if (cfg.save_checkpoints) save_checkpoint(run_dir / "checkpoint.json", trained.params);
            write_text_file(run_dir / "history.csv", history_csv(trained.history));
        }
        if (log) {
            *log << cfg.name << " run " << run << " (" << fixed_code(rec.fixed) << "): mse " << fmt(rec.mse);
            if (cfg.task == Task::Denoise) *log << ", snr " << rec.snr_db << " dB, si-snr " << rec.si_snr_db << " dB";
            *log << std::endl;
        }
    }
    write_outputs(res);
    return res;
}

std::string grid_name(Grid g) {
    switch (g) {
        case Grid::Table1: return "table1";
        case Grid::Table4: return "table4";
        case Grid::Table5: return "table5";
    }
    return "table1";
}

Grid parse_grid(const std::string& s) {
    if (s == "table1") return Grid::Table1;
    if (s == "table4") return Grid::Table4;
    if (s == "table5") return Grid::Table5;
    throw InvalidArgument("unknown grid '" + s + "' (expected table1, table4 or table5)");
}

std::string scale_name(Scale s) { return s == Scale::Desk ? "desk" : "paper"; }

Scale parse_scale(const std::string& s) {
    if (s == "desk") return Scale::Desk;
    if (s == "paper") return Scale::Paper;
    throw InvalidArgument("unknown scale '" + s + "' (expected desk or paper)");
}

ExperimentConfig four_mode_preset(Scale scale, const std::string& model, const std::string& data) {
    ExperimentConfig c;
    c.task = Task::FourMode;
    c.model = model;
    c.data = data;
    c.name = "four_mode/data=" + data + "/model=" + model;
    c.fixed_policy = FixedPolicy::PerRun;
    c.layers = 1;
    c.h = 16;
    c.train.batch_size = 64;
    c.train.lr_ssm = 3e-2;
    c.train.lr_others = 3e-2;
    if (scale == Scale::Desk) {
        c.n = 8;
        c.K_A = c.K_B = c.K_C = 8;
        c.train.epochs = 60;
        c.n_seeds = 3;
    } else {
        c.n = 32;
        c.K_A = c.K_B = c.K_C = 16;
        c.train.epochs = 200;
        c.n_seeds = 3;
    }
    return c;
}

ExperimentConfig denoise_preset(Scale scale, bool time_varying) {
    ExperimentConfig c;
    c.task = Task::Denoise;
    c.model = time_varying ? "ooo" : "xxx";
    c.name = std::string("denoise/") + (time_varying ? "tv" : "ti");
    c.layers = 1;
    c.activation = Activation::Identity;
    c.n = 4;
    c.K_A = c.K_B = c.K_C = 4;
    c.match_budget = !time_varying;
    c.train.epochs = 1;
    c.train.segment_length = 128;
    c.train.lr_ssm = 1e-3;
    c.train.lr_others = 1e-2;
    if (time_varying) {
        c.train.wd_ssm = 0.0;
        c.train.wd_others = 1e-3;
        c.train.batch_size = 128;
    } else {
        c.train.wd_ssm = 1e-5;
        c.train.wd_others = 0.0;
        c.train.batch_size = 256;
    }
    if (scale == Scale::Desk) {
        c.h = 64;
        c.denoise.n_train = 160;
        c.denoise.n_val = 0;
        c.denoise.n_test = 40;
        c.n_seeds = 5;
    } else {
        c.h = 512;
        c.n_seeds = 10;
    }
    return c;
}

GridPlan plan_grid(Grid grid, Scale scale, std::uint64_t seed, std::size_t n_seeds) {
    GridPlan plan;
    plan.grid = grid;
    auto finish = [&](ExperimentConfig c, const std::string& row, const std::string& col) {
        c.seed = seed;
        if (n_seeds) c.n_seeds = n_seeds;
        c.name = grid_name(grid) + "/" + row + "/" + col;
        plan.cells.push_back({row, col, std::move(c)});
    };
    if (grid == Grid::Table1) {
        plan.rows = {"xxx", "xxo", "xox", "oxx", "ooo"};
        plan.cols = {"xxx", "xxo", "xox", "xoo", "oxx", "oxo", "oox", "ooo"};
        for (const auto& d : plan.rows)
            for (const auto& m : plan.cols) finish(four_mode_preset(scale, m, d), d, m);
    } else if (grid == Grid::Table4) {
        plan.rows = {"p=13", "p=49", "p=193"};
        plan.cols = {"tv", "ti"};
        const std::size_t nk[3] = {2, 4, 8};  // n_vary = K, n_invar = K * n_vary
        for (std::size_t r = 0; r < 3; ++r)
            for (bool tv : {true, false}) {
                auto c = denoise_preset(scale, tv);
                c.n = nk[r];
                c.K_A = c.K_B = c.K_C = nk[r];
                finish(c, plan.rows[r], tv ? "tv" : "ti");
            }
    } else {
        const std::array<std::array<std::size_t, 3>, 7> alloc{
            {{4, 4, 4}, {10, 1, 1}, {1, 10, 1}, {1, 1, 10}, {5, 5, 1}, {5, 1, 5}, {1, 5, 5}}};
        plan.cols = {"tv"};
        for (const auto& a : alloc) {
            const std::string row = "K=" + std::to_string(a[0]) + "-" + std::to_string(a[1]) + "-" + std::to_string(a[2]);
            plan.rows.push_back(row);
            auto c = denoise_preset(scale, true);
            c.K_A = a[0];
            c.K_B = a[1];
            c.K_C = a[2];
            finish(c, row, "tv");
        }
    }
    return plan;
}

namespace {

double cell_metric(const GridPlan& plan, const ExperimentResult& r) {
    return plan.grid == Grid::Table1 ? r.report.mse.mean : r.report.si_snr_db.mean;
}

double cell_std(const GridPlan& plan, const ExperimentResult& r) {
    return plan.grid == Grid::Table1 ? r.report.mse.std : r.report.si_snr_db.std;
}

}  // namespace

std::string GridResult::csv() const {
    const std::string metric = plan.grid == Grid::Table1 ? "mse" : "si_snr_db";
    std::string out = "row,col," + metric + "_mean," + metric + "_std,runs,params,inference_macs\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& c = plan.cells[i];
        const auto& r = results[i];
        out += c.row + "," + c.col + "," + fmt(cell_metric(plan, r)) + "," + fmt(cell_std(plan, r)) + "," +
               std::to_string(r.runs.size()) + "," + std::to_string(r.params.total()) + "," +
               std::to_string(r.macs.total()) + "\n";
    }
    return out;
}

std::string GridResult::markdown() const {
    std::map<std::pair<std::string, std::string>, const ExperimentResult*> at;
    for (std::size_t i = 0; i < results.size(); ++i) at[{plan.cells[i].row, plan.cells[i].col}] = &results[i];
    std::ostringstream os;
    os << "| " << (plan.grid == Grid::Table1 ? "data \\ model" : "config") << " |";
    for (const auto& c : plan.cols) os << " " << c << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < plan.cols.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& r : plan.rows) {
        os << "| " << r << " |";
        for (const auto& c : plan.cols) {
            const auto it = at.find({r, c});
            char buf[64] = "";
            if (it != at.end()) {
                if (plan.grid == Grid::Table1)
                    std::snprintf(buf, sizeof buf, "%.1e", cell_metric(plan, *it->second));
                else
                    std::snprintf(buf, sizeof buf, "%.1f ± %.1f dB", cell_metric(plan, *it->second),
                                  cell_std(plan, *it->second));
            }
            os << " " << buf << " |";
        }
        os << "\n";
    }
    return os.str();
}

GridResult reproduce_grid(Grid grid, Scale scale, std::uint64_t seed, std::size_t n_seeds,
                          const std::filesystem::path& out_dir, std::ostream* log) {
    GridResult res;
    res.plan = plan_grid(grid, scale, seed, n_seeds);
    // Denoising cells share one generated corpus.
    Dataset shared;
    bool have_shared = false;
    for (auto& cell : res.plan.cells) {
        if (!out_dir.empty()) {
            auto sub = cell.row + "_" + cell.col;
            std::replace(sub.begin(), sub.end(), '=', '-');
            cell.config.output_dir = out_dir / sub;
        }
        cell.config.validate();
    }
    for (const auto& cell : res.plan.cells) {
        const Dataset* pre = nullptr;
        if (cell.config.task == Task::Denoise) {
            if (!have_shared) {
                shared = experiment_dataset(cell.config);
                have_shared = true;
            }
            pre = &shared;
        }
        res.results.push_back(run_experiment(cell.config, pre, log));
    }
    if (!out_dir.empty()) {
        write_text_file(out_dir / (grid_name(grid) + ".csv"), res.csv());
        write_text_file(out_dir / (grid_name(grid) + ".md"), res.markdown());
    }
    return res;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::nan("");
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
}

struct Aggregate {
    std::vector<double> mse, snr, si;
    std::string params, macs;
};

}  // namespace

Report emit_report(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("results directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "results.csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no results.csv found under '" + dir.string() + "'");

    std::map<std::string, Aggregate> agg;
    std::vector<std::string> order;
    std::vector<std::string> offenders;
    for (const auto& f : files) {
        try {
            std::istringstream in(read_text_file(f));
            std::string line;
            if (!std::getline(in, line) || line != kResultsHeader) throw std::runtime_error("bad header");
            std::size_t rows = 0;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const auto cols = split_csv(line);
                if (cols.size() != 9) throw std::runtime_error("expected 9 columns");
                auto [it, fresh] = agg.try_emplace(cols[0]);
                if (fresh) order.push_back(cols[0]);
                auto& a = it->second;
                a.mse.push_back(parse_double(cols[4]));
                a.snr.push_back(parse_double(cols[5]));
                a.si.push_back(parse_double(cols[6]));
                a.params = cols[7];
                a.macs = cols[8];
                ++rows;
            }
            if (rows == 0) throw std::runtime_error("no rows");
        } catch (const std::exception& e) {
            offenders.push_back(f.string() + " (" + e.what() + ")");
        }
    }
    if (!offenders.empty()) {
        std::string msg = "corrupt results file(s):";
        for (const auto& o : offenders) msg += "\n  " + o;
        throw IoError(msg);
    }

    auto cell = [](const std::vector<double>& v, const char* f) {
        const auto ms = mean_std(v);
        if (std::isnan(ms.mean)) return std::string("-");
        char buf[64];
        std::snprintf(buf, sizeof buf, f, ms.mean, ms.std);
        return std::string(buf);
    };
    Report rep;
    std::ostringstream md;
    md << "| config | runs | MSE | SNR (dB) | SI-SNR (dB) | params | inference MACs |\n";
    md << "|---|---|---|---|---|---|---|\n";
    rep.csv = "config,runs,mse_mean,mse_std,snr_db_mean,snr_db_std,si_snr_db_mean,si_snr_db_std,params,inference_macs\n";
    for (const auto& name : order) {
        const auto& a = agg.at(name);
        md << "| " << name << " | " << a.mse.size() << " | " << cell(a.mse, "%.2e ± %.1e") << " | "
           << cell(a.snr, "%.2f ± %.2f") << " | " << cell(a.si, "%.2f ± %.2f") << " | " << a.params << " | " << a.macs
           << " |\n";
        const auto m = mean_std(a.mse), s = mean_std(a.snr), si = mean_std(a.si);
        rep.csv += name + "," + std::to_string(a.mse.size()) + "," + fmt(m.mean) + "," + fmt(m.std) + "," +
                   fmt(s.mean) + "," + fmt(s.std) + "," + fmt(si.mean) + "," + fmt(si.std) + "," + a.params + "," +
                   a.macs + "\n";
    }
    rep.markdown = md.str();
    return rep;
}

}  // namespace tvssm
