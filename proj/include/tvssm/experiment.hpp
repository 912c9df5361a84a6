#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tvssm/datagen.hpp"
#include "tvssm/metrics.hpp"
#include "tvssm/network.hpp"
#include "tvssm/serialize.hpp"
#include "tvssm/training.hpp"

namespace tvssm {

enum class Task { FourMode, Denoise };

// Given: use `fixed` for every run. PerRun: each run draws one fixed-mode assignment from the enumeration.
enum class FixedPolicy { Given, PerRun };

struct ExperimentConfig {
    std::string name = "run";
    Task task = Task::FourMode;
    std::string model = "ooo";  // o = time-varying role, x = time-invariant role (A, B, C)
    std::string data = "ooo";   // four-mode switch pattern
    std::array<int, 3> fixed{1, 1, 1};
    FixedPolicy fixed_policy = FixedPolicy::Given;

    std::size_t layers = 1;
    std::size_t h = 8;
    std::size_t n = 8;  // n_vary; a time-invariant model with match_budget gets n_invar instead
    std::size_t K_A = 4, K_B = 4, K_C = 4;
    Activation activation = Activation::Identity;
    bool use_norm = true;
    bool share_dictionary = false;
    bool match_budget = false;

    std::size_t n_samples = 2000;  // four-mode
    std::size_t N = 128;
    DenoiseConfig denoise;
    TrainConfig train;

    std::size_t n_seeds = 1;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;    // empty: nothing is written
    std::filesystem::path dataset_path;  // load instead of generating
    bool save_checkpoints = true;

    void validate() const;
    bool time_invariant_model() const { return model == "xxx"; }
    std::size_t state_dimension() const;
    NetworkSpec network_spec() const;
};

std::string task_name(Task t);
Task parse_task(const std::string& s);

json to_json(const ExperimentConfig& cfg);
// Missing keys take defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const json& j);

struct RunRecord {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    std::array<int, 3> fixed{1, 1, 1};
    double mse = 0.0;
    double snr_db = 0.0;     // NaN for the four-mode task
    double si_snr_db = 0.0;  // NaN for the four-mode task
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<RunRecord> runs;
    MetricReport report;
    ParameterCount params;
    MacCount macs;
};

std::uint64_t run_seed(std::uint64_t base, std::size_t run);

// Trains config.n_seeds models and evaluates each on the test split. `preloaded` replaces data generation.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset* preloaded = nullptr,
                                std::ostream* log = nullptr);

Dataset experiment_dataset(const ExperimentConfig& cfg, std::size_t run = 0);

inline constexpr const char* kResultsHeader = "config,run,seed,fixed,mse,snr_db,si_snr_db,params,inference_macs";
std::string results_csv(const ExperimentResult& r);

enum class Grid { Table1, Table4, Table5 };
enum class Scale { Desk, Paper };

std::string grid_name(Grid g);
Grid parse_grid(const std::string& s);
std::string scale_name(Scale s);
Scale parse_scale(const std::string& s);

ExperimentConfig four_mode_preset(Scale scale, const std::string& model, const std::string& data);
ExperimentConfig denoise_preset(Scale scale, bool time_varying);

struct GridCell {
    std::string row, col;
    ExperimentConfig config;
};

struct GridPlan {
    Grid grid;
    std::vector<std::string> rows, cols;
    std::vector<GridCell> cells;  // row-major over rows x cols; absent combinations are skipped
};

GridPlan plan_grid(Grid grid, Scale scale, std::uint64_t seed, std::size_t n_seeds);

struct GridResult {
    GridPlan plan;
    std::vector<ExperimentResult> results;  // parallel to plan.cells

    std::string csv() const;
    std::string markdown() const;
};

GridResult reproduce_grid(Grid grid, Scale scale, std::uint64_t seed, std::size_t n_seeds,
                          const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct Report {
    std::string markdown;
    std::string csv;
};

// Summarizes every results.csv below dir (one row per config). Raises IoError on an empty or corrupt tree.
Report emit_report(const std::filesystem::path& dir);

}  // namespace tvssm
