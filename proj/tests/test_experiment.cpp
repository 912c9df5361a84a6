#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "tvssm/errors.hpp"
#include "tvssm/experiment.hpp"

using namespace tvssm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("tvssm_exp_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_four_mode() {
    auto c = four_mode_preset(Scale::Desk, "ooo", "ooo");
    c.h = 2;
    c.n = 2;
    c.K_A = c.K_B = c.K_C = 2;
    c.n_samples = 40;
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.n_seeds = 2;
    c.seed = 17;
    return c;
}

ExperimentConfig tiny_denoise(bool tv) {
    auto c = denoise_preset(Scale::Desk, tv);
    c.h = 2;
    c.denoise.n_train = 3;
    c.denoise.n_val = 0;
    c.denoise.n_test = 2;
    c.denoise.length = 1280;
    c.n_seeds = 2;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config JSON round-trips") {
    auto c = denoise_preset(Scale::Paper, false);
    c.seed = 1234567890123ULL;
    c.output_dir = "out/x";
    const auto j = to_json(c);
    const auto back = experiment_config_from_json(j);
    CHECK(to_json(back) == j);
    auto f = four_mode_preset(Scale::Desk, "oxo", "xox");
    CHECK(to_json(experiment_config_from_json(to_json(f))) == to_json(f));
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
    CHECK_THROWS_AS(experiment_config_from_json(json{{"modle", "ooo"}}), InvalidArgument);
    CHECK_THROWS_AS(experiment_config_from_json(json{{"model", "oo"}}).validate(), InvalidArgument);
    const auto k = experiment_config_from_json(json{{"K", 3}});
    CHECK(k.K_A == 3);
    CHECK(k.K_C == 3);
}

TEST_CASE("validation happens before any compute") {
    auto c = tiny_four_mode();
    c.match_budget = true;  // model is time-varying
    CHECK_THROWS_AS(run_experiment(c), InvalidArgument);
    auto d = tiny_denoise(false);
    d.K_C = 2;  // n (4 + 4 + 2) / 3 is not an integer
    CHECK_THROWS_AS(run_experiment(d), InvalidArgument);
}

TEST_CASE("matched denoising budgets have identical parameter totals") {
    const auto tv = denoise_preset(Scale::Desk, true), ti = denoise_preset(Scale::Desk, false);
    CHECK(ti.state_dimension() == 16);
    CHECK(tv.state_dimension() == 4);
    CHECK(count_parameters(tv.network_spec()).total() == count_parameters(ti.network_spec()).total());
    CHECK(count_parameters(tv.network_spec()).per_neuron[0] == 49);
    CHECK(count_parameters(ti.network_spec()).per_neuron[0] == 49);
    const auto tvp = denoise_preset(Scale::Paper, true), tip = denoise_preset(Scale::Paper, false);
    CHECK(count_parameters(tvp.network_spec()).total() == count_parameters(tip.network_spec()).total());
    CHECK(tvp.n_seeds == 10);
}

TEST_CASE("four-mode runs are finite and reproducible per seed") {
    const auto c = tiny_four_mode();
    const auto a = run_experiment(c), b = run_experiment(c);
    REQUIRE(a.runs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::isfinite(a.runs[i].mse));
        CHECK(a.runs[i].mse == b.runs[i].mse);
        CHECK(a.runs[i].seed == b.runs[i].seed);
    }
    CHECK(a.runs[0].seed != a.runs[1].seed);
    CHECK(results_csv(a) == results_csv(b));
}

TEST_CASE("denoising aggregates mean and std over seeds") {
    auto c = tiny_denoise(true);
    c.n_seeds = 10;
    c.train.batch_size = 8;
    const auto r = run_experiment(c);
    CHECK(r.report.si_snr_db.n == 10);
    CHECK(r.report.snr_db.n == 10);
    CHECK(std::isfinite(r.report.si_snr_db.mean));
    CHECK(r.report.si_snr_db.std >= 0.0);
}

TEST_CASE("grid shapes") {
    const auto t1 = plan_grid(Grid::Table1, Scale::Desk, 1, 0);
    CHECK(t1.rows.size() == 5);
    CHECK(t1.cols.size() == 8);
    CHECK(t1.cells.size() == 40);
    for (const auto& cell : t1.cells) {
        CHECK(cell.config.data == cell.row);
        CHECK(cell.config.model == cell.col);
        CHECK(cell.config.n_seeds == 3);
        CHECK_NOTHROW(cell.config.validate());
    }

    const auto t4 = plan_grid(Grid::Table4, Scale::Desk, 1, 2);
    REQUIRE(t4.cells.size() == 6);
    const std::size_t p_expected[3] = {13, 49, 193};
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& cfg = t4.cells[i].config;
        CHECK(cfg.n_seeds == 2);
        CHECK(count_parameters(cfg.network_spec()).per_neuron[0] == p_expected[i / 2]);
    }

    const auto t5 = plan_grid(Grid::Table5, Scale::Desk, 1, 0);
    std::set<std::array<std::size_t, 3>> alloc;
    for (const auto& cell : t5.cells) alloc.insert({cell.config.K_A, cell.config.K_B, cell.config.K_C});
    CHECK(t5.cells.size() == 7);
    const std::set<std::array<std::size_t, 3>> want{{4, 4, 4}, {10, 1, 1}, {1, 10, 1}, {1, 1, 10},
                                                    {5, 5, 1}, {5, 1, 5}, {1, 5, 5}};
    CHECK(alloc == want);
    CHECK(parse_grid("table4") == Grid::Table4);
    CHECK_THROWS_AS(parse_grid("table9"), InvalidArgument);
}

TEST_CASE("runs write artifacts and reports audit them") {
    TempDir dir("report");
    auto tv = tiny_denoise(true);
    tv.train.batch_size = 8;
    tv.name = "tv";
    tv.output_dir = dir.path / "tv";
    auto ti = tiny_denoise(false);
    ti.train.batch_size = 8;
    ti.name = "ti_same";
    ti.match_budget = false;  // identical architecture: n = 4
    ti.output_dir = dir.path / "ti";
    const auto rt = run_experiment(tv), ri = run_experiment(ti);
    for (const char* f : {"config.json", "results.csv", "summary.json", "run_0/checkpoint.json", "run_0/history.csv"})
        CHECK(fs::exists(tv.output_dir / f));
    CHECK(rt.macs.total() == ri.macs.total());

    const auto rep = emit_report(dir.path);
    CHECK(rep.markdown.find("tv") != std::string::npos);
    CHECK(rep.markdown.find("ti_same") != std::string::npos);
    std::istringstream csv(rep.csv);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(csv, line)) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    const auto last_field = [](const std::string& s) { return s.substr(s.rfind(',') + 1); };
    CHECK(last_field(rows[1]) == last_field(rows[2]));

    // the config echo rebuilds the run
    const auto echo = experiment_config_from_json(json::parse(read_text_file(tv.output_dir / "config.json")));
    CHECK(to_json(echo) == to_json(tv));

    write_text_file(dir.path / "ti" / "results.csv", "garbage\n");
    try {
        emit_report(dir.path);
        FAIL("expected an I/O error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("ti") != std::string::npos);
    }
}

TEST_CASE("an empty results directory is an error") {
    TempDir dir("empty");
    CHECK_THROWS_AS(emit_report(dir.path), IoError);
    CHECK_THROWS_AS(emit_report(dir.path / "absent"), IoError);
}

}  // TEST_SUITE
