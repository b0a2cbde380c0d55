#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "quantmerge/quantmerge.hpp"

namespace fs = std::filesystem;
using quantmerge::KvConfig;

namespace {

const std::string cli = QM_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("qm_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

int run_cli(const std::string& args) {
    const std::string cmd = cli + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string small_synth_config() {
    return "synth.n_stations = 24\n"
           "synth.n_days = 30\n"
           "seed = 11\n";
}

std::string small_run_config() {
    return "tau_levels = 0.5,0.9,0.99\n"
           "grid.max_depth = 4\n"
           "grid.min_data_in_leaf = 20\n"
           "grid.learning_rate = 0.1\n"
           "grid.num_leaves = 8\n"
           "grid.num_iterations = 25\n"
           "early_stopping_round = 5\n"
           "qrf.n_trees = 15\n"
           "seed = 11\n";
}

}  // namespace

TEST_CASE("synth writes exactly four files, deterministically") {
    TempDir a("synth_a"), b("synth_b");
    const auto cfg = a.str("config.kv");
    write(cfg, small_synth_config());

    REQUIRE(run_cli("synth --config " + cfg + " --out " + a.str()) == 0);
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(a.path))
        if (entry.path().filename() != "config.kv") ++count;
    CHECK(count == 4);
    CHECK(fs::exists(a.str("stations.csv")));
    CHECK(fs::exists(a.str("grids.csv")));
    CHECK(fs::exists(a.str("truth.csv")));
    CHECK(fs::exists(a.str("manifest.kv")));

    REQUIRE(run_cli("synth --config " + cfg + " --out " + b.str()) == 0);
    CHECK(slurp(a.str("stations.csv")) == slurp(b.str("stations.csv")));
    CHECK(slurp(a.str("grids.csv")) == slurp(b.str("grids.csv")));
    CHECK(slurp(a.str("truth.csv")) == slurp(b.str("truth.csv")));
}

TEST_CASE("synth rejects an invalid zero_probability") {
    TempDir d("synth_bad");
    const auto cfg = d.str("config.kv");
    write(cfg, "synth.zero_probability = 1.5\n");
    CHECK(run_cli("synth --config " + cfg + " --out " + d.str()) == 2);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run_cli("prepare") == 1);              // missing required options
    CHECK(run_cli("no-such-command") == 1);
    TempDir d("usage");
    CHECK(run_cli("") == 1);
}

TEST_CASE("prepare emits the sample table schema and is fold-deterministic") {
    TempDir d("prep");
    const auto cfg = d.str("config.kv");
    write(cfg, small_synth_config());
    REQUIRE(run_cli("synth --config " + cfg + " --out " + d.str()) == 0);

    const auto manifest = d.str("manifest.kv");
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + manifest + " --out " +
                    d.str("prep1")) == 0);
    const auto samples = slurp(d.str("prep1/samples.csv"));
    std::istringstream ss(samples);
    std::string header;
    std::getline(ss, header);
    CHECK(header ==
          "persiann_value_1,persiann_value_2,persiann_value_3,persiann_value_4,"
          "imerg_value_1,imerg_value_2,imerg_value_3,imerg_value_4,"
          "persiann_distance_1,persiann_distance_2,persiann_distance_3,persiann_distance_4,"
          "imerg_distance_1,imerg_distance_2,imerg_distance_3,imerg_distance_4,"
          "longitude,latitude,elevation,target,station_id,date,fold_index");

    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + manifest + " --out " +
                    d.str("prep2")) == 0);
    CHECK(samples == slurp(d.str("prep2/samples.csv")));
}

TEST_CASE("prepare with mismatched dates exits nonzero") {
    TempDir d("prep_mismatch");
    const auto cfg = d.str("config.kv");
    write(cfg, small_synth_config());
    REQUIRE(run_cli("synth --config " + cfg + " --out " + d.str()) == 0);
    // stations from a different year
    std::string stations = "station_id,longitude,latitude,elevation_m,date,precip_mm\n";
    stations += "A,-99.5,35.5,100,2019-01-01,1\n";
    write(d.str("bad_stations.csv"), stations);
    CHECK(run_cli("prepare --stations " + d.str("bad_stations.csv") + " --grids " +
                  d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                  d.str("prep")) == 2);
}

TEST_CASE("run completes on a small dataset and reports all requested levels") {
    TempDir d("run");
    write(d.str("synth.kv"), small_synth_config());
    REQUIRE(run_cli("synth --config " + d.str("synth.kv") + " --out " + d.str()) == 0);
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                    d.str()) == 0);
    write(d.str("run.kv"), small_run_config());
    REQUIRE(run_cli("run --samples " + d.str("samples.csv") + " --config " + d.str("run.kv") +
                    " --out " + d.str("out")) == 0);

    const auto scores = slurp(d.str("out/scores.csv"));
    for (const char* tau : {"0.5,", "0.9,", "0.99,"})
        CHECK(scores.find(tau) != std::string::npos);
    for (const char* stratum : {",all,", ",zero,", ",positive,"})
        CHECK(scores.find(stratum) != std::string::npos);
    CHECK(fs::exists(d.str("out/station_skill.csv")));
    const auto manifest = KvConfig::load(d.str("out/manifest.kv"));
    CHECK(manifest.get("manifest.command") == "run");
    CHECK(manifest.has("experiment.chosen.0.99.best_iteration"));
}

TEST_CASE("run with --models qrf leaves the gbdt and skill columns empty") {
    TempDir d("run_qrf");
    write(d.str("synth.kv"), small_synth_config());
    REQUIRE(run_cli("synth --config " + d.str("synth.kv") + " --out " + d.str()) == 0);
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                    d.str()) == 0);
    write(d.str("run.kv"), small_run_config());
    REQUIRE(run_cli("run --samples " + d.str("samples.csv") + " --config " + d.str("run.kv") +
                    " --models qrf --out " + d.str("out")) == 0);
    const auto lines = quantmerge::csv::read_lines(d.str("out/scores.csv"));
    REQUIRE(lines.size() > 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = quantmerge::csv::split(lines[i]);
        REQUIRE(f.size() == 9);
        CHECK(f[3].empty());   // mean_score_gbdt
        CHECK(f[5].empty());   // quantile_skill
        if (f[2] != "0") CHECK(!f[4].empty());  // mean_score_qrf present
    }
}

TEST_CASE("run without a fold column names the missing column") {
    TempDir d("run_nofold");
    write(d.str("samples.csv"), "persiann_value_1,target\n1,2\n");
    const int code = run_cli("run --samples " + d.str("samples.csv") + " --out " + d.str("out"));
    CHECK(code == 2);
}

TEST_CASE("train/predict round-trip matches the in-process model bit for bit") {
    TempDir d("roundtrip");
    write(d.str("synth.kv"), small_synth_config());
    REQUIRE(run_cli("synth --config " + d.str("synth.kv") + " --out " + d.str()) == 0);
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                    d.str()) == 0);
    write(d.str("train.kv"),
          "seed = 11\n"
          "gbdt.num_iterations = 20\n"
          "gbdt.num_leaves = 8\n"
          "gbdt.max_depth = 4\n"
          "gbdt.min_data_in_leaf = 10\n"
          "qrf.n_trees = 10\n");

    REQUIRE(run_cli("train-gbdt --samples " + d.str("samples.csv") + " --tau-level 0.9 --config " +
                    d.str("train.kv") + " --out " + d.str("gbdt")) == 0);
    REQUIRE(run_cli("predict --model " + d.str("gbdt/gbdt.model") + " --samples " +
                    d.str("samples.csv") + " --fold 2 --out " + d.str("gbdt_pred")) == 0);

    // recompute in-process
    const auto table = quantmerge::load_samples(d.str("samples.csv"));
    const auto model = quantmerge::load_gbdt(d.str("gbdt/gbdt.model"));
    const auto lines = quantmerge::csv::read_lines(d.str("gbdt_pred/predictions.csv"));
    std::size_t checked = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = quantmerge::csv::split(lines[i]);
        const auto row = static_cast<std::size_t>(quantmerge::csv::parse_int(f[0], "row"));
        const auto features = table.samples[row].features.to_array();
        const double expect = quantmerge::predict_raw(model, features);
        CHECK(quantmerge::csv::parse_double(f[4], "prediction") == expect);
        ++checked;
    }
    CHECK(checked > 0);

    REQUIRE(run_cli("train-qrf --samples " + d.str("samples.csv") + " --config " +
                    d.str("train.kv") + " --out " + d.str("qrf")) == 0);
    REQUIRE(run_cli("predict --model " + d.str("qrf/qrf.model") + " --samples " +
                    d.str("samples.csv") + " --fold 2 --tau 0.5,0.9 --out " +
                    d.str("qrf_pred")) == 0);
    const auto qmodel = quantmerge::load_qrf(d.str("qrf/qrf.model"));
    quantmerge::QRFPredictor predictor(qmodel);
    const auto qlines = quantmerge::csv::read_lines(d.str("qrf_pred/predictions.csv"));
    const std::vector<quantmerge::QuantileLevel> levels{quantmerge::QuantileLevel(0.5),
                                                        quantmerge::QuantileLevel(0.9)};
    for (std::size_t i = 1; i < qlines.size(); i += 2) {
        if (qlines[i].empty()) continue;
        const auto f = quantmerge::csv::split(qlines[i]);
        const auto row = static_cast<std::size_t>(quantmerge::csv::parse_int(f[0], "row"));
        const auto features = table.samples[row].features.to_array();
        const auto q = predictor.predict(features, levels);
        CHECK(quantmerge::csv::parse_double(f[4], "prediction") == q[0]);
    }

    // report over both prediction sets completes
    REQUIRE(run_cli("predict --model " + d.str("gbdt/gbdt.model") + " --samples " +
                    d.str("samples.csv") + " --fold 2 --clip --out " + d.str("gbdt_pred_clip")) ==
            0);
    REQUIRE(run_cli("report --samples " + d.str("samples.csv") + " --pred-qrf " +
                    d.str("qrf_pred/predictions.csv") + " --out " + d.str("report")) == 0);
    CHECK(fs::exists(d.str("report/scores.csv")));
}

TEST_CASE("tune on a singleton grid records the configuration") {
    TempDir d("tune");
    write(d.str("synth.kv"), small_synth_config());
    REQUIRE(run_cli("synth --config " + d.str("synth.kv") + " --out " + d.str()) == 0);
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                    d.str()) == 0);
    write(d.str("tune.kv"),
          "seed = 11\n"
          "grid.max_depth = 4\n"
          "grid.min_data_in_leaf = 25\n"
          "grid.learning_rate = 0.1\n"
          "grid.num_leaves = 8\n"
          "grid.num_iterations = 15\n"
          "early_stopping_round = 5\n");
    REQUIRE(run_cli("tune --samples " + d.str("samples.csv") + " --tau-level 0.9 --config " +
                    d.str("tune.kv") + " --out " + d.str("tuned")) == 0);
    const auto chosen = KvConfig::load(d.str("tuned/chosen.kv"));
    CHECK(chosen.get_int("max_depth") == 4);
    CHECK(chosen.get_int("min_data_in_leaf") == 25);
    CHECK(chosen.get_int("num_leaves") == 8);
    const auto manifest = KvConfig::load(d.str("tuned/manifest.kv"));
    CHECK(manifest.get_int("grid_size") == 1);
    CHECK(manifest.has("chosen.best_iteration"));
}

TEST_CASE("predict with a foreign feature count exits nonzero") {
    TempDir d("predict_bad");
    write(d.str("synth.kv"), small_synth_config());
    REQUIRE(run_cli("synth --config " + d.str("synth.kv") + " --out " + d.str()) == 0);
    REQUIRE(run_cli("prepare --stations " + d.str("stations.csv") + " --grids " +
                    d.str("grids.csv") + " --config " + d.str("manifest.kv") + " --out " +
                    d.str()) == 0);
    // hand-write a 2-feature model file
    write(d.str("tiny.model"),
          "quantmerge_gbdt_model v1\n"
          "tau = 0.5\nmax_depth = 2\nmin_data_in_leaf = 1\nlearning_rate = 0.1\n"
          "num_iterations = 1\nnum_leaves = 2\nearly_stopping_round = 0\nn_bins = 4\n"
          "seed = 0\nfeature_count = 2\nbase_score = 1\nbest_iteration = 0\nnum_trees = 0\n");
    const int code = run_cli("predict --model " + d.str("tiny.model") + " --samples " +
                             d.str("samples.csv") + " --out " + d.str("pred"));
    CHECK(code == 3);
}
