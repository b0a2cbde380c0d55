// Command-line front end: synthetic data generation, sample preparation,
// tuning/training/prediction, and the full evaluation run.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "quantmerge/quantmerge.hpp"

namespace fs = std::filesystem;
using namespace quantmerge;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int default_threads() {
    if (const char* env = std::getenv("QUANTMERGE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
    }
    return 1;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    int threads = default_threads();
    std::string models = "both";
    std::string tau_list;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Key-value config file");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--seed", opts.seed, "Master seed (overrides the config)");
    cmd->add_option("--threads", opts.threads, "Worker threads (default: QUANTMERGE_THREADS or 1)");
    cmd->add_option("--models", opts.models, "Models to run: gbdt, qrf or both")
        ->check(CLI::IsMember({"gbdt", "qrf", "both"}));
    cmd->add_option("--tau", opts.tau_list, "Comma-separated quantile levels");
}

KvConfig load_config(const CommonOpts& opts) {
    KvConfig cfg;
    if (!opts.config_path.empty()) cfg = KvConfig::load(opts.config_path);
    if (opts.seed) cfg.set_uint64("seed", *opts.seed);
    return cfg;
}

std::vector<QuantileLevel> parse_tau_list(const std::string& text) {
    std::vector<QuantileLevel> out;
    for (const auto& field : csv::split(text)) {
        if (field.empty()) continue;
        out.emplace_back(csv::parse_double(field, "tau list"));
    }
    if (out.empty()) throw DataError("tau list is empty");
    return out;
}

std::vector<QuantileLevel> tau_levels_from(const KvConfig& cfg, const CommonOpts& opts) {
    if (!opts.tau_list.empty()) return parse_tau_list(opts.tau_list);
    if (cfg.has("tau_levels")) return parse_tau_list(cfg.get("tau_levels"));
    return default_tau_levels();
}

GridSpec grid_spec_from(const KvConfig& cfg, const std::string& prefix) {
    GridSpec spec;
    spec.origin_longitude = cfg.get_double(prefix + ".origin_lon");
    spec.origin_latitude = cfg.get_double(prefix + ".origin_lat");
    spec.cell_size = cfg.get_double(prefix + ".cell_size");
    spec.n_lon = static_cast<int>(cfg.get_int(prefix + ".n_lon"));
    spec.n_lat = static_cast<int>(cfg.get_int(prefix + ".n_lat"));
    try {
        spec.validate();
    } catch (const InvariantError& e) {
        throw DataError(std::string("config block '") + prefix + "': " + e.what());
    }
    return spec;
}

void echo_grid_spec(KvConfig& cfg, const std::string& prefix, const GridSpec& spec) {
    cfg.set_double(prefix + ".origin_lon", spec.origin_longitude);
    cfg.set_double(prefix + ".origin_lat", spec.origin_latitude);
    cfg.set_double(prefix + ".cell_size", spec.cell_size);
    cfg.set_int(prefix + ".n_lon", spec.n_lon);
    cfg.set_int(prefix + ".n_lat", spec.n_lat);
}

SyntheticConfig synthetic_config_from(const KvConfig& cfg) {
    SyntheticConfig sc;
    sc.n_stations = static_cast<int>(cfg.get_int_or("synth.n_stations", sc.n_stations));
    sc.n_days = static_cast<int>(cfg.get_int_or("synth.n_days", sc.n_days));
    sc.zero_probability = cfg.get_double_or("synth.zero_probability", sc.zero_probability);
    sc.lognormal_sigma = cfg.get_double_or("synth.lognormal_sigma", sc.lognormal_sigma);
    sc.mu_offset = cfg.get_double_or("synth.mu_offset", sc.mu_offset);
    sc.mu_scale = cfg.get_double_or("synth.mu_scale", sc.mu_scale);
    sc.location_gain = cfg.get_double_or("synth.location_gain", sc.location_gain);
    sc.elevation_gain = cfg.get_double_or("synth.elevation_gain", sc.elevation_gain);
    sc.persiann_noise = cfg.get_double_or("synth.persiann_noise", sc.persiann_noise);
    sc.imerg_noise = cfg.get_double_or("synth.imerg_noise", sc.imerg_noise);
    sc.imerg_exponent = cfg.get_double_or("synth.imerg_exponent", sc.imerg_exponent);
    if (cfg.has("synth.start_date"))
        sc.start_date = Date::parse(cfg.get("synth.start_date"), "config synth.start_date");
    if (cfg.has("grid.persiann.origin_lon")) sc.persiann_spec = grid_spec_from(cfg, "grid.persiann");
    if (cfg.has("grid.imerg.origin_lon")) sc.imerg_spec = grid_spec_from(cfg, "grid.imerg");
    sc.seed = cfg.get_uint64_or("seed", 1);
    try {
        sc.validate();
    } catch (const InvariantError& e) {
        throw DataError(std::string("invalid synthetic config: ") + e.what());
    }
    return sc;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& context) {
    std::vector<int> out;
    for (const auto& f : csv::split(text))
        if (!f.empty()) out.push_back(static_cast<int>(csv::parse_int(f, context)));
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& context) {
    std::vector<double> out;
    for (const auto& f : csv::split(text))
        if (!f.empty()) out.push_back(csv::parse_double(f, context));
    return out;
}

ExperimentConfig experiment_config_from(const KvConfig& cfg, const CommonOpts& opts) {
    ExperimentConfig ec;
    ec.tau_levels = tau_levels_from(cfg, opts);
    ec.seed = cfg.get_uint64_or("seed", 1);
    if (cfg.has("grid.max_depth"))
        ec.grid.max_depth = parse_int_list(cfg.get("grid.max_depth"), "grid.max_depth");
    if (cfg.has("grid.min_data_in_leaf"))
        ec.grid.min_data_in_leaf =
            parse_int_list(cfg.get("grid.min_data_in_leaf"), "grid.min_data_in_leaf");
    if (cfg.has("grid.learning_rate"))
        ec.grid.learning_rate =
            parse_double_list(cfg.get("grid.learning_rate"), "grid.learning_rate");
    if (cfg.has("grid.num_leaves"))
        ec.grid.num_leaves = parse_int_list(cfg.get("grid.num_leaves"), "grid.num_leaves");
    ec.grid.num_iterations =
        static_cast<int>(cfg.get_int_or("grid.num_iterations", ec.grid.num_iterations));
    ec.early_stopping_round =
        static_cast<int>(cfg.get_int_or("early_stopping_round", ec.early_stopping_round));
    ec.n_bins = static_cast<int>(cfg.get_int_or("n_bins", ec.n_bins));
    ec.qrf.n_trees = static_cast<int>(cfg.get_int_or("qrf.n_trees", ec.qrf.n_trees));
    ec.qrf.mtry = static_cast<int>(cfg.get_int_or("qrf.mtry", ec.qrf.mtry));
    ec.qrf.min_node_size =
        static_cast<int>(cfg.get_int_or("qrf.min_node_size", ec.qrf.min_node_size));
    ec.n_threads = opts.threads;
    ec.run_gbdt = opts.models != "qrf";
    ec.run_qrf = opts.models != "gbdt";
    return ec;
}

KvConfig new_manifest(const std::string& command, const CommonOpts& opts) {
    KvConfig m;
    m.set("manifest.command", command);
    m.set("manifest.version", kVersion);
    m.set("manifest.timestamp_utc", utc_timestamp());
    if (!opts.config_path.empty()) m.set("manifest.config_path", opts.config_path);
    m.set("manifest.out_dir", opts.out_dir);
    return m;
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
    fs::create_directories(opts.out_dir);
    return (fs::path(opts.out_dir) / name).string();
}

void split_products(const std::vector<GridField>& all, std::vector<GridField>& persiann,
                    std::vector<GridField>& imerg) {
    for (const auto& f : all) {
        if (f.product_id == "persiann")
            persiann.push_back(f);
        else if (f.product_id == "imerg")
            imerg.push_back(f);
        else
            throw DataError("unexpected product_id '" + f.product_id + "'");
    }
}

// ---- subcommand implementations ----

int cmd_synth(const CommonOpts& opts) {
    const KvConfig cfg = load_config(opts);
    const SyntheticConfig sc = synthetic_config_from(cfg);
    const SyntheticData data = generate_synthetic(sc);

    KvConfig manifest = new_manifest("synth", opts);
    manifest.set_uint64("seed", sc.seed);
    manifest.set_int("synth.n_stations", sc.n_stations);
    manifest.set_int("synth.n_days", sc.n_days);
    manifest.set_double("synth.zero_probability", sc.zero_probability);
    manifest.set_double("synth.lognormal_sigma", sc.lognormal_sigma);
    manifest.set_double("synth.mu_offset", sc.mu_offset);
    manifest.set_double("synth.mu_scale", sc.mu_scale);
    manifest.set_double("synth.location_gain", sc.location_gain);
    manifest.set_double("synth.elevation_gain", sc.elevation_gain);
    manifest.set_double("synth.persiann_noise", sc.persiann_noise);
    manifest.set_double("synth.imerg_noise", sc.imerg_noise);
    manifest.set_double("synth.imerg_exponent", sc.imerg_exponent);
    manifest.set("synth.start_date", sc.start_date.to_string());
    echo_grid_spec(manifest, "grid.persiann", sc.persiann_spec);
    echo_grid_spec(manifest, "grid.imerg", sc.imerg_spec);

    save_stations(out_path(opts, "stations.csv"), data.stations);
    save_grid_fields(out_path(opts, "grids.csv"), data.grids);
    csv::write_file(out_path(opts, "truth.csv"),
                    serialize_truth(data.truth, default_tau_levels()));
    manifest.set("manifest.output.stations", "stations.csv");
    manifest.set("manifest.output.grids", "grids.csv");
    manifest.set("manifest.output.truth", "truth.csv");
    manifest.save(out_path(opts, "manifest.kv"));
    std::cerr << "synth: " << data.stations.size() << " station-days, " << data.grids.size()
              << " grid fields\n";
    return 0;
}

int cmd_prepare(const CommonOpts& opts, const std::string& stations_path,
                const std::vector<std::string>& grid_paths) {
    const KvConfig cfg = load_config(opts);
    const GridSpec persiann_spec = grid_spec_from(cfg, "grid.persiann");
    const GridSpec imerg_spec = grid_spec_from(cfg, "grid.imerg");
    const std::uint64_t seed = cfg.get_uint64_or("seed", 1);

    const auto stations = load_stations(stations_path);
    std::vector<GridField> persiann, imerg;
    for (const auto& path : grid_paths) {
        const auto fields = load_grid_table(
            path, {{"persiann", persiann_spec}, {"imerg", imerg_spec}});
        split_products(fields, persiann, imerg);
    }
    if (persiann.empty() || imerg.empty())
        throw DataError("grid tables must provide both products (persiann, imerg)");

    // the finer product is resampled onto the coarse grid before features
    std::vector<GridField> imerg_regridded;
    imerg_regridded.reserve(imerg.size());
    for (const auto& f : imerg) imerg_regridded.push_back(bilinear_regrid(f, persiann_spec));

    const auto built = build_samples(stations, persiann, imerg_regridded);
    if (built.samples.empty()) throw DataError("prepare: no usable samples");
    const auto folds = split_folds(built.samples.size(), 3, seed);
    csv::write_file(out_path(opts, "samples.csv"), serialize_samples(built.samples, folds));

    KvConfig manifest = new_manifest("prepare", opts);
    manifest.set_uint64("seed", seed);
    manifest.set("manifest.input.stations", stations_path);
    for (std::size_t i = 0; i < grid_paths.size(); ++i)
        manifest.set("manifest.input.grids." + std::to_string(i), grid_paths[i]);
    manifest.set("manifest.output.samples", "samples.csv");
    manifest.set_int("prepare.samples", static_cast<long long>(built.samples.size()));
    manifest.set_int("prepare.dropped", static_cast<long long>(built.dropped));
    echo_grid_spec(manifest, "grid.persiann", persiann_spec);
    echo_grid_spec(manifest, "grid.imerg", imerg_spec);
    manifest.save(out_path(opts, "manifest.kv"));

    std::cerr << "prepare: kept " << built.samples.size() << " samples, dropped "
              << built.dropped << " station-days with missing predictors\n";
    return 0;
}

void require_fold_column(const std::string& samples_path) {
    const auto lines = csv::read_lines(samples_path);
    if (lines.empty()) throw DataError(samples_path + ": missing header row");
    const auto header = csv::split(lines[0]);
    if (std::find(header.begin(), header.end(), "fold_index") == header.end())
        throw DataError(samples_path + ": missing column 'fold_index'");
}

int cmd_run(const CommonOpts& opts, const std::string& samples_path) {
    require_fold_column(samples_path);
    const auto table = load_samples(samples_path);
    const KvConfig cfg = load_config(opts);
    const ExperimentConfig ec = experiment_config_from(cfg, opts);

    std::vector<std::string> outputs;
    try {
        const auto result = run_experiment(table.samples, table.folds, ec);

        const auto scores_path = out_path(opts, "scores.csv");
        csv::write_file(scores_path, serialize_scores_table(result));
        outputs.push_back(scores_path);
        const auto station_path = out_path(opts, "station_skill.csv");
        csv::write_file(station_path, serialize_station_table(result));
        outputs.push_back(station_path);

        KvConfig manifest = new_manifest("run", opts);
        manifest.set_uint64("seed", ec.seed);
        manifest.set("models", opts.models);
        manifest.set("manifest.input.samples", samples_path);
        manifest.set("manifest.output.scores", "scores.csv");
        manifest.set("manifest.output.station_skill", "station_skill.csv");
        if (cfg.has("prepare.dropped"))
            manifest.set("prepare.dropped", cfg.get("prepare.dropped"));
        record_manifest(manifest, ec, result);
        manifest.save(out_path(opts, "manifest.kv"));
        return 0;
    } catch (...) {
        for (const auto& path : outputs) {
            std::error_code ec_ignore;
            fs::remove(path, ec_ignore);
        }
        throw;
    }
}

int cmd_tune(const CommonOpts& opts, const std::string& samples_path, double tau) {
    require_fold_column(samples_path);
    const auto table = load_samples(samples_path);
    const KvConfig cfg = load_config(opts);
    ExperimentConfig ec = experiment_config_from(cfg, opts);

    FoldedSamples folded(table.samples, table.folds);
    const Dataset fold1 = folded.gather(0);
    const Dataset fold2 = folded.gather(1);

    GBDTConfig base;
    base.tau = QuantileLevel(tau);
    base.early_stopping_round = ec.early_stopping_round;
    base.n_bins = ec.n_bins;
    base.seed = derive_seed(ec.seed, "gbdt.tune", 0);
    const auto grid_configs = enumerate_grid(ec.grid, base);
    const auto result = grid_search(fold1, fold2, grid_configs, opts.threads);

    KvConfig chosen;
    chosen.set_double("tau", tau);
    chosen.set_int("max_depth", result.config.max_depth);
    chosen.set_int("min_data_in_leaf", result.config.min_data_in_leaf);
    chosen.set_double("learning_rate", result.config.learning_rate);
    chosen.set_int("num_leaves", result.config.num_leaves);
    chosen.set_int("num_iterations", result.config.num_iterations);
    chosen.set_int("best_iteration", result.best_iteration);
    chosen.set_double("valid_score", result.valid_score);
    chosen.set_int("grid_index", static_cast<long long>(result.grid_index));
    chosen.save(out_path(opts, "chosen.kv"));

    KvConfig manifest = new_manifest("tune", opts);
    manifest.set_uint64("seed", ec.seed);
    manifest.set_double("tau", tau);
    manifest.set_int("grid_size", static_cast<long long>(grid_configs.size()));
    manifest.set("manifest.input.samples", samples_path);
    manifest.set("manifest.output.chosen", "chosen.kv");
    for (const auto& [k, v] : chosen.entries()) manifest.set("chosen." + k, v);
    manifest.save(out_path(opts, "manifest.kv"));
    std::cerr << "tune: best grid index " << result.grid_index << ", validation score "
              << result.valid_score << "\n";
    return 0;
}

std::vector<int> parse_fold_list(const std::string& text) {
    std::vector<int> folds = parse_int_list(text, "fold list");
    if (folds.empty()) throw DataError("fold list is empty");
    return folds;
}

Dataset gather_folds(const SampleTable& table, const std::vector<int>& fold_ids) {
    FoldedSamples folded(table.samples, table.folds);
    if (fold_ids.size() == 1) return folded.gather(fold_ids[0]);
    if (fold_ids.size() == 2) return folded.gather_union(fold_ids[0], fold_ids[1]);
    throw DataError("train folds must name one or two folds");
}

int cmd_train_gbdt(const CommonOpts& opts, const std::string& samples_path, double tau,
                   const std::string& train_folds, int valid_fold) {
    require_fold_column(samples_path);
    const auto table = load_samples(samples_path);
    const KvConfig cfg = load_config(opts);
    const ExperimentConfig ec = experiment_config_from(cfg, opts);

    GBDTConfig gc;
    gc.tau = QuantileLevel(tau);
    gc.max_depth = static_cast<int>(cfg.get_int_or("gbdt.max_depth", 6));
    gc.min_data_in_leaf = static_cast<int>(cfg.get_int_or("gbdt.min_data_in_leaf", 20));
    gc.learning_rate = cfg.get_double_or("gbdt.learning_rate", 0.1);
    gc.num_iterations = static_cast<int>(cfg.get_int_or("gbdt.num_iterations", 400));
    gc.num_leaves = static_cast<int>(cfg.get_int_or("gbdt.num_leaves", 31));
    gc.early_stopping_round =
        static_cast<int>(cfg.get_int_or("gbdt.early_stopping_round", valid_fold >= 0 ? 20 : 0));
    gc.n_bins = ec.n_bins;
    gc.seed = derive_seed(ec.seed, "gbdt.train", 0);
    try {
        gc.validate();
    } catch (const InvariantError& e) {
        throw DataError(std::string("invalid gbdt config: ") + e.what());
    }

    const Dataset train = gather_folds(table, parse_fold_list(train_folds));
    Dataset valid;
    const bool has_valid = valid_fold >= 0;
    if (has_valid) {
        FoldedSamples folded(table.samples, table.folds);
        valid = folded.gather(valid_fold);
    }
    const auto model = fit_quantile_gbdt(train, has_valid ? &valid : nullptr, gc);
    save_gbdt(out_path(opts, "gbdt.model"), model);

    KvConfig manifest = new_manifest("train-gbdt", opts);
    manifest.set_uint64("seed", ec.seed);
    manifest.set_double("tau", tau);
    manifest.set("train_folds", train_folds);
    manifest.set_int("best_iteration", model.best_iteration);
    manifest.set("manifest.input.samples", samples_path);
    manifest.set("manifest.output.model", "gbdt.model");
    manifest.save(out_path(opts, "manifest.kv"));
    return 0;
}

int cmd_train_qrf(const CommonOpts& opts, const std::string& samples_path,
                  const std::string& train_folds) {
    require_fold_column(samples_path);
    const auto table = load_samples(samples_path);
    const KvConfig cfg = load_config(opts);
    const ExperimentConfig ec = experiment_config_from(cfg, opts);

    QRFConfig qc = ec.qrf;
    qc.seed = derive_seed(ec.seed, "qrf");
    const Dataset train = gather_folds(table, parse_fold_list(train_folds));
    const auto model = fit_qrf(train, qc, opts.threads);
    save_qrf(out_path(opts, "qrf.model"), model);

    KvConfig manifest = new_manifest("train-qrf", opts);
    manifest.set_uint64("seed", ec.seed);
    manifest.set("train_folds", train_folds);
    manifest.set_int("qrf.n_trees", qc.n_trees);
    manifest.set("manifest.input.samples", samples_path);
    manifest.set("manifest.output.model", "qrf.model");
    manifest.save(out_path(opts, "manifest.kv"));
    return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& model_path,
                const std::string& samples_path, const std::string& predict_fold, bool clip) {
    const auto table = load_samples(samples_path);
    std::vector<std::size_t> rows;
    if (predict_fold.empty()) {
        for (std::size_t i = 0; i < table.samples.size(); ++i) rows.push_back(i);
    } else {
        const int fold = static_cast<int>(csv::parse_int(predict_fold, "--fold"));
        for (std::size_t i = 0; i < table.samples.size(); ++i)
            if (table.folds.fold_of[i] == fold) rows.push_back(i);
    }
    if (rows.empty()) throw DataError("predict: no rows selected");

    // sniff the model type from the header line
    std::ifstream probe(model_path);
    if (!probe) throw DataError("cannot open model file: " + model_path);
    std::string header;
    std::getline(probe, header);
    probe.close();

    std::ostringstream out;
    out << "row,station_id,date,tau,prediction\n";
    const auto emit = [&](std::size_t row, double tau, double value) {
        const auto& s = table.samples[row];
        out << row << ',' << s.station_id << ',' << s.date.to_string() << ','
            << csv::format_double(tau) << ',' << csv::format_double(value) << '\n';
    };

    if (header == "quantmerge_gbdt_model v1") {
        const auto model = load_gbdt(model_path);
        for (const auto row : rows) {
            const auto features = table.samples[row].features.to_array();
            double v = predict_raw(model, features);
            if (clip && v < 0.0) v = 0.0;
            emit(row, model.config.tau.value(), v);
        }
    } else if (header == "quantmerge_qrf_model v1") {
        const auto model = load_qrf(model_path);
        const auto levels = opts.tau_list.empty() ? default_tau_levels()
                                                  : parse_tau_list(opts.tau_list);
        QRFPredictor predictor(model);
        for (const auto row : rows) {
            const auto features = table.samples[row].features.to_array();
            const auto q = predictor.predict(features, levels);
            for (std::size_t t = 0; t < levels.size(); ++t)
                emit(row, levels[t].value(), q[t]);
        }
    } else {
        throw DataError(model_path + ": unrecognized model header '" + header + "'");
    }

    csv::write_file(out_path(opts, "predictions.csv"), out.str());
    KvConfig manifest = new_manifest("predict", opts);
    manifest.set("manifest.input.model", model_path);
    manifest.set("manifest.input.samples", samples_path);
    manifest.set("manifest.output.predictions", "predictions.csv");
    manifest.set_int("clip", clip ? 1 : 0);
    manifest.save(out_path(opts, "manifest.kv"));
    return 0;
}

/// Predictions from cmd_predict: (row, tau) -> value.
std::map<std::pair<std::size_t, double>, double> load_predictions(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": missing header row");
    csv::expect_header(csv::split(lines[0]), {"row", "station_id", "date", "tau", "prediction"},
                       path);
    std::map<std::pair<std::size_t, double>, double> out;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string context = path + ":" + std::to_string(ln + 1);
        const auto f = csv::split(lines[ln]);
        if (f.size() != 5) throw DataError(context + ": expected 5 fields");
        const auto row = static_cast<std::size_t>(csv::parse_int(f[0], context));
        const double tau = csv::parse_double(f[3], context);
        if (!out.emplace(std::make_pair(row, tau), csv::parse_double(f[4], context)).second)
            throw DataError(context + ": duplicate (row, tau) entry");
    }
    return out;
}

int cmd_report(const CommonOpts& opts, const std::string& samples_path,
               const std::string& gbdt_pred_path, const std::string& qrf_pred_path) {
    if (gbdt_pred_path.empty() && qrf_pred_path.empty())
        throw DataError("report: provide --pred-gbdt and/or --pred-qrf");
    const auto table = load_samples(samples_path);

    const auto reference =
        qrf_pred_path.empty() ? decltype(load_predictions("")){} : load_predictions(qrf_pred_path);
    const auto candidate = gbdt_pred_path.empty() ? decltype(reference){}
                                                  : load_predictions(gbdt_pred_path);
    const auto& lead = candidate.empty() ? reference : candidate;

    // rows and taus are defined by the prediction files
    std::set<std::size_t> row_set;
    std::set<double> tau_set;
    for (const auto& [key, value] : lead) {
        row_set.insert(key.first);
        tau_set.insert(key.second);
    }
    std::vector<QuantileLevel> levels;
    for (const double t : tau_set) levels.emplace_back(t);

    std::vector<double> observations;
    std::vector<std::string> station_ids;
    std::vector<std::size_t> rows(row_set.begin(), row_set.end());
    for (const auto r : rows) {
        if (r >= table.samples.size())
            throw DataError("report: prediction row " + std::to_string(r) +
                            " out of range for the sample table");
        observations.push_back(table.samples[r].target);
        station_ids.push_back(table.samples[r].station_id);
    }

    const auto to_matrix = [&](const std::map<std::pair<std::size_t, double>, double>& preds) {
        std::vector<std::vector<double>> m(levels.size(), std::vector<double>(rows.size()));
        for (std::size_t t = 0; t < levels.size(); ++t)
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto it = preds.find({rows[i], levels[t].value()});
                if (it == preds.end())
                    throw DataError("report: prediction files do not cover identical rows/taus");
                m[t][i] = it->second;
            }
        return m;
    };

    ExperimentResult result;
    if (!candidate.empty()) result.gbdt_predictions = to_matrix(candidate);
    if (!reference.empty()) result.qrf_predictions = to_matrix(reference);
    result.test_observations = observations;
    result.test_station_ids = station_ids;
    const auto* cand = result.gbdt_predictions.empty() ? nullptr : &result.gbdt_predictions;
    const auto* ref = result.qrf_predictions.empty() ? nullptr : &result.qrf_predictions;
    result.per_tau = evaluate_strata(cand, ref, observations, levels);
    result.per_station = per_station_scores(cand, ref, observations, station_ids, levels);

    csv::write_file(out_path(opts, "scores.csv"), serialize_scores_table(result));
    csv::write_file(out_path(opts, "station_skill.csv"), serialize_station_table(result));
    KvConfig manifest = new_manifest("report", opts);
    manifest.set("manifest.input.samples", samples_path);
    if (!gbdt_pred_path.empty()) manifest.set("manifest.input.pred_gbdt", gbdt_pred_path);
    if (!qrf_pred_path.empty()) manifest.set("manifest.input.pred_qrf", qrf_pred_path);
    manifest.set("manifest.output.scores", "scores.csv");
    manifest.set("manifest.output.station_skill", "station_skill.csv");
    manifest.save(out_path(opts, "manifest.kv"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantile tree ensembles for satellite-gauge precipitation merging"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOpts synth_opts, prepare_opts, run_opts, tune_opts, tg_opts, tq_opts, pred_opts,
        report_opts;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with truth quantiles");
    add_common(synth, synth_opts);

    auto* prepare = app.add_subcommand("prepare", "Build the regression sample table");
    add_common(prepare, prepare_opts);
    std::string stations_path;
    std::vector<std::string> grid_paths;
    prepare->add_option("--stations", stations_path, "Station table")->required();
    prepare->add_option("--grids", grid_paths, "Grid tables (long format)")->required();

    auto* run = app.add_subcommand("run", "Tune, train and evaluate on a 3-fold sample table");
    add_common(run, run_opts);
    std::string run_samples;
    run->add_option("--samples", run_samples, "Sample table with fold_index")->required();

    auto* tune = app.add_subcommand("tune", "Grid search at one quantile level (folds 0/1)");
    add_common(tune, tune_opts);
    std::string tune_samples;
    double tune_tau = 0.9;
    tune->add_option("--samples", tune_samples, "Sample table")->required();
    tune->add_option("--tau-level", tune_tau, "Quantile level")->required();

    auto* tg = app.add_subcommand("train-gbdt", "Train one boosted quantile model");
    add_common(tg, tg_opts);
    std::string tg_samples, tg_folds = "0,1";
    double tg_tau = 0.9;
    int tg_valid_fold = -1;
    tg->add_option("--samples", tg_samples, "Sample table")->required();
    tg->add_option("--tau-level", tg_tau, "Quantile level")->required();
    tg->add_option("--train-folds", tg_folds, "Folds to train on (default 0,1)");
    tg->add_option("--valid-fold", tg_valid_fold, "Fold for early stopping (-1 disables)");

    auto* tq = app.add_subcommand("train-qrf", "Train the quantile regression forest");
    add_common(tq, tq_opts);
    std::string tq_samples, tq_folds = "0,1";
    tq->add_option("--samples", tq_samples, "Sample table")->required();
    tq->add_option("--train-folds", tq_folds, "Folds to train on (default 0,1)");

    auto* pred = app.add_subcommand("predict", "Predict with a serialized model");
    add_common(pred, pred_opts);
    std::string pred_model, pred_samples, pred_fold;
    bool pred_clip = false;
    pred->add_option("--model", pred_model, "Model file")->required();
    pred->add_option("--samples", pred_samples, "Sample table")->required();
    pred->add_option("--fold", pred_fold, "Restrict to one fold index");
    pred->add_flag("--clip", pred_clip, "Clip negative predictions to zero");

    auto* report = app.add_subcommand("report", "Score stored predictions against observations");
    add_common(report, report_opts);
    std::string report_samples, report_gbdt, report_qrf;
    report->add_option("--samples", report_samples, "Sample table")->required();
    report->add_option("--pred-gbdt", report_gbdt, "GBDT predictions file");
    report->add_option("--pred-qrf", report_qrf, "QRF predictions file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_opts);
        if (prepare->parsed()) return cmd_prepare(prepare_opts, stations_path, grid_paths);
        if (run->parsed()) return cmd_run(run_opts, run_samples);
        if (tune->parsed()) return cmd_tune(tune_opts, tune_samples, tune_tau);
        if (tg->parsed())
            return cmd_train_gbdt(tg_opts, tg_samples, tg_tau, tg_folds, tg_valid_fold);
        if (tq->parsed()) return cmd_train_qrf(tq_opts, tq_samples, tq_folds);
        if (pred->parsed())
            return cmd_predict(pred_opts, pred_model, pred_samples, pred_fold, pred_clip);
        if (report->parsed())
            return cmd_report(report_opts, report_samples, report_gbdt, report_qrf);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
