#ifndef QUANTMERGE_EXPERIMENT_HPP
#define QUANTMERGE_EXPERIMENT_HPP

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/features.hpp"
#include "quantmerge/gbdt.hpp"
#include "quantmerge/kvconfig.hpp"
#include "quantmerge/qrf.hpp"
#include "quantmerge/scoring.hpp"
#include "quantmerge/synthetic.hpp"
#include "quantmerge/threading.hpp"

// Protocol orchestration: hyperparameter grid over the boosted model with
// early stopping (tuned on fold 1, validated on fold 2), QRF and final GBDT
// fits on folds 1+2, prediction on fold 3 with nonnegativity clipping, and
// stratified evaluation (all / zero / positive observations, per station).

namespace quantmerge {

struct GBDTGrid {
    std::vector<int> max_depth{6, 8, 10};
    std::vector<int> min_data_in_leaf{20, 100, 200, 500, 1000};
    std::vector<double> learning_rate{0.02, 0.05, 0.1};
    int num_iterations = 400;
    std::vector<int> num_leaves{20, 40, 60, 80, 100, 200, 500};
};

/// All value combinations, excluding num_leaves > 2^max_depth. Deterministic
/// order: max_depth, then min_data_in_leaf, learning_rate, num_leaves.
/// Fields not in the grid (tau, stopping, bins, seed) come from `base`.
inline std::vector<GBDTConfig> enumerate_grid(const GBDTGrid& grid, const GBDTConfig& base) {
    std::vector<GBDTConfig> configs;
    for (const int depth : grid.max_depth) {
        for (const int min_data : grid.min_data_in_leaf) {
            for (const double lr : grid.learning_rate) {
                for (const int leaves : grid.num_leaves) {
                    if (depth < 31 && leaves > (1 << depth)) continue;
                    GBDTConfig c = base;
                    c.max_depth = depth;
                    c.min_data_in_leaf = min_data;
                    c.learning_rate = lr;
                    c.num_iterations = grid.num_iterations;
                    c.num_leaves = leaves;
                    c.validate();
                    configs.push_back(c);
                }
            }
        }
    }
    return configs;
}

struct GridSearchResult {
    GBDTConfig config{};
    int best_iteration = 0;
    double valid_score = 0.0;
    std::size_t grid_index = 0;
};

/// Trains every candidate on fold1 with early stopping monitored on fold2
/// and picks the one with the smallest fold2 mean quantile score at its
/// best iteration. Ties break by grid order.
inline GridSearchResult grid_search(const Dataset& fold1, const Dataset& fold2,
                                    const std::vector<GBDTConfig>& grid, int n_threads = 1) {
    if (grid.empty()) throw InvariantError("grid_search: empty grid");
    if (fold1.size() == 0 || fold2.size() == 0)
        throw InvariantError("grid_search: folds must be non-empty");

    struct Outcome {
        double score = std::numeric_limits<double>::infinity();
        int best_iteration = 0;
    };
    std::vector<Outcome> outcomes(grid.size());
    parallel_for(grid.size(), n_threads, [&](std::size_t i) {
        const GBDTModel model = fit_quantile_gbdt(fold1, &fold2, grid[i]);
        outcomes[i].score = model.valid_score_history[static_cast<std::size_t>(
            model.best_iteration)];
        outcomes[i].best_iteration = model.best_iteration;
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (outcomes[i].score < outcomes[best].score) best = i;
    return GridSearchResult{grid[best], outcomes[best].best_iteration, outcomes[best].score,
                            best};
}

inline std::vector<double> clip_nonnegative(std::span<const double> predictions) {
    std::vector<double> out(predictions.begin(), predictions.end());
    for (auto& v : out)
        if (v < 0.0) v = 0.0;
    return out;
}

// ---- stratified evaluation ----

struct StratumScores {
    std::string stratum;  // "all" | "zero" | "positive"
    std::size_t n = 0;
    std::optional<double> mean_score_candidate;
    std::optional<double> mean_score_reference;
    std::optional<double> skill;
    bool skill_undefined = false;  // both models present, reference mean is 0
    std::optional<double> freq_candidate;
    std::optional<double> freq_reference;
    std::optional<double> freq_skill;
    bool freq_skill_undefined = false;
};

struct TauStrata {
    QuantileLevel tau;
    std::vector<StratumScores> strata;  // all, zero, positive
};

namespace detail {

inline StratumScores score_stratum(const std::string& name,
                                   const std::vector<double>* candidate,
                                   const std::vector<double>* reference,
                                   const std::vector<double>& observations,
                                   QuantileLevel tau) {
    StratumScores s;
    s.stratum = name;
    s.n = observations.size();
    if (observations.empty()) return s;

    if (candidate) {
        s.mean_score_candidate = mean_quantile_score(*candidate, observations, tau);
        s.freq_candidate = frequency_score(*candidate, observations, tau);
    }
    if (reference) {
        s.mean_score_reference = mean_quantile_score(*reference, observations, tau);
        s.freq_reference = frequency_score(*reference, observations, tau);
    }
    if (candidate && reference) {
        if (*s.mean_score_reference == 0.0)
            s.skill_undefined = true;
        else
            s.skill = quantile_skill_score(*s.mean_score_candidate, *s.mean_score_reference);
        if (*s.freq_reference == 0.0)
            s.freq_skill_undefined = true;
        else
            s.freq_skill = frequency_skill_score(*s.freq_candidate, *s.freq_reference);
    }
    return s;
}

}  // namespace detail

/// Scores per tau level over the three strata: the full set, observations
/// equal to zero, and observations above zero. Either model may be absent.
inline std::vector<TauStrata> evaluate_strata(
    const std::vector<std::vector<double>>* preds_candidate,
    const std::vector<std::vector<double>>* preds_reference,
    std::span<const double> observations, std::span<const QuantileLevel> tau_levels) {
    if (!preds_candidate && !preds_reference)
        throw InvariantError("evaluate_strata: at least one model required");
    const auto check = [&](const std::vector<std::vector<double>>* p) {
        if (!p) return;
        if (p->size() != tau_levels.size())
            throw InvariantError("evaluate_strata: predictions per tau mismatch");
        for (const auto& v : *p)
            if (v.size() != observations.size())
                throw InvariantError("evaluate_strata: prediction length mismatch");
    };
    check(preds_candidate);
    check(preds_reference);

    std::vector<std::size_t> zero_rows, positive_rows;
    for (std::size_t i = 0; i < observations.size(); ++i)
        (observations[i] == 0.0 ? zero_rows : positive_rows).push_back(i);

    const auto gather = [](const std::vector<double>& v, const std::vector<std::size_t>& rows) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto r : rows) out.push_back(v[r]);
        return out;
    };

    std::vector<TauStrata> report;
    report.reserve(tau_levels.size());
    for (std::size_t t = 0; t < tau_levels.size(); ++t) {
        const QuantileLevel tau = tau_levels[t];
        TauStrata ts{tau, {}};

        const std::vector<double> all_obs(observations.begin(), observations.end());
        const std::vector<double>* cand_all = preds_candidate ? &(*preds_candidate)[t] : nullptr;
        const std::vector<double>* ref_all = preds_reference ? &(*preds_reference)[t] : nullptr;
        ts.strata.push_back(detail::score_stratum("all", cand_all, ref_all, all_obs, tau));

        for (const auto& [name, rows] :
             {std::make_pair(std::string("zero"), &zero_rows),
              std::make_pair(std::string("positive"), &positive_rows)}) {
            std::vector<double> obs_s = gather(all_obs, *rows);
            std::vector<double> cand_s, ref_s;
            if (cand_all) cand_s = gather(*cand_all, *rows);
            if (ref_all) ref_s = gather(*ref_all, *rows);
            ts.strata.push_back(detail::score_stratum(name, cand_all ? &cand_s : nullptr,
                                                      ref_all ? &ref_s : nullptr, obs_s, tau));
        }
        report.push_back(std::move(ts));
    }
    return report;
}

struct StationSkill {
    std::string station_id;
    double tau = 0.5;
    std::optional<double> mean_score_candidate;
    std::optional<double> mean_score_reference;
    std::optional<double> skill;
    bool undefined = false;  // reference mean score is exactly 0
};

/// Per-(station, tau) mean scores and skill. All defined values are
/// reported, however negative; "undefined" marks stations where the
/// reference mean score is 0.
inline std::vector<StationSkill> per_station_scores(
    const std::vector<std::vector<double>>* preds_candidate,
    const std::vector<std::vector<double>>* preds_reference,
    std::span<const double> observations, std::span<const std::string> station_ids,
    std::span<const QuantileLevel> tau_levels) {
    if (station_ids.size() != observations.size())
        throw InvariantError("per_station_scores: station id length mismatch");
    if (!preds_candidate && !preds_reference)
        throw InvariantError("per_station_scores: at least one model required");

    std::map<std::string, std::vector<std::size_t>> rows_by_station;
    for (std::size_t i = 0; i < station_ids.size(); ++i)
        rows_by_station[station_ids[i]].push_back(i);

    std::vector<StationSkill> table;
    for (const auto& [station, rows] : rows_by_station) {
        std::vector<double> obs;
        obs.reserve(rows.size());
        for (const auto r : rows) obs.push_back(observations[r]);
        for (std::size_t t = 0; t < tau_levels.size(); ++t) {
            StationSkill row;
            row.station_id = station;
            row.tau = tau_levels[t].value();
            const auto score_of = [&](const std::vector<std::vector<double>>& preds) {
                std::vector<double> p;
                p.reserve(rows.size());
                for (const auto r : rows) p.push_back(preds[t][r]);
                return mean_quantile_score(p, obs, tau_levels[t]);
            };
            if (preds_candidate) row.mean_score_candidate = score_of(*preds_candidate);
            if (preds_reference) row.mean_score_reference = score_of(*preds_reference);
            if (preds_candidate && preds_reference) {
                if (*row.mean_score_reference == 0.0)
                    row.undefined = true;
                else
                    row.skill = quantile_skill_score(*row.mean_score_candidate,
                                                     *row.mean_score_reference);
            }
            table.push_back(std::move(row));
        }
    }
    return table;
}

// ---- the full protocol ----

/// Fold views with read counters, for asserting that no fold-3 row is
/// touched while tuning.
class FoldedSamples {
public:
    FoldedSamples(const std::vector<Sample>& all, const FoldAssignment& folds)
        : all_(&all), reads_(static_cast<std::size_t>(folds.n_folds), 0) {
        if (folds.fold_of.size() != all.size())
            throw InvariantError("FoldedSamples: fold assignment size mismatch");
        indices_.resize(static_cast<std::size_t>(folds.n_folds));
        for (std::size_t i = 0; i < all.size(); ++i) {
            const int f = folds.fold_of[i];
            if (f < 0 || f >= folds.n_folds)
                throw InvariantError("FoldedSamples: fold index out of range");
            indices_[static_cast<std::size_t>(f)].push_back(i);
        }
    }

    Dataset gather(int fold) const {
        const auto& rows = indices(fold);
        Dataset d;
        d.x = DataMatrix(rows.size(), kFeatureCount);
        d.y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto arr = (*all_)[rows[i]].features.to_array();
            std::copy(arr.begin(), arr.end(), d.x.values.begin() + i * kFeatureCount);
            d.y[i] = (*all_)[rows[i]].target;
            ++reads_[static_cast<std::size_t>(fold)];
        }
        return d;
    }

    Dataset gather_union(int fold_a, int fold_b) const {
        Dataset a = gather(fold_a);
        Dataset b = gather(fold_b);
        Dataset d;
        d.x = DataMatrix(a.size() + b.size(), kFeatureCount);
        std::copy(a.x.values.begin(), a.x.values.end(), d.x.values.begin());
        std::copy(b.x.values.begin(), b.x.values.end(),
                  d.x.values.begin() + static_cast<std::ptrdiff_t>(a.x.values.size()));
        d.y = std::move(a.y);
        d.y.insert(d.y.end(), b.y.begin(), b.y.end());
        return d;
    }

    const std::vector<std::size_t>& indices(int fold) const {
        if (fold < 0 || fold >= static_cast<int>(indices_.size()))
            throw InvariantError("FoldedSamples: no fold " + std::to_string(fold));
        return indices_[static_cast<std::size_t>(fold)];
    }

    std::uint64_t reads(int fold) const { return reads_[static_cast<std::size_t>(fold)]; }
    int n_folds() const { return static_cast<int>(indices_.size()); }

private:
    const std::vector<Sample>* all_;
    std::vector<std::vector<std::size_t>> indices_;
    mutable std::vector<std::uint64_t> reads_;
};

struct ExperimentConfig {
    std::vector<QuantileLevel> tau_levels = default_tau_levels();
    std::uint64_t seed = 1;
    GBDTGrid grid;
    int early_stopping_round = 20;
    int n_bins = 255;
    QRFConfig qrf;
    int n_threads = 1;
    bool run_gbdt = true;
    bool run_qrf = true;
    const TruthOracle* inject_oracle = nullptr;  // replaces both models' predictions

    void validate() const {
        if (tau_levels.empty()) throw InvariantError("ExperimentConfig: no tau levels");
        if (!run_gbdt && !run_qrf && !inject_oracle)
            throw InvariantError("ExperimentConfig: no model selected");
    }
};

struct ChosenConfig {
    double tau = 0.5;
    GBDTConfig config{};
    int best_iteration = 0;
    double valid_score = 0.0;
    std::size_t grid_index = 0;
};

struct ExperimentResult {
    std::vector<TauStrata> per_tau;
    std::vector<StationSkill> per_station;
    std::vector<std::size_t> fold_sizes;
    std::vector<ChosenConfig> chosen;          // one per tau when the GBDT ran
    std::uint64_t crossing_pairs = 0;          // GBDT quantile crossings on fold 3
    std::uint64_t fold3_reads_during_tuning = 0;
    std::vector<std::vector<double>> gbdt_predictions;  // per tau, clipped
    std::vector<std::vector<double>> qrf_predictions;   // per tau
    std::vector<double> test_observations;
    std::vector<std::string> test_station_ids;
};

/// Runs the full protocol on a 3-fold dataset: tune the boosted model per
/// tau on folds 1/2, fit the forest once and the final boosted models on
/// folds 1+2, predict fold 3 (boosted predictions clipped at zero), and
/// assemble the stratified and per-station reports.
inline ExperimentResult run_experiment(const std::vector<Sample>& samples,
                                       const FoldAssignment& folds,
                                       const ExperimentConfig& config) {
    config.validate();
    if (folds.n_folds != 3)
        throw InvariantError("run_experiment: expected a 3-fold assignment, got " +
                             std::to_string(folds.n_folds));
    FoldedSamples folded(samples, folds);
    for (int f = 0; f < 3; ++f)
        if (folded.indices(f).empty())
            throw InvariantError("run_experiment: fold " + std::to_string(f) + " is empty");

    ExperimentResult result;
    for (int f = 0; f < 3; ++f) result.fold_sizes.push_back(folded.indices(f).size());

    const bool injecting = config.inject_oracle != nullptr;
    const std::size_t n_tau = config.tau_levels.size();

    // ---- tuning phase: folds 1 and 2 only ----
    if (config.run_gbdt && !injecting) {
        const Dataset fold1 = folded.gather(0);
        const Dataset fold2 = folded.gather(1);
        for (std::size_t t = 0; t < n_tau; ++t) {
            GBDTConfig base;
            base.tau = config.tau_levels[t];
            base.early_stopping_round = config.early_stopping_round;
            base.n_bins = config.n_bins;
            base.seed = derive_seed(config.seed, "gbdt.tune", t);
            const auto grid_configs = enumerate_grid(config.grid, base);
            const auto search = grid_search(fold1, fold2, grid_configs, config.n_threads);
            result.chosen.push_back(ChosenConfig{config.tau_levels[t].value(), search.config,
                                                 search.best_iteration, search.valid_score,
                                                 search.grid_index});
        }
    }
    result.fold3_reads_during_tuning = folded.reads(2);

    // ---- final phase: fit on folds 1+2, test on fold 3 ----
    const Dataset test = folded.gather(2);
    result.test_observations = test.y;
    for (const auto row : folded.indices(2))
        result.test_station_ids.push_back(samples[row].station_id);

    if (injecting) {
        std::vector<std::vector<double>> oracle_preds(n_tau);
        for (std::size_t t = 0; t < n_tau; ++t) {
            oracle_preds[t].reserve(folded.indices(2).size());
            for (const auto row : folded.indices(2))
                oracle_preds[t].push_back(config.inject_oracle->quantile(
                    samples[row].station_id, samples[row].date, config.tau_levels[t]));
        }
        result.gbdt_predictions = oracle_preds;
        result.qrf_predictions = std::move(oracle_preds);
    } else {
        const Dataset train = folded.gather_union(0, 1);

        if (config.run_qrf) {
            QRFConfig qrf_config = config.qrf;
            qrf_config.seed = derive_seed(config.seed, "qrf");
            const QRFModel forest = fit_qrf(train, qrf_config, config.n_threads);
            result.qrf_predictions.assign(n_tau, {});
            for (auto& v : result.qrf_predictions) v.resize(test.size());
            QRFPredictor predictor(forest);
            for (std::size_t i = 0; i < test.size(); ++i) {
                const auto q = predictor.predict(test.x.row(i), config.tau_levels);
                for (std::size_t t = 0; t < n_tau; ++t) result.qrf_predictions[t][i] = q[t];
            }
        }

        if (config.run_gbdt) {
            result.gbdt_predictions.assign(n_tau, {});
            for (std::size_t t = 0; t < n_tau; ++t) {
                GBDTConfig final_config = result.chosen[t].config;
                final_config.num_iterations = result.chosen[t].best_iteration;
                final_config.early_stopping_round = 0;
                final_config.seed = derive_seed(config.seed, "gbdt.final", t);
                const GBDTModel model = fit_quantile_gbdt(train, nullptr, final_config);
                std::vector<double> preds(test.size());
                for (std::size_t i = 0; i < test.size(); ++i)
                    preds[i] = model.predict(test.x.row(i));
                result.gbdt_predictions[t] = clip_nonnegative(preds);
            }
            for (std::size_t i = 0; i < test.size(); ++i)
                for (std::size_t a = 0; a < n_tau; ++a)
                    for (std::size_t b = a + 1; b < n_tau; ++b)
                        if (result.gbdt_predictions[a][i] > result.gbdt_predictions[b][i])
                            ++result.crossing_pairs;
        }
    }

    const auto* cand = result.gbdt_predictions.empty() ? nullptr : &result.gbdt_predictions;
    const auto* ref = result.qrf_predictions.empty() ? nullptr : &result.qrf_predictions;
    result.per_tau = evaluate_strata(cand, ref, result.test_observations, config.tau_levels);
    result.per_station = per_station_scores(cand, ref, result.test_observations,
                                            result.test_station_ids, config.tau_levels);
    return result;
}

// ---- report emission ----

namespace detail {

inline std::string opt_cell(const std::optional<double>& v, bool undefined) {
    if (undefined) return "undefined";
    if (!v) return "";
    return csv::format_double(*v);
}

}  // namespace detail

inline std::string serialize_scores_table(const ExperimentResult& result) {
    std::ostringstream out;
    out << "tau,stratum,n,mean_score_gbdt,mean_score_qrf,quantile_skill,"
           "freq_score_gbdt,freq_score_qrf,freq_skill\n";
    for (const auto& ts : result.per_tau) {
        for (const auto& s : ts.strata) {
            out << csv::format_double(ts.tau.value()) << ',' << s.stratum << ',' << s.n << ','
                << detail::opt_cell(s.mean_score_candidate, false) << ','
                << detail::opt_cell(s.mean_score_reference, false) << ','
                << detail::opt_cell(s.skill, s.skill_undefined) << ','
                << detail::opt_cell(s.freq_candidate, false) << ','
                << detail::opt_cell(s.freq_reference, false) << ','
                << detail::opt_cell(s.freq_skill, s.freq_skill_undefined) << '\n';
        }
    }
    return out.str();
}

inline std::string serialize_station_table(const ExperimentResult& result) {
    std::ostringstream out;
    out << "station_id,tau,mean_score_gbdt,mean_score_qrf,quantile_skill\n";
    for (const auto& row : result.per_station) {
        out << row.station_id << ',' << csv::format_double(row.tau) << ','
            << detail::opt_cell(row.mean_score_candidate, false) << ','
            << detail::opt_cell(row.mean_score_reference, false) << ','
            << detail::opt_cell(row.skill, row.undefined) << '\n';
    }
    return out.str();
}

namespace detail {

template <typename T, typename Fn>
std::string join_list(const std::vector<T>& values, Fn&& format) {
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << format(values[i]);
    return out.str();
}

}  // namespace detail

/// Echoes the effective configuration under the exact keys the config
/// reader consumes, so the manifest alone replays the run.
inline void echo_experiment_config(KvConfig& manifest, const ExperimentConfig& config) {
    manifest.set_uint64("seed", config.seed);
    manifest.set("tau_levels", detail::join_list(config.tau_levels, [](QuantileLevel t) {
        return csv::format_double(t.value());
    }));
    manifest.set("grid.max_depth",
                 detail::join_list(config.grid.max_depth, [](int v) { return std::to_string(v); }));
    manifest.set("grid.min_data_in_leaf",
                 detail::join_list(config.grid.min_data_in_leaf,
                                   [](int v) { return std::to_string(v); }));
    manifest.set("grid.learning_rate",
                 detail::join_list(config.grid.learning_rate,
                                   [](double v) { return csv::format_double(v); }));
    manifest.set("grid.num_leaves",
                 detail::join_list(config.grid.num_leaves, [](int v) { return std::to_string(v); }));
    manifest.set_int("grid.num_iterations", config.grid.num_iterations);
    manifest.set_int("early_stopping_round", config.early_stopping_round);
    manifest.set_int("n_bins", config.n_bins);
    manifest.set_int("qrf.n_trees", config.qrf.n_trees);
    manifest.set_int("qrf.mtry", config.qrf.mtry);
    manifest.set_int("qrf.min_node_size", config.qrf.min_node_size);
}

inline void record_manifest(KvConfig& manifest, const ExperimentConfig& config,
                            const ExperimentResult& result) {
    echo_experiment_config(manifest, config);
    for (std::size_t f = 0; f < result.fold_sizes.size(); ++f)
        manifest.set_int("experiment.fold_size." + std::to_string(f),
                         static_cast<long long>(result.fold_sizes[f]));
    manifest.set_int("experiment.crossing_pairs",
                     static_cast<long long>(result.crossing_pairs));
    manifest.set_int("experiment.fold3_reads_during_tuning",
                     static_cast<long long>(result.fold3_reads_during_tuning));
    for (const auto& c : result.chosen) {
        const std::string prefix = "experiment.chosen." + csv::format_double(c.tau);
        manifest.set_int(prefix + ".max_depth", c.config.max_depth);
        manifest.set_int(prefix + ".min_data_in_leaf", c.config.min_data_in_leaf);
        manifest.set_double(prefix + ".learning_rate", c.config.learning_rate);
        manifest.set_int(prefix + ".num_leaves", c.config.num_leaves);
        manifest.set_int(prefix + ".best_iteration", c.best_iteration);
        manifest.set_double(prefix + ".valid_score", c.valid_score);
    }
}

}  // namespace quantmerge

#endif  // QUANTMERGE_EXPERIMENT_HPP
