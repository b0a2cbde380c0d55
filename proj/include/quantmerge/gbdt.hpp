#ifndef QUANTMERGE_GBDT_HPP
#define QUANTMERGE_GBDT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "quantmerge/csv.hpp"
#include "quantmerge/errors.hpp"
#include "quantmerge/matrix.hpp"
#include "quantmerge/rng.hpp"
#include "quantmerge/scoring.hpp"

// Histogram-based gradient-boosted trees with leaf-wise (best-first) growth,
// trained on the pinball loss at a fixed quantile level. The loss has zero
// curvature, so split gains use unit curvature and each grown leaf is
// renewed to the tau-quantile of its within-leaf residuals, which is the
// exact per-leaf minimizer. Optional GOSS keeps the largest-gradient rows
// and reweights a uniform sample of the rest.

namespace quantmerge {

struct GossConfig {
    double top_fraction = 0.2;   // a
    double rest_fraction = 0.1;  // b
};

struct GBDTConfig {
    QuantileLevel tau{0.5};
    int max_depth = 6;
    int min_data_in_leaf = 20;
    double learning_rate = 0.1;
    int num_iterations = 100;
    int num_leaves = 31;
    int early_stopping_round = 0;  // 0 disables early stopping
    int n_bins = 255;
    std::optional<GossConfig> goss;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_depth < 1) throw InvariantError("GBDTConfig: max_depth must be >= 1");
        if (min_data_in_leaf < 1) throw InvariantError("GBDTConfig: min_data_in_leaf must be >= 1");
        if (!(learning_rate > 0.0)) throw InvariantError("GBDTConfig: learning_rate must be > 0");
        if (num_iterations < 0) throw InvariantError("GBDTConfig: num_iterations must be >= 0");
        if (num_leaves < 2) throw InvariantError("GBDTConfig: num_leaves must be >= 2");
        if (max_depth < 31 && num_leaves > (1 << max_depth))
            throw InvariantError("GBDTConfig: num_leaves exceeds 2^max_depth");
        if (early_stopping_round < 0)
            throw InvariantError("GBDTConfig: early_stopping_round must be >= 0");
        if (n_bins < 2) throw InvariantError("GBDTConfig: n_bins must be >= 2");
        if (goss) {
            if (!(goss->top_fraction > 0.0 && goss->top_fraction < 1.0) ||
                !(goss->rest_fraction > 0.0 && goss->rest_fraction < 1.0) ||
                goss->top_fraction + goss->rest_fraction > 1.0)
                throw InvariantError("GBDTConfig: goss fractions must be in (0,1) with a + b <= 1");
        }
    }
};

/// Per-feature histogram bins. Boundaries sit at training-feature quantiles
/// (midpoints between adjacent distinct values) and are fixed after the
/// first scan. bin_of(f, v) <= s exactly when v <= boundary(f, s).
class FeatureBinning {
public:
    static FeatureBinning build(const DataMatrix& x, int n_bins) {
        if (x.n_rows == 0) throw InvariantError("FeatureBinning: empty matrix");
        FeatureBinning fb;
        fb.boundaries_.resize(x.n_cols);
        std::vector<double> col(x.n_rows);
        for (std::size_t f = 0; f < x.n_cols; ++f) {
            for (std::size_t r = 0; r < x.n_rows; ++r) col[r] = x.at(r, f);
            std::sort(col.begin(), col.end());
            auto& bounds = fb.boundaries_[f];
            const std::size_t n = col.size();
            for (int cut = 1; cut < n_bins; ++cut) {
                // last row index belonging to the cut-th bin under an equal-count split
                const std::size_t pos = (n * static_cast<std::size_t>(cut)) / n_bins;
                if (pos == 0 || pos >= n) continue;
                if (col[pos - 1] == col[pos]) continue;  // boundary must separate values
                const double b = col[pos - 1] + 0.5 * (col[pos] - col[pos - 1]);
                if (bounds.empty() || b > bounds.back()) bounds.push_back(b);
            }
        }
        return fb;
    }

    int feature_count() const { return static_cast<int>(boundaries_.size()); }
    int bin_count(int feature) const {
        return static_cast<int>(boundaries_[feature].size()) + 1;
    }
    double boundary(int feature, int bin) const { return boundaries_[feature][bin]; }

    int bin_of(int feature, double value) const {
        const auto& b = boundaries_[feature];
        return static_cast<int>(std::lower_bound(b.begin(), b.end(), value) - b.begin());
    }

private:
    std::vector<std::vector<double>> boundaries_;
};

/// Row-major pre-binned copy of a feature matrix.
struct BinnedMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::uint16_t> bins;

    static BinnedMatrix build(const DataMatrix& x, const FeatureBinning& binning) {
        BinnedMatrix bm;
        bm.n_rows = x.n_rows;
        bm.n_cols = x.n_cols;
        bm.bins.resize(x.n_rows * x.n_cols);
        for (std::size_t r = 0; r < x.n_rows; ++r)
            for (std::size_t f = 0; f < x.n_cols; ++f)
                bm.bins[r * x.n_cols + f] =
                    static_cast<std::uint16_t>(binning.bin_of(static_cast<int>(f), x.at(r, f)));
        return bm;
    }

    std::uint16_t at(std::size_t r, std::size_t f) const { return bins[r * n_cols + f]; }
};

struct SplitCandidate {
    int feature = -1;
    int bin = -1;  // rows with bin_of(feature, x) <= bin go left
    double threshold = 0.0;
    double gain = 0.0;
};

/// Best histogram split of a node: per feature, accumulate weighted gradient
/// sums per bin and scan the boundaries; gain is the squared-gradient-sum
/// criterion under unit curvature. Returns nothing when no split has
/// positive gain or the node is too small to yield two valid children.
inline std::optional<SplitCandidate> best_histogram_split(
    const BinnedMatrix& binned, const FeatureBinning& binning,
    std::span<const std::uint32_t> node_indices, std::span<const double> gradients,
    std::span<const double> weights, int min_data_in_leaf) {
    const std::size_t n_node = node_indices.size();
    if (n_node < 2 * static_cast<std::size_t>(min_data_in_leaf)) return std::nullopt;

    double parent_grad = 0.0, parent_weight = 0.0;
    for (const auto idx : node_indices) {
        parent_grad += gradients[idx] * weights[idx];
        parent_weight += weights[idx];
    }
    if (!(parent_weight > 0.0)) return std::nullopt;
    const double parent_term = parent_grad * parent_grad / parent_weight;

    SplitCandidate best;
    std::vector<double> grad_sum, weight_sum;
    std::vector<std::size_t> count;
    for (int f = 0; f < binning.feature_count(); ++f) {
        const int nb = binning.bin_count(f);
        if (nb < 2) continue;
        grad_sum.assign(nb, 0.0);
        weight_sum.assign(nb, 0.0);
        count.assign(nb, 0);
        for (const auto idx : node_indices) {
            const auto b = binned.at(idx, static_cast<std::size_t>(f));
            grad_sum[b] += gradients[idx] * weights[idx];
            weight_sum[b] += weights[idx];
            ++count[b];
        }
        double left_grad = 0.0, left_weight = 0.0;
        std::size_t left_count = 0;
        for (int s = 0; s < nb - 1; ++s) {
            left_grad += grad_sum[s];
            left_weight += weight_sum[s];
            left_count += count[s];
            const std::size_t right_count = n_node - left_count;
            if (right_count < static_cast<std::size_t>(min_data_in_leaf)) break;
            if (left_count < static_cast<std::size_t>(min_data_in_leaf)) continue;
            const double right_grad = parent_grad - left_grad;
            const double right_weight = parent_weight - left_weight;
            if (!(left_weight > 0.0) || !(right_weight > 0.0)) continue;
            const double gain = left_grad * left_grad / left_weight +
                                right_grad * right_grad / right_weight - parent_term;
            if (gain > best.gain) {
                best.feature = f;
                best.bin = s;
                best.threshold = binning.boundary(f, s);
                best.gain = gain;
            }
        }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
}

struct GossSample {
    std::vector<std::uint32_t> indices;  // ascending
    std::vector<double> weights;         // aligned with indices
};

/// Gradient-based one-side sampling: keep the ceil(a*n) largest-|gradient|
/// rows at weight 1 and a uniform ceil(b*n) sample of the rest at weight
/// (1-a)/b. Ties in |gradient| break by lower row index.
inline GossSample goss_sample(std::span<const double> gradients, double top_fraction,
                              double rest_fraction, std::uint64_t seed) {
    const std::size_t n = gradients.size();
    if (n == 0) throw InvariantError("goss_sample: empty gradients");
    if (!(top_fraction > 0.0 && top_fraction < 1.0) ||
        !(rest_fraction > 0.0 && rest_fraction < 1.0) ||
        top_fraction + rest_fraction > 1.0)
        throw InvariantError("goss_sample: fractions must be in (0,1) with a + b <= 1");

    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return std::fabs(gradients[a]) > std::fabs(gradients[b]);
    });

    const std::size_t n_top = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(n))));
    std::size_t n_rest = static_cast<std::size_t>(
        std::ceil(rest_fraction * static_cast<double>(n)));
    n_rest = std::min(n_rest, n - n_top);

    std::vector<std::uint32_t> remainder(order.begin() + n_top, order.end());
    Rng rng(seed);
    rng.shuffle(remainder);

    const double rest_weight = (1.0 - top_fraction) / rest_fraction;
    std::vector<std::pair<std::uint32_t, double>> picked;
    picked.reserve(n_top + n_rest);
    for (std::size_t i = 0; i < n_top; ++i) picked.emplace_back(order[i], 1.0);
    for (std::size_t i = 0; i < n_rest; ++i) picked.emplace_back(remainder[i], rest_weight);
    std::sort(picked.begin(), picked.end());

    GossSample out;
    out.indices.reserve(picked.size());
    out.weights.reserve(picked.size());
    for (const auto& [idx, w] : picked) {
        out.indices.push_back(idx);
        out.weights.push_back(w);
    }
    return out;
}

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    int leaf_count = 0;
    int depth = 0;

    double predict(std::span<const double> x) const {
        int n = 0;
        while (nodes[n].feature >= 0)
            n = (x[nodes[n].feature] <= nodes[n].threshold) ? nodes[n].left : nodes[n].right;
        return nodes[n].value;
    }
};

struct GBDTModel {
    double base_score = 0.0;
    std::vector<Tree> trees;
    GBDTConfig config;
    int feature_count = 0;
    int best_iteration = 0;  // number of trees used for prediction

    // fit diagnostics, not part of the serialized format
    std::vector<double> train_score_history;  // after each round
    std::vector<double> valid_score_history;  // index 0 = base-only model

    double predict(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != feature_count)
            throw InvariantError("GBDTModel: feature count mismatch (" +
                                 std::to_string(x.size()) + " vs " +
                                 std::to_string(feature_count) + ")");
        double acc = base_score;
        for (int t = 0; t < best_iteration; ++t)
            acc += config.learning_rate * trees[t].predict(x);
        return acc;
    }
};

inline double predict_raw(const GBDTModel& model, std::span<const double> features) {
    return model.predict(features);
}

namespace detail {

/// Smallest value whose cumulative weight reaches tau * total (the inf
/// convention applied to a weighted empirical distribution).
inline double weighted_quantile(std::vector<std::pair<double, double>>& value_weight,
                                double tau) {
    if (value_weight.empty()) throw InvariantError("weighted_quantile: empty input");
    std::sort(value_weight.begin(), value_weight.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double total = 0.0;
    for (const auto& [v, w] : value_weight) total += w;
    const double threshold = tau * total;
    double cum = 0.0;
    for (const auto& [v, w] : value_weight) {
        cum += w;
        if (cum >= threshold) return v;
    }
    return value_weight.back().first;
}

inline double empirical_quantile(std::span<const double> values, double tau) {
    std::vector<std::pair<double, double>> vw;
    vw.reserve(values.size());
    for (double v : values) vw.emplace_back(v, 1.0);
    return weighted_quantile(vw, tau);
}

struct FrontierEntry {
    int node_id;
    std::size_t start, end;  // range in the index array
    int depth;
    SplitCandidate split;
};

}  // namespace detail

/// One boosting round: grows a leaf-wise tree on the pinball subgradients of
/// the selected rows, then renews each leaf to the within-leaf weighted
/// tau-quantile of residuals (y - current prediction). gradients, weights
/// and residuals are indexed by original row.
inline Tree grow_tree(const BinnedMatrix& binned, const FeatureBinning& binning,
                      std::span<const std::uint32_t> selected,
                      std::span<const double> gradients, std::span<const double> weights,
                      std::span<const double> residuals, const GBDTConfig& config) {
    Tree tree;
    tree.nodes.push_back(TreeNode{});
    std::vector<std::uint32_t> indices(selected.begin(), selected.end());

    std::vector<detail::FrontierEntry> frontier;
    std::vector<std::tuple<int, std::size_t, std::size_t>> leaf_ranges;  // node, start, end
    leaf_ranges.emplace_back(0, 0, indices.size());

    auto try_make_candidate = [&](int node_id, std::size_t start, std::size_t end, int depth) {
        if (depth >= config.max_depth) return;
        auto cand = best_histogram_split(
            binned, binning, std::span<const std::uint32_t>(indices).subspan(start, end - start),
            gradients, weights, config.min_data_in_leaf);
        if (cand && cand->gain > 0.0)
            frontier.push_back(detail::FrontierEntry{node_id, start, end, depth, *cand});
    };
    try_make_candidate(0, 0, indices.size(), 0);

    tree.leaf_count = 1;
    while (tree.leaf_count < config.num_leaves && !frontier.empty()) {
        std::size_t best_at = 0;
        for (std::size_t i = 1; i < frontier.size(); ++i)
            if (frontier[i].split.gain > frontier[best_at].split.gain) best_at = i;
        const detail::FrontierEntry entry = frontier[best_at];
        frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(best_at));

        const auto mid = std::stable_partition(
            indices.begin() + static_cast<std::ptrdiff_t>(entry.start),
            indices.begin() + static_cast<std::ptrdiff_t>(entry.end),
            [&](std::uint32_t idx) {
                return binned.at(idx, static_cast<std::size_t>(entry.split.feature)) <=
                       entry.split.bin;
            });
        const std::size_t split_pos =
            static_cast<std::size_t>(mid - indices.begin());

        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        const int right_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes[entry.node_id].feature = entry.split.feature;
        tree.nodes[entry.node_id].threshold = entry.split.threshold;
        tree.nodes[entry.node_id].left = left_id;
        tree.nodes[entry.node_id].right = right_id;
        ++tree.leaf_count;
        tree.depth = std::max(tree.depth, entry.depth + 1);

        std::erase_if(leaf_ranges, [&](const auto& lr) { return std::get<0>(lr) == entry.node_id; });
        leaf_ranges.emplace_back(left_id, entry.start, split_pos);
        leaf_ranges.emplace_back(right_id, split_pos, entry.end);
        try_make_candidate(left_id, entry.start, split_pos, entry.depth + 1);
        try_make_candidate(right_id, split_pos, entry.end, entry.depth + 1);
    }

    // leaf renewal: weighted tau-quantile of residuals within each leaf
    std::vector<std::pair<double, double>> vw;
    for (const auto& [node_id, start, end] : leaf_ranges) {
        vw.clear();
        for (std::size_t i = start; i < end; ++i)
            vw.emplace_back(residuals[indices[i]], weights[indices[i]]);
        tree.nodes[node_id].value = detail::weighted_quantile(vw, config.tau.value());
    }
    return tree;
}

/// Fits the boosted model. base_score is the empirical tau-quantile of the
/// training targets; with early stopping enabled, training halts once the
/// validation mean quantile score has not improved for
/// early_stopping_round consecutive rounds, and best_iteration marks the
/// best validation round (0 = base score only).
inline GBDTModel fit_quantile_gbdt(const Dataset& train, const Dataset* valid,
                                   const GBDTConfig& config) {
    config.validate();
    train.validate();
    if (train.size() == 0) throw InvariantError("fit_quantile_gbdt: empty training set");
    if (config.early_stopping_round > 0 && (valid == nullptr || valid->size() == 0))
        throw InvariantError("fit_quantile_gbdt: early stopping requires a validation set");
    if (valid) valid->validate();

    const double tau = config.tau.value();
    const std::size_t n = train.size();

    GBDTModel model;
    model.config = config;
    model.feature_count = static_cast<int>(train.x.n_cols);
    model.base_score = detail::empirical_quantile(train.y, tau);

    const FeatureBinning binning = FeatureBinning::build(train.x, config.n_bins);
    const BinnedMatrix binned = BinnedMatrix::build(train.x, binning);

    std::vector<double> preds(n, model.base_score);
    std::vector<double> valid_preds;
    if (valid) valid_preds.assign(valid->size(), model.base_score);

    const auto valid_score = [&]() {
        return mean_quantile_score(valid_preds, valid->y, config.tau);
    };

    double best_valid = valid ? valid_score() : 0.0;
    if (valid) model.valid_score_history.push_back(best_valid);
    model.best_iteration = 0;

    std::vector<double> gradients(n), residuals(n);
    std::vector<std::uint32_t> all_indices(n);
    for (std::size_t i = 0; i < n; ++i) all_indices[i] = static_cast<std::uint32_t>(i);
    std::vector<double> row_weights(n, 1.0);

    for (int round = 1; round <= config.num_iterations; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double u = preds[i] - train.y[i];
            gradients[i] = (u >= 0.0 ? 1.0 : 0.0) - tau;
            residuals[i] = train.y[i] - preds[i];
        }
        std::span<const std::uint32_t> selected(all_indices);
        GossSample goss;
        if (config.goss) {
            goss = goss_sample(gradients, config.goss->top_fraction, config.goss->rest_fraction,
                               derive_seed(config.seed, "gbdt.goss",
                                           static_cast<std::uint64_t>(round)));
            selected = goss.indices;
            std::fill(row_weights.begin(), row_weights.end(), 0.0);
            for (std::size_t i = 0; i < goss.indices.size(); ++i)
                row_weights[goss.indices[i]] = goss.weights[i];
        }
        Tree tree = grow_tree(binned, binning, selected, gradients, row_weights, residuals,
                              config);

        for (std::size_t i = 0; i < n; ++i)
            preds[i] += config.learning_rate * tree.predict(train.x.row(i));
        model.trees.push_back(std::move(tree));
        model.train_score_history.push_back(
            mean_quantile_score(preds, train.y, config.tau));

        if (valid) {
            for (std::size_t j = 0; j < valid->size(); ++j)
                valid_preds[j] +=
                    config.learning_rate * model.trees.back().predict(valid->x.row(j));
            const double score = valid_score();
            model.valid_score_history.push_back(score);
            if (score < best_valid) {
                best_valid = score;
                model.best_iteration = round;
            }
            if (config.early_stopping_round > 0 &&
                round - model.best_iteration >= config.early_stopping_round)
                break;
        }
    }
    if (config.early_stopping_round == 0)
        model.best_iteration = static_cast<int>(model.trees.size());
    return model;
}

// ---- model serialization (structured text, lossless doubles) ----

inline std::string serialize_gbdt(const GBDTModel& model) {
    std::ostringstream out;
    out << "quantmerge_gbdt_model v1\n";
    out << "tau = " << csv::format_double(model.config.tau.value()) << '\n';
    out << "max_depth = " << model.config.max_depth << '\n';
    out << "min_data_in_leaf = " << model.config.min_data_in_leaf << '\n';
    out << "learning_rate = " << csv::format_double(model.config.learning_rate) << '\n';
    out << "num_iterations = " << model.config.num_iterations << '\n';
    out << "num_leaves = " << model.config.num_leaves << '\n';
    out << "early_stopping_round = " << model.config.early_stopping_round << '\n';
    out << "n_bins = " << model.config.n_bins << '\n';
    if (model.config.goss) {
        out << "goss_top_fraction = " << csv::format_double(model.config.goss->top_fraction)
            << '\n';
        out << "goss_rest_fraction = " << csv::format_double(model.config.goss->rest_fraction)
            << '\n';
    }
    out << "seed = " << model.config.seed << '\n';
    out << "feature_count = " << model.feature_count << '\n';
    out << "base_score = " << csv::format_double(model.base_score) << '\n';
    out << "best_iteration = " << model.best_iteration << '\n';
    out << "num_trees = " << model.trees.size() << '\n';
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const Tree& tree = model.trees[t];
        out << "tree " << t << ' ' << tree.nodes.size() << ' ' << tree.leaf_count << ' '
            << tree.depth << '\n';
        for (const auto& nd : tree.nodes) {
            out << nd.feature << ',' << csv::format_double(nd.threshold) << ',' << nd.left << ','
                << nd.right << ',' << csv::format_double(nd.value) << '\n';
        }
    }
    return out.str();
}

inline GBDTModel parse_gbdt(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "quantmerge_gbdt_model v1")
        throw DataError("gbdt model: unrecognized header");

    std::map<std::string, std::string> kv;
    std::streampos tree_start = in.tellg();
    while (std::getline(in, line)) {
        if (line.rfind("tree ", 0) == 0) break;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("gbdt model: expected 'key = value'");
        auto trim = [](std::string s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        tree_start = in.tellg();
    }
    in.clear();
    in.seekg(tree_start);

    const auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("gbdt model: missing field " + key);
        return it->second;
    };

    GBDTModel model;
    GBDTConfig cfg;
    cfg.tau = QuantileLevel(csv::parse_double(need("tau"), "gbdt model"));
    cfg.max_depth = static_cast<int>(csv::parse_int(need("max_depth"), "gbdt model"));
    cfg.min_data_in_leaf =
        static_cast<int>(csv::parse_int(need("min_data_in_leaf"), "gbdt model"));
    cfg.learning_rate = csv::parse_double(need("learning_rate"), "gbdt model");
    cfg.num_iterations = static_cast<int>(csv::parse_int(need("num_iterations"), "gbdt model"));
    cfg.num_leaves = static_cast<int>(csv::parse_int(need("num_leaves"), "gbdt model"));
    cfg.early_stopping_round =
        static_cast<int>(csv::parse_int(need("early_stopping_round"), "gbdt model"));
    cfg.n_bins = static_cast<int>(csv::parse_int(need("n_bins"), "gbdt model"));
    if (kv.count("goss_top_fraction")) {
        GossConfig g;
        g.top_fraction = csv::parse_double(need("goss_top_fraction"), "gbdt model");
        g.rest_fraction = csv::parse_double(need("goss_rest_fraction"), "gbdt model");
        cfg.goss = g;
    }
    cfg.seed = static_cast<std::uint64_t>(csv::parse_uint64(need("seed"), "gbdt model"));
    model.config = cfg;
    model.feature_count = static_cast<int>(csv::parse_int(need("feature_count"), "gbdt model"));
    model.base_score = csv::parse_double(need("base_score"), "gbdt model");
    model.best_iteration =
        static_cast<int>(csv::parse_int(need("best_iteration"), "gbdt model"));
    const auto num_trees = csv::parse_int(need("num_trees"), "gbdt model");

    for (long long t = 0; t < num_trees; ++t) {
        if (!std::getline(in, line)) throw DataError("gbdt model: missing tree " + std::to_string(t));
        long long idx = 0, n_nodes = 0, leaves = 0, depth = 0;
        if (std::sscanf(line.c_str(), "tree %lld %lld %lld %lld", &idx, &n_nodes, &leaves,
                        &depth) != 4 ||
            idx != t)
            throw DataError("gbdt model: malformed tree header '" + line + "'");
        Tree tree;
        tree.leaf_count = static_cast<int>(leaves);
        tree.depth = static_cast<int>(depth);
        for (long long k = 0; k < n_nodes; ++k) {
            if (!std::getline(in, line)) throw DataError("gbdt model: truncated tree");
            const auto f = csv::split(line);
            if (f.size() != 5) throw DataError("gbdt model: malformed node row '" + line + "'");
            TreeNode nd;
            nd.feature = static_cast<int>(csv::parse_int(f[0], "gbdt model node"));
            nd.threshold = csv::parse_double(f[1], "gbdt model node");
            nd.left = static_cast<int>(csv::parse_int(f[2], "gbdt model node"));
            nd.right = static_cast<int>(csv::parse_int(f[3], "gbdt model node"));
            nd.value = csv::parse_double(f[4], "gbdt model node");
            tree.nodes.push_back(nd);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

inline void save_gbdt(const std::string& path, const GBDTModel& model) {
    csv::write_file(path, serialize_gbdt(model));
}

inline GBDTModel load_gbdt(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_gbdt(ss.str());
}

}  // namespace quantmerge

#endif  // QUANTMERGE_GBDT_HPP
