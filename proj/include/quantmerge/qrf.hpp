#ifndef QUANTMERGE_QRF_HPP
#define QUANTMERGE_QRF_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/csv.hpp"
#include "quantmerge/errors.hpp"
#include "quantmerge/matrix.hpp"
#include "quantmerge/rng.hpp"
#include "quantmerge/scoring.hpp"
#include "quantmerge/threading.hpp"

// Quantile regression forests: bagged variance-reduction regression trees
// whose leaves keep the indices of all training samples routed to them.
// A query's conditional CDF is the leaf-membership-weighted empirical
// distribution of the training targets (Meinshausen's construction), and
// quantiles are read off by the infimum convention.

namespace quantmerge {

struct QRFConfig {
    int n_trees = 100;
    int mtry = 4;  // floor(sqrt(19))
    int min_node_size = 5;
    std::uint64_t seed = 0;
    bool bootstrap = true;  // test hook; production fits always resample

    void validate(int feature_count) const {
        if (n_trees < 1) throw InvariantError("QRFConfig: n_trees must be >= 1");
        if (mtry < 1 || mtry > feature_count)
            throw InvariantError("QRFConfig: mtry must be in [1, feature_count]");
        if (min_node_size < 1) throw InvariantError("QRFConfig: min_node_size must be >= 1");
    }
};

struct QRFNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf_id = -1;
};

struct QRFTree {
    std::vector<QRFNode> nodes;
    std::vector<std::vector<std::uint32_t>> leaf_members;  // all original samples, by leaf_id

    int route_leaf(std::span<const double> x) const {
        int n = 0;
        while (nodes[n].feature >= 0)
            n = (x[nodes[n].feature] <= nodes[n].threshold) ? nodes[n].left : nodes[n].right;
        return nodes[n].leaf_id;
    }
};

class QRFModel {
public:
    QRFModel() = default;
    QRFModel(QRFConfig config, int feature_count, std::vector<double> targets,
             std::vector<QRFTree> trees)
        : config_(config),
          feature_count_(feature_count),
          targets_(std::move(targets)),
          trees_(std::move(trees)) {}

    const QRFConfig& config() const { return config_; }
    int feature_count() const { return feature_count_; }
    const std::vector<double>& targets() const { return targets_; }
    const std::vector<QRFTree>& trees() const { return trees_; }

    void check_features(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != feature_count_)
            throw InvariantError("QRFModel: feature count mismatch (" + std::to_string(x.size()) +
                                 " vs " + std::to_string(feature_count_) + ")");
    }

private:
    QRFConfig config_;
    int feature_count_ = 0;
    std::vector<double> targets_;
    std::vector<QRFTree> trees_;
};

namespace detail {

struct QRFBuilder {
    const DataMatrix& x;
    std::span<const double> y;
    const QRFConfig& config;
    Rng rng;
    QRFTree tree;
    std::vector<std::uint32_t> indices;  // bootstrap sample, partitioned in place
    std::vector<int> feature_pool;

    QRFBuilder(const DataMatrix& x_, std::span<const double> y_, const QRFConfig& cfg,
               std::uint64_t seed)
        : x(x_), y(y_), config(cfg), rng(seed) {
        const std::size_t n = x.n_rows;
        indices.resize(n);
        if (config.bootstrap) {
            for (std::size_t i = 0; i < n; ++i)
                indices[i] = static_cast<std::uint32_t>(rng.below(n));
        } else {
            for (std::size_t i = 0; i < n; ++i) indices[i] = static_cast<std::uint32_t>(i);
        }
        feature_pool.resize(x.n_cols);
        for (std::size_t f = 0; f < x.n_cols; ++f) feature_pool[f] = static_cast<int>(f);
    }

    /// mtry distinct features, ascending, consumed from the tree's stream.
    std::vector<int> draw_features() {
        const std::size_t p = feature_pool.size();
        for (int k = 0; k < config.mtry; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(p - k));
            std::swap(feature_pool[k], feature_pool[j]);
        }
        std::vector<int> chosen(feature_pool.begin(), feature_pool.begin() + config.mtry);
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    struct BestSplit {
        int feature = -1;
        double threshold = 0.0;
        double child_term = 0.0;
    };

    void build(std::size_t start, std::size_t end) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(QRFNode{});
        const std::size_t n_node = end - start;

        BestSplit best;
        if (n_node >= 2 * static_cast<std::size_t>(config.min_node_size)) {
            double sum = 0.0;
            for (std::size_t i = start; i < end; ++i) sum += y[indices[i]];
            const double parent_term = sum * sum / static_cast<double>(n_node);

            const auto features = draw_features();
            std::vector<std::pair<double, double>> vy(n_node);
            for (int f : features) {
                for (std::size_t i = start; i < end; ++i)
                    vy[i - start] = {x.at(indices[i], static_cast<std::size_t>(f)),
                                     y[indices[i]]};
                std::stable_sort(vy.begin(), vy.end(),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
                double left_sum = 0.0;
                for (std::size_t i = 0; i + 1 < n_node; ++i) {
                    left_sum += vy[i].second;
                    if (vy[i].first == vy[i + 1].first) continue;
                    const double nl = static_cast<double>(i + 1);
                    const double nr = static_cast<double>(n_node - i - 1);
                    const double right_sum = sum - left_sum;
                    const double term = left_sum * left_sum / nl + right_sum * right_sum / nr;
                    if (term > parent_term && (best.feature < 0 || term > best.child_term)) {
                        best.feature = f;
                        best.threshold = vy[i].first + 0.5 * (vy[i + 1].first - vy[i].first);
                        best.child_term = term;
                    }
                }
            }
        }

        if (best.feature < 0) return;  // leaf; leaf_id assigned later

        const auto mid = std::stable_partition(
            indices.begin() + static_cast<std::ptrdiff_t>(start),
            indices.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t idx) {
                return x.at(idx, static_cast<std::size_t>(best.feature)) <= best.threshold;
            });
        const std::size_t split_pos = static_cast<std::size_t>(mid - indices.begin());
        // a midpoint threshold between distinct values always separates
        if (split_pos == start || split_pos == end)
            throw InvariantError("QRF: degenerate split");

        tree.nodes[node_id].feature = best.feature;
        tree.nodes[node_id].threshold = best.threshold;
        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes[node_id].left = left_id;
        build(start, split_pos);
        tree.nodes[node_id].right = static_cast<int>(tree.nodes.size());
        build(split_pos, end);
    }

    QRFTree finish() {
        build(0, indices.size());
        int next_leaf = 0;
        for (auto& nd : tree.nodes)
            if (nd.feature < 0) nd.leaf_id = next_leaf++;
        tree.leaf_members.assign(static_cast<std::size_t>(next_leaf), {});
        for (std::size_t i = 0; i < x.n_rows; ++i) {
            const int leaf = tree.route_leaf(x.row(i));
            tree.leaf_members[static_cast<std::size_t>(leaf)].push_back(
                static_cast<std::uint32_t>(i));
        }
        for (const auto& members : tree.leaf_members)
            if (members.empty()) throw InvariantError("QRF: empty leaf after routing");
        return std::move(tree);
    }
};

}  // namespace detail

/// Grows the forest; per-tree seeds derive from the master seed by tree
/// index, so worker scheduling cannot change the model.
inline QRFModel fit_qrf(const DataMatrix& x, std::span<const double> y, const QRFConfig& config,
                        int n_threads = 1) {
    if (x.n_rows == 0) throw InvariantError("fit_qrf: empty training set");
    if (x.n_rows != y.size()) throw InvariantError("fit_qrf: target length mismatch");
    config.validate(static_cast<int>(x.n_cols));

    std::vector<QRFTree> trees(static_cast<std::size_t>(config.n_trees));
    parallel_for(trees.size(), n_threads, [&](std::size_t t) {
        detail::QRFBuilder builder(x, y, config, derive_seed(config.seed, "qrf.tree", t));
        trees[t] = builder.finish();
    });
    return QRFModel(config, static_cast<int>(x.n_cols), std::vector<double>(y.begin(), y.end()),
                    std::move(trees));
}

inline QRFModel fit_qrf(const Dataset& train, const QRFConfig& config, int n_threads = 1) {
    return fit_qrf(train.x, train.y, config, n_threads);
}

/// Per-training-sample weights for a query: within each tree, samples
/// sharing the query's leaf get 1/|leaf|; the final weight averages over
/// trees and sums to 1.
inline std::vector<double> qrf_weights(const QRFModel& model, std::span<const double> x) {
    model.check_features(x);
    std::vector<double> w(model.targets().size(), 0.0);
    for (const auto& tree : model.trees()) {
        const auto& members =
            tree.leaf_members[static_cast<std::size_t>(tree.route_leaf(x))];
        const double inv = 1.0 / static_cast<double>(members.size());
        for (const auto idx : members) w[idx] += inv;
    }
    const double inv_trees = 1.0 / static_cast<double>(model.trees().size());
    for (auto& v : w) v *= inv_trees;
    return w;
}

/// Weighted empirical CDF: sorted unique support with weights summing to 1.
struct WeightedCDF {
    std::vector<double> support;
    std::vector<double> weights;

    void validate() const {
        if (support.size() != weights.size())
            throw InvariantError("WeightedCDF: length mismatch");
        if (support.empty()) throw InvariantError("WeightedCDF: empty");
        double total = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) {
            if (i > 0 && !(support[i - 1] < support[i]))
                throw InvariantError("WeightedCDF: support not strictly ascending");
            if (weights[i] < 0.0) throw InvariantError("WeightedCDF: negative weight");
            total += weights[i];
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw InvariantError("WeightedCDF: weights sum to " + csv::format_double(total));
    }

    /// inf{v : F(v) >= tau}; falls back to the maximum if rounding keeps the
    /// cumulative sum fractionally below tau at the end.
    double quantile(QuantileLevel tau) const {
        double cum = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) {
            cum += weights[i];
            if (cum >= tau.value()) return support[i];
        }
        return support.back();
    }
};

/// Collapses per-index weights onto the distinct values they carry.
inline WeightedCDF weighted_cdf(std::span<const double> weights_by_index,
                                std::span<const double> values) {
    if (weights_by_index.size() != values.size())
        throw InvariantError("weighted_cdf: length mismatch");
    std::vector<std::pair<double, double>> vw;  // (value, weight), index-ascending gather
    for (std::size_t i = 0; i < values.size(); ++i)
        if (weights_by_index[i] > 0.0) vw.emplace_back(values[i], weights_by_index[i]);
    if (vw.empty()) throw InvariantError("weighted_cdf: all weights zero");
    std::stable_sort(vw.begin(), vw.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    WeightedCDF cdf;
    for (const auto& [v, w] : vw) {
        if (!cdf.support.empty() && cdf.support.back() == v)
            cdf.weights.back() += w;
        else {
            cdf.support.push_back(v);
            cdf.weights.push_back(w);
        }
    }
    return cdf;
}

inline double predict_quantile(const QRFModel& model, std::span<const double> x,
                               QuantileLevel tau) {
    const auto w = qrf_weights(model, x);
    return weighted_cdf(w, model.targets()).quantile(tau);
}

/// Batch predictor with a reusable sparse accumulator: equivalent to
/// qrf_weights + weighted_cdf per query, without the O(n_train) dense pass.
class QRFPredictor {
public:
    explicit QRFPredictor(const QRFModel& model)
        : model_(model), weight_(model.targets().size(), 0.0) {}

    /// Quantiles at the given levels for one query, from a single CDF.
    std::vector<double> predict(std::span<const double> x,
                                std::span<const QuantileLevel> levels) {
        model_.check_features(x);
        touched_.clear();
        for (const auto& tree : model_.trees()) {
            const auto& members =
                tree.leaf_members[static_cast<std::size_t>(tree.route_leaf(x))];
            const double inv = 1.0 / static_cast<double>(members.size());
            for (const auto idx : members) {
                if (weight_[idx] == 0.0) touched_.push_back(idx);
                weight_[idx] += inv;
            }
        }
        const double inv_trees = 1.0 / static_cast<double>(model_.trees().size());
        vw_.clear();
        std::sort(touched_.begin(), touched_.end());
        for (const auto idx : touched_) {
            vw_.emplace_back(model_.targets()[idx], weight_[idx] * inv_trees);
            weight_[idx] = 0.0;
        }
        std::stable_sort(vw_.begin(), vw_.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        // collapse runs of equal values so the cumulative scan associates
        // exactly like weighted_cdf + quantile
        cdf_.clear();
        for (const auto& [v, w] : vw_) {
            if (!cdf_.empty() && cdf_.back().first == v)
                cdf_.back().second += w;
            else
                cdf_.emplace_back(v, w);
        }

        std::vector<double> out;
        out.reserve(levels.size());
        for (const auto tau : levels) {
            double cum = 0.0;
            double result = cdf_.back().first;
            for (const auto& [v, w] : cdf_) {
                cum += w;
                if (cum >= tau.value()) {
                    result = v;
                    break;
                }
            }
            out.push_back(result);
        }
        return out;
    }

private:
    const QRFModel& model_;
    std::vector<double> weight_;
    std::vector<std::uint32_t> touched_;
    std::vector<std::pair<double, double>> vw_;
    std::vector<std::pair<double, double>> cdf_;
};

// ---- model serialization ----

inline std::string serialize_qrf(const QRFModel& model) {
    std::ostringstream out;
    out << "quantmerge_qrf_model v1\n";
    out << "n_trees = " << model.config().n_trees << '\n';
    out << "mtry = " << model.config().mtry << '\n';
    out << "min_node_size = " << model.config().min_node_size << '\n';
    out << "seed = " << model.config().seed << '\n';
    out << "bootstrap = " << (model.config().bootstrap ? 1 : 0) << '\n';
    out << "feature_count = " << model.feature_count() << '\n';
    out << "n_train = " << model.targets().size() << '\n';
    out << "targets\n";
    for (const double t : model.targets()) out << csv::format_double(t) << '\n';
    for (std::size_t t = 0; t < model.trees().size(); ++t) {
        const auto& tree = model.trees()[t];
        out << "tree " << t << ' ' << tree.nodes.size() << ' ' << tree.leaf_members.size()
            << '\n';
        for (const auto& nd : tree.nodes)
            out << nd.feature << ',' << csv::format_double(nd.threshold) << ',' << nd.left << ','
                << nd.right << ',' << nd.leaf_id << '\n';
        for (std::size_t l = 0; l < tree.leaf_members.size(); ++l) {
            out << "leaf " << l;
            for (const auto idx : tree.leaf_members[l]) out << ' ' << idx;
            out << '\n';
        }
    }
    return out.str();
}

inline QRFModel parse_qrf(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "quantmerge_qrf_model v1")
        throw DataError("qrf model: unrecognized header");

    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line == "targets") break;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("qrf model: expected 'key = value'");
        auto trim = [](std::string s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    const auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("qrf model: missing field " + key);
        return it->second;
    };

    QRFConfig cfg;
    cfg.n_trees = static_cast<int>(csv::parse_int(need("n_trees"), "qrf model"));
    cfg.mtry = static_cast<int>(csv::parse_int(need("mtry"), "qrf model"));
    cfg.min_node_size = static_cast<int>(csv::parse_int(need("min_node_size"), "qrf model"));
    cfg.seed = static_cast<std::uint64_t>(csv::parse_uint64(need("seed"), "qrf model"));
    cfg.bootstrap = csv::parse_int(need("bootstrap"), "qrf model") != 0;
    const int feature_count = static_cast<int>(csv::parse_int(need("feature_count"), "qrf model"));
    const auto n_train = csv::parse_int(need("n_train"), "qrf model");

    std::vector<double> targets;
    targets.reserve(static_cast<std::size_t>(n_train));
    for (long long i = 0; i < n_train; ++i) {
        if (!std::getline(in, line)) throw DataError("qrf model: truncated targets");
        targets.push_back(csv::parse_double(line, "qrf model targets"));
    }

    std::vector<QRFTree> trees;
    trees.reserve(static_cast<std::size_t>(cfg.n_trees));
    for (int t = 0; t < cfg.n_trees; ++t) {
        if (!std::getline(in, line)) throw DataError("qrf model: missing tree " + std::to_string(t));
        long long idx = 0, n_nodes = 0, n_leaves = 0;
        if (std::sscanf(line.c_str(), "tree %lld %lld %lld", &idx, &n_nodes, &n_leaves) != 3 ||
            idx != t)
            throw DataError("qrf model: malformed tree header '" + line + "'");
        QRFTree tree;
        for (long long k = 0; k < n_nodes; ++k) {
            if (!std::getline(in, line)) throw DataError("qrf model: truncated tree");
            const auto f = csv::split(line);
            if (f.size() != 5) throw DataError("qrf model: malformed node row '" + line + "'");
            QRFNode nd;
            nd.feature = static_cast<int>(csv::parse_int(f[0], "qrf model node"));
            nd.threshold = csv::parse_double(f[1], "qrf model node");
            nd.left = static_cast<int>(csv::parse_int(f[2], "qrf model node"));
            nd.right = static_cast<int>(csv::parse_int(f[3], "qrf model node"));
            nd.leaf_id = static_cast<int>(csv::parse_int(f[4], "qrf model node"));
            tree.nodes.push_back(nd);
        }
        tree.leaf_members.resize(static_cast<std::size_t>(n_leaves));
        for (long long l = 0; l < n_leaves; ++l) {
            if (!std::getline(in, line)) throw DataError("qrf model: truncated leaf list");
            std::istringstream ls(line);
            std::string word;
            long long leaf_no = -1;
            if (!(ls >> word >> leaf_no) || word != "leaf" || leaf_no != l)
                throw DataError("qrf model: malformed leaf row '" + line + "'");
            std::uint32_t member;
            while (ls >> member)
                tree.leaf_members[static_cast<std::size_t>(l)].push_back(member);
            if (tree.leaf_members[static_cast<std::size_t>(l)].empty())
                throw DataError("qrf model: empty leaf in stored model");
        }
        trees.push_back(std::move(tree));
    }
    return QRFModel(cfg, feature_count, std::move(targets), std::move(trees));
}

inline void save_qrf(const std::string& path, const QRFModel& model) {
    csv::write_file(path, serialize_qrf(model));
}

inline QRFModel load_qrf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_qrf(ss.str());
}

}  // namespace quantmerge

#endif  // QUANTMERGE_QRF_HPP
