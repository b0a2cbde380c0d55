#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "quantmerge/gbdt.hpp"
#include "quantmerge/rng.hpp"

using namespace quantmerge;
using oracles::exhaustive_split;

namespace {

DataMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    DataMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
    return m;
}

}  // namespace

TEST_CASE("config validation") {
    GBDTConfig c;
    c.max_depth = 6;
    c.num_leaves = 65;
    CHECK_THROWS_AS(c.validate(), InvariantError);
    c.num_leaves = 64;
    CHECK_NOTHROW(c.validate());
    c.goss = GossConfig{0.6, 0.6};
    CHECK_THROWS_AS(c.validate(), InvariantError);
    c.goss = GossConfig{0.2, 0.1};
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("feature binning maps values consistently with boundaries") {
    Rng rng(1);
    DataMatrix m(500, 2);
    for (std::size_t r = 0; r < 500; ++r) {
        m.at(r, 0) = std::floor(rng.uniform() * 20);  // heavy ties
        m.at(r, 1) = rng.normal();
    }
    const auto binning = FeatureBinning::build(m, 16);
    for (int f = 0; f < 2; ++f) {
        REQUIRE(binning.bin_count(f) >= 2);
        REQUIRE(binning.bin_count(f) <= 16);
        for (int rep = 0; rep < 200; ++rep) {
            const double v = rng.normal() * 10;
            const int b = binning.bin_of(f, v);
            if (b < binning.bin_count(f) - 1) CHECK(v <= binning.boundary(f, b));
            if (b > 0) CHECK(v > binning.boundary(f, b - 1));
        }
    }
}

TEST_CASE("histogram split: all-zero gradients give no split") {
    DataMatrix m(20, 1);
    for (std::size_t r = 0; r < 20; ++r) m.at(r, 0) = static_cast<double>(r);
    const auto binning = FeatureBinning::build(m, 8);
    const auto binned = BinnedMatrix::build(m, binning);
    std::vector<std::uint32_t> node(20);
    for (std::uint32_t i = 0; i < 20; ++i) node[i] = i;
    std::vector<double> g(20, 0.0), w(20, 1.0);
    CHECK_FALSE(best_histogram_split(binned, binning, node, g, w, 1).has_value());
}

TEST_CASE("histogram split: perfectly separating feature splits at the boundary") {
    DataMatrix m(20, 1);
    std::vector<double> g(20), w(20, 1.0);
    for (std::size_t r = 0; r < 20; ++r) {
        m.at(r, 0) = static_cast<double>(r);
        g[r] = r < 10 ? -1.0 : 1.0;
    }
    const auto binning = FeatureBinning::build(m, 20);
    const auto binned = BinnedMatrix::build(m, binning);
    std::vector<std::uint32_t> node(20);
    for (std::uint32_t i = 0; i < 20; ++i) node[i] = i;
    const auto split = best_histogram_split(binned, binning, node, g, w, 1);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(binning.bin_of(0, 9.0) <= split->bin);
    CHECK(binning.bin_of(0, 10.0) > split->bin);
    CHECK(split->gain == Catch::Approx(20.0).margin(1e-12));  // 100/10 + 100/10 - 0
}

TEST_CASE("histogram split equals exhaustive enumeration on random nodes") {
    Rng rng(99);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 8 + rng.below(57);  // up to 64
        DataMatrix m(n, 2);
        std::vector<double> g(n), w(n);
        for (std::size_t r = 0; r < n; ++r) {
            m.at(r, 0) = std::floor(rng.uniform() * 8);
            m.at(r, 1) = rng.normal();
            g[r] = rng.uniform() < 0.3 ? -0.7 : 0.3;  // pinball-like two-point gradients
            w[r] = rng.uniform() < 0.5 ? 1.0 : 4.0;
        }
        const auto binning = FeatureBinning::build(m, 8);
        const auto binned = BinnedMatrix::build(m, binning);
        std::vector<std::uint32_t> node(n);
        for (std::uint32_t i = 0; i < n; ++i) node[i] = i;
        const int min_data = 1 + static_cast<int>(rng.below(4));

        const auto fast = best_histogram_split(binned, binning, node, g, w, min_data);
        const auto slow = exhaustive_split(binned, binning, node, g, w, min_data);
        REQUIRE(fast.has_value() == slow.has_value());
        if (fast) {
            CHECK(fast->feature == slow->feature);
            CHECK(fast->bin == slow->bin);
            CHECK(fast->gain == slow->gain);
            CHECK(fast->threshold == slow->threshold);
        }
    }
}

TEST_CASE("goss: keep-all degenerate case") {
    std::vector<double> g{1, -2, 3, -4};
    const auto s = goss_sample(g, 0.999, 0.001, 7);  // ceil(0.999*4) = 4: keeps everything
    REQUIRE(s.indices.size() == 4);
    for (double w : s.weights) CHECK(w == 1.0);
}

TEST_CASE("goss: n=10, a=b=0.2 keeps 2 top rows and 2 rest rows at weight 4") {
    std::vector<double> g{0.1, -0.9, 0.2, 0.8, -0.3, 0.05, -0.15, 0.4, -0.6, 0.25};
    const auto s = goss_sample(g, 0.2, 0.2, 123);
    REQUIRE(s.indices.size() == 4);
    std::size_t top_count = 0, rest_count = 0;
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
        if (s.weights[i] == 1.0) {
            ++top_count;
            CHECK((s.indices[i] == 1 || s.indices[i] == 3));  // |g| = 0.9, 0.8
        } else {
            ++rest_count;
            CHECK(s.weights[i] == Catch::Approx(4.0));  // (1 - 0.2) / 0.2
        }
    }
    CHECK(top_count == 2);
    CHECK(rest_count == 2);
    CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
}

TEST_CASE("goss: equal gradients break ties by index") {
    std::vector<double> g(10, 0.5);
    const auto s = goss_sample(g, 0.2, 0.2, 1);
    std::set<std::uint32_t> tops;
    for (std::size_t i = 0; i < s.indices.size(); ++i)
        if (s.weights[i] == 1.0) tops.insert(s.indices[i]);
    CHECK(tops == std::set<std::uint32_t>{0, 1});
}

TEST_CASE("goss: weighted gradient sum is unbiased over seeds") {
    Rng rng(5);
    const std::size_t n = 400;
    std::vector<double> g(n);
    for (auto& v : g) v = rng.normal();
    double full = 0;
    for (double v : g) full += v;

    double mean_weighted = 0;
    const int n_seeds = 200;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto s = goss_sample(g, 0.2, 0.2, static_cast<std::uint64_t>(seed));
        double acc = 0;
        for (std::size_t i = 0; i < s.indices.size(); ++i) acc += g[s.indices[i]] * s.weights[i];
        mean_weighted += acc;
    }
    mean_weighted /= n_seeds;
    // |full| is around sqrt(n)=20 for standard normal draws; 5% relative slack
    CHECK(std::fabs(mean_weighted - full) <= 0.05 * std::max(1.0, std::fabs(full)) + 1.0);
}

TEST_CASE("goss: empty gradients rejected") {
    std::vector<double> g;
    CHECK_THROWS_AS(goss_sample(g, 0.2, 0.2, 1), InvariantError);
}

TEST_CASE("fit: constant target is reproduced exactly") {
    Rng rng(3);
    Dataset train;
    train.x = DataMatrix(200, 2);
    for (auto& v : train.x.values) v = rng.uniform();
    train.y.assign(200, 7.25);
    for (double tau : {0.5, 0.9, 0.999}) {
        GBDTConfig cfg;
        cfg.tau = QuantileLevel(tau);
        cfg.num_iterations = 5;
        cfg.min_data_in_leaf = 5;
        const auto model = fit_quantile_gbdt(train, nullptr, cfg);
        CHECK(model.base_score == 7.25);
        for (int r = 0; r < 10; ++r) {
            const std::array<double, 2> x{rng.uniform(), rng.uniform()};
            CHECK(model.predict(x) == 7.25);
        }
        CHECK(model.train_score_history.back() == 0.0);
    }
}

TEST_CASE("fit: feature-independent target recovers the empirical quantile") {
    // without signal, any split fits noise; early stopping on a fresh fold
    // keeps the model at (or near) the base score = empirical quantile
    Rng rng(11);
    const std::size_t n = 10000;
    Dataset train, valid;
    train.x = DataMatrix(n, 3);
    for (auto& v : train.x.values) v = rng.uniform();
    train.y.resize(n);
    for (auto& v : train.y) v = -std::log(1.0 - rng.uniform());  // Exp(1), independent of x
    valid.x = DataMatrix(n / 4, 3);
    for (auto& v : valid.x.values) v = rng.uniform();
    valid.y.resize(n / 4);
    for (auto& v : valid.y) v = -std::log(1.0 - rng.uniform());

    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.9);
    cfg.num_iterations = 100;
    cfg.num_leaves = 20;
    cfg.min_data_in_leaf = 1000;
    cfg.learning_rate = 0.02;
    cfg.early_stopping_round = 20;
    const auto model = fit_quantile_gbdt(train, &valid, cfg);

    std::vector<double> sorted = train.y;
    std::sort(sorted.begin(), sorted.end());
    const double q90 = sorted[static_cast<std::size_t>(std::ceil(0.9 * n)) - 1];
    CHECK(model.base_score == q90);

    double max_err = 0;
    for (int r = 0; r < 100; ++r) {
        const std::array<double, 3> x{rng.uniform(), rng.uniform(), rng.uniform()};
        max_err = std::max(max_err, std::fabs(model.predict(x) - q90));
    }
    CHECK(max_err <= 0.02 * std::fabs(q90) + 0.01);
}

TEST_CASE("fit: 1-D step data recovers both conditional medians") {
    Rng rng(17);
    const std::size_t n = 10000;
    Dataset train;
    train.x = DataMatrix(n, 1);
    train.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform() * 2 - 1;
        train.x.at(i, 0) = x;
        train.y[i] = (x < 0) ? rng.uniform() : 10.0 + rng.uniform();
    }
    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.5);
    cfg.num_iterations = 60;
    cfg.min_data_in_leaf = 500;
    const auto model = fit_quantile_gbdt(train, nullptr, cfg);
    for (double x : {-0.9, -0.5, -0.1}) {
        const std::array<double, 1> q{x};
        CHECK(std::fabs(model.predict(q) - 0.5) < 0.1);
    }
    for (double x : {0.1, 0.5, 0.9}) {
        const std::array<double, 1> q{x};
        CHECK(std::fabs(model.predict(q) - 10.5) < 0.1);
    }
}

TEST_CASE("fit: training loss never increases across rounds") {
    Rng rng(23);
    const std::size_t n = 2000;
    Dataset train;
    train.x = DataMatrix(n, 4);
    train.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 4; ++c) train.x.at(i, c) = rng.normal();
        train.y[i] = std::max(0.0, train.x.at(i, 0) * 2 + rng.normal());
    }
    for (double tau : {0.5, 0.95}) {
        GBDTConfig cfg;
        cfg.tau = QuantileLevel(tau);
        cfg.num_iterations = 40;
        cfg.min_data_in_leaf = 10;
        cfg.learning_rate = 0.3;
        const auto model = fit_quantile_gbdt(train, nullptr, cfg);
        for (std::size_t r = 1; r < model.train_score_history.size(); ++r)
            CHECK(model.train_score_history[r] <= model.train_score_history[r - 1] + 1e-12);
    }
}

TEST_CASE("fit: leaf constraints hold on every tree") {
    Rng rng(31);
    const std::size_t n = 3000;
    Dataset train;
    train.x = DataMatrix(n, 5);
    train.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 5; ++c) train.x.at(i, c) = rng.normal();
        train.y[i] = std::fabs(train.x.at(i, 1)) + 0.3 * rng.normal();
    }
    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.7);
    cfg.num_iterations = 15;
    cfg.max_depth = 4;
    cfg.num_leaves = 9;
    cfg.min_data_in_leaf = 40;
    const auto model = fit_quantile_gbdt(train, nullptr, cfg);
    REQUIRE(!model.trees.empty());
    for (const auto& tree : model.trees) {
        CHECK(tree.leaf_count <= cfg.num_leaves);
        CHECK(tree.depth <= cfg.max_depth);
        // count rows reaching each leaf; every leaf must satisfy min_data
        std::map<const TreeNode*, std::size_t> leaf_counts;
        for (std::size_t i = 0; i < n; ++i) {
            int node = 0;
            while (tree.nodes[node].feature >= 0) {
                const auto& nd = tree.nodes[node];
                node = (train.x.at(i, static_cast<std::size_t>(nd.feature)) <= nd.threshold)
                           ? nd.left
                           : nd.right;
            }
            ++leaf_counts[&tree.nodes[node]];
        }
        for (const auto& [leaf, count] : leaf_counts)
            CHECK(count >= static_cast<std::size_t>(cfg.min_data_in_leaf));
    }
}

TEST_CASE("fit: early stopping tracks the validation minimum") {
    Rng rng(41);
    const std::size_t n = 3000;
    Dataset train, valid;
    train.x = DataMatrix(n, 3);
    train.y.resize(n);
    valid.x = DataMatrix(n / 2, 3);
    valid.y.resize(n / 2);
    auto fill = [&](Dataset& d) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) d.x.at(i, c) = rng.normal();
            d.y[i] = std::max(0.0, d.x.at(i, 0) + 2.0 * rng.normal());  // noisy
        }
    };
    fill(train);
    fill(valid);

    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.8);
    cfg.num_iterations = 200;
    cfg.early_stopping_round = 10;
    cfg.min_data_in_leaf = 10;
    cfg.learning_rate = 0.3;  // encourages overfitting so stopping triggers
    const auto model = fit_quantile_gbdt(train, &valid, cfg);

    const auto& h = model.valid_score_history;
    REQUIRE(!h.empty());
    const double best = h[static_cast<std::size_t>(model.best_iteration)];
    for (double s : h) CHECK(best <= s + 1e-15);
    if (static_cast<int>(model.trees.size()) < cfg.num_iterations) {
        CHECK(static_cast<int>(model.trees.size()) ==
              model.best_iteration + cfg.early_stopping_round);
    }
    CHECK_THROWS_AS(fit_quantile_gbdt(train, nullptr, cfg), InvariantError);
}

TEST_CASE("fit is deterministic") {
    Rng rng(53);
    Dataset train;
    train.x = DataMatrix(500, 3);
    train.y.resize(500);
    for (std::size_t i = 0; i < 500; ++i) {
        for (std::size_t c = 0; c < 3; ++c) train.x.at(i, c) = rng.normal();
        train.y[i] = std::max(0.0, train.x.at(i, 2) + rng.normal());
    }
    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.9);
    cfg.num_iterations = 20;
    cfg.min_data_in_leaf = 5;
    cfg.goss = GossConfig{0.3, 0.3};
    cfg.seed = 99;
    const auto a = fit_quantile_gbdt(train, nullptr, cfg);
    const auto b = fit_quantile_gbdt(train, nullptr, cfg);
    CHECK(serialize_gbdt(a) == serialize_gbdt(b));

    GBDTConfig other = cfg;
    other.seed = 100;
    const auto c = fit_quantile_gbdt(train, nullptr, other);
    CHECK(serialize_gbdt(a) != serialize_gbdt(c));  // GOSS must respond to the seed
}

TEST_CASE("predict_raw: base-only and hand-built trees") {
    GBDTModel model;
    model.base_score = 2.5;
    model.feature_count = 1;
    model.best_iteration = 0;
    const std::array<double, 1> x{0.0};
    CHECK(predict_raw(model, x) == 2.5);

    Tree zero_tree;
    zero_tree.nodes.push_back(TreeNode{});  // single all-zero leaf
    zero_tree.leaf_count = 1;
    model.trees.push_back(zero_tree);
    model.best_iteration = 1;
    CHECK(predict_raw(model, x) == 2.5);

    // hand-built 2-leaf tree on one feature: x <= 1.5 -> -1, else +2
    Tree stump;
    stump.nodes.push_back(TreeNode{0, 1.5, 1, 2, 0.0});
    stump.nodes.push_back(TreeNode{-1, 0.0, -1, -1, -1.0});
    stump.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 2.0});
    stump.leaf_count = 2;
    model.trees.push_back(stump);
    model.best_iteration = 2;
    model.config.learning_rate = 0.1;
    const std::array<double, 1> left{1.0}, right{3.0};
    CHECK(predict_raw(model, left) == Catch::Approx(2.5 + 0.1 * -1.0));
    CHECK(predict_raw(model, right) == Catch::Approx(2.5 + 0.1 * 2.0));

    const std::array<double, 2> wrong{1.0, 2.0};
    CHECK_THROWS_AS(predict_raw(model, wrong), InvariantError);
}

TEST_CASE("serialization round-trips bit-identical predictions") {
    Rng rng(61);
    Dataset train;
    train.x = DataMatrix(400, 4);
    train.y.resize(400);
    for (std::size_t i = 0; i < 400; ++i) {
        for (std::size_t c = 0; c < 4; ++c) train.x.at(i, c) = rng.normal() * 3;
        train.y[i] = std::max(0.0, train.x.at(i, 0) - train.x.at(i, 3) + rng.normal());
    }
    GBDTConfig cfg;
    cfg.tau = QuantileLevel(0.97);
    cfg.num_iterations = 25;
    cfg.min_data_in_leaf = 5;
    const auto model = fit_quantile_gbdt(train, nullptr, cfg);
    const auto restored = parse_gbdt(serialize_gbdt(model));
    CHECK(restored.base_score == model.base_score);
    CHECK(restored.best_iteration == model.best_iteration);
    for (int rep = 0; rep < 200; ++rep) {
        std::array<double, 4> x;
        for (auto& v : x) v = rng.normal() * 4;
        CHECK(restored.predict(x) == model.predict(x));
    }
}
