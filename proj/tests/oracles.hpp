// Test-only brute-force oracles, kept independent of the library's search
// and accumulation shortcuts. Shared by the unit suites and the acceptance
// binary.
#ifndef QUANTMERGE_TESTS_ORACLES_HPP
#define QUANTMERGE_TESTS_ORACLES_HPP

#include <algorithm>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "quantmerge/features.hpp"
#include "quantmerge/gbdt.hpp"
#include "quantmerge/qrf.hpp"

namespace quantmerge::oracles {

/// Exhaustive nearest-cell search: distances to every cell, sorted by
/// (distance, j_lat, i_lon).
inline std::vector<NearestCell> brute_force_nearest(double lon, double lat,
                                                    const GridSpec& spec, int k) {
    std::vector<NearestCell> all;
    for (int j = 0; j < spec.n_lat; ++j)
        for (int i = 0; i < spec.n_lon; ++i)
            all.push_back({i, j, haversine_km(lon, lat, spec.lon_at(i), spec.lat_at(j))});
    std::sort(all.begin(), all.end(), [](const NearestCell& a, const NearestCell& b) {
        if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
        if (a.j_lat != b.j_lat) return a.j_lat < b.j_lat;
        return a.i_lon < b.i_lon;
    });
    all.resize(static_cast<std::size_t>(k));
    return all;
}

/// Exhaustive split oracle: enumerates every (feature, bin) pair directly
/// and evaluates the unit-curvature gain on per-bin aggregates. Aggregation
/// follows the contract's association (per-bin sums in row order, then bins
/// ascending), so agreement with the library is exact.
inline std::optional<SplitCandidate> exhaustive_split(const BinnedMatrix& binned,
                                                      const FeatureBinning& binning,
                                                      std::span<const std::uint32_t> node,
                                                      std::span<const double> g,
                                                      std::span<const double> w, int min_data) {
    if (node.size() < 2 * static_cast<std::size_t>(min_data)) return std::nullopt;
    double gp = 0, wp = 0;
    for (auto idx : node) {
        gp += g[idx] * w[idx];
        wp += w[idx];
    }
    if (!(wp > 0)) return std::nullopt;
    const double parent_term = gp * gp / wp;

    SplitCandidate best;
    for (int f = 0; f < binning.feature_count(); ++f) {
        const int nb = binning.bin_count(f);
        std::vector<double> bin_grad(nb, 0.0), bin_weight(nb, 0.0);
        std::vector<std::size_t> bin_count(nb, 0);
        for (auto idx : node) {
            const auto b = binned.at(idx, static_cast<std::size_t>(f));
            bin_grad[b] += g[idx] * w[idx];
            bin_weight[b] += w[idx];
            ++bin_count[b];
        }
        for (int s = 0; s < nb - 1; ++s) {
            double gl = 0, wl = 0;
            std::size_t nl = 0;
            for (int b = 0; b <= s; ++b) {
                gl += bin_grad[b];
                wl += bin_weight[b];
                nl += bin_count[b];
            }
            const std::size_t nr = node.size() - nl;
            if (nl < static_cast<std::size_t>(min_data) || nr < static_cast<std::size_t>(min_data))
                continue;
            const double gr = gp - gl;
            const double wr = wp - wl;
            if (!(wl > 0) || !(wr > 0)) continue;
            const double gain = gl * gl / wl + gr * gr / wr - parent_term;
            if (gain > best.gain) best = SplitCandidate{f, s, binning.boundary(f, s), gain};
        }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
}

/// Exhaustive recomputation of QRF weights from the stored tree structure:
/// routes the query and every training row itself, then averages uniform
/// leaf weights over trees.
inline std::vector<double> qrf_weights_recomputed(const QRFModel& model,
                                                  const DataMatrix& train_x,
                                                  std::span<const double> x) {
    const std::size_t n = model.targets().size();
    std::vector<double> w(n, 0.0);
    for (const auto& tree : model.trees()) {
        const auto route = [&](std::span<const double> row) {
            int node = 0;
            while (tree.nodes[node].feature >= 0) {
                const auto& nd = tree.nodes[node];
                node = (row[static_cast<std::size_t>(nd.feature)] <= nd.threshold) ? nd.left
                                                                                   : nd.right;
            }
            return node;
        };
        const int query_node = route(x);
        std::vector<std::uint32_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (route(train_x.row(i)) == query_node)
                members.push_back(static_cast<std::uint32_t>(i));
        const double inv = 1.0 / static_cast<double>(members.size());
        for (auto idx : members) w[idx] += inv;
    }
    const double inv_trees = 1.0 / static_cast<double>(model.trees().size());
    for (auto& v : w) v *= inv_trees;
    return w;
}

/// Quantile from per-index weights: sort by (value, index), sum each run of
/// equal values first, then scan groups for cumulative weight >= tau.
inline double quantile_from_weights(std::span<const double> weights,
                                    std::span<const double> targets, double tau) {
    std::vector<std::pair<double, double>> vw;
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (weights[i] > 0) vw.emplace_back(targets[i], weights[i]);
    std::stable_sort(vw.begin(), vw.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double cum = 0;
    std::size_t i = 0;
    while (i < vw.size()) {
        double group = vw[i].second;
        std::size_t j = i + 1;
        while (j < vw.size() && vw[j].first == vw[i].first) group += vw[j++].second;
        cum += group;
        if (cum >= tau) return vw[i].first;
        i = j;
    }
    return vw.back().first;
}

}  // namespace quantmerge::oracles

#endif  // QUANTMERGE_TESTS_ORACLES_HPP
