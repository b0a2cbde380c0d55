#ifndef QUANTMERGE_FEATURES_HPP
#define QUANTMERGE_FEATURES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/csv.hpp"
#include "quantmerge/data.hpp"
#include "quantmerge/errors.hpp"
#include "quantmerge/grid.hpp"
#include "quantmerge/rng.hpp"

// Builds the 19-predictor regression samples: the 4 nearest grid cells per
// product (values and great-circle distances, ascending), plus station
// longitude, latitude and elevation. Also the random fold assignment.

namespace quantmerge {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr int kFeatureCount = 19;

/// Great-circle distance in kilometers (haversine, mean Earth radius).
inline double haversine_km(double lon1, double lat1, double lon2, double lat2) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * deg;
    const double dlon = (lon2 - lon1) * deg;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) *
                         std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

struct NearestCell {
    int i_lon = 0;
    int j_lat = 0;
    double distance_km = 0.0;
};

namespace detail {

/// Ordering: ascending distance, ties by (j_lat, i_lon) index.
inline bool nearest_less(const NearestCell& a, const NearestCell& b) {
    if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
    if (a.j_lat != b.j_lat) return a.j_lat < b.j_lat;
    return a.i_lon < b.i_lon;
}

}  // namespace detail

/// The k grid cell centers closest to the station in great-circle distance,
/// ascending. Searches outward in index rings from the enclosing cell; a
/// ring is pruned only once a lower bound on its distance exceeds the
/// current k-th best, so the result matches an exhaustive scan.
inline std::vector<NearestCell> nearest_grid_points(double station_lon, double station_lat,
                                                    const GridSpec& spec, int k = 4) {
    spec.validate();
    if (k < 1) throw InvariantError("nearest_grid_points: k must be >= 1");
    if (static_cast<std::size_t>(k) > spec.cell_count())
        throw InvariantError("nearest_grid_points: k exceeds number of grid cells");

    const auto clampi = [](int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); };
    const int ci = clampi(static_cast<int>(std::lround(
                              (station_lon - spec.origin_longitude) / spec.cell_size)),
                          0, spec.n_lon - 1);
    const int cj = clampi(static_cast<int>(std::lround(
                              (station_lat - spec.origin_latitude) / spec.cell_size)),
                          0, spec.n_lat - 1);

    // Lower bound on the distance to any cell in ring r: the meridional
    // component alone, or the zonal component damped by the smallest
    // cosine of latitude over the grid span. Both are true lower bounds,
    // so pruning never drops a nearer cell.
    const double deg = std::numbers::pi / 180.0;
    double min_cos = 1.0;
    for (double lat : {spec.origin_latitude, spec.lat_at(spec.n_lat - 1), station_lat}) {
        if (std::fabs(lat) >= 90.0) min_cos = 0.0;
        else min_cos = std::min(min_cos, std::cos(lat * deg));
    }
    const auto ring_lower_bound_km = [&](int r) {
        const double off = (r - 1) * spec.cell_size;  // station may sit a cell off-center
        if (off <= 0.0) return 0.0;
        const double meridional = kEarthRadiusKm * off * deg;
        // sin is only monotone below 180 degrees of separation; past that the
        // zonal bound is void (only matters for near-global grids).
        const double zonal =
            (off * deg >= std::numbers::pi)
                ? 0.0
                : kEarthRadiusKm * 2.0 *
                      std::asin(std::min(1.0, min_cos * std::sin(off * deg / 2.0)));
        return std::min(meridional, zonal);
    };

    std::vector<NearestCell> best;
    best.reserve(static_cast<std::size_t>(k) + 8);
    const auto consider = [&](int i, int j) {
        NearestCell c{i, j, haversine_km(station_lon, station_lat, spec.lon_at(i), spec.lat_at(j))};
        best.push_back(c);
        std::push_heap(best.begin(), best.end(), detail::nearest_less);
        if (best.size() > static_cast<std::size_t>(k)) {
            std::pop_heap(best.begin(), best.end(), detail::nearest_less);
            best.pop_back();
        }
    };

    const int max_ring = std::max(std::max(ci, spec.n_lon - 1 - ci),
                                  std::max(cj, spec.n_lat - 1 - cj));
    for (int r = 0; r <= max_ring; ++r) {
        if (best.size() == static_cast<std::size_t>(k) &&
            ring_lower_bound_km(r) > best.front().distance_km)
            break;
        if (r == 0) {
            consider(ci, cj);
            continue;
        }
        const int ilo = ci - r, ihi = ci + r, jlo = cj - r, jhi = cj + r;
        for (int i = ilo; i <= ihi; ++i) {
            if (i < 0 || i >= spec.n_lon) continue;
            if (jlo >= 0) consider(i, jlo);
            if (jhi < spec.n_lat) consider(i, jhi);
        }
        for (int j = jlo + 1; j <= jhi - 1; ++j) {
            if (j < 0 || j >= spec.n_lat) continue;
            if (ilo >= 0) consider(ilo, j);
            if (ihi < spec.n_lon) consider(ihi, j);
        }
    }

    std::sort(best.begin(), best.end(), detail::nearest_less);
    return best;
}

/// The 19 predictors in fixed order: PERSIANN values 1-4, IMERG values 1-4,
/// PERSIANN distances 1-4, IMERG distances 1-4, longitude, latitude,
/// elevation.
struct FeatureVector {
    std::array<double, 4> persiann_values{};
    std::array<double, 4> imerg_values{};
    std::array<double, 4> persiann_distances{};
    std::array<double, 4> imerg_distances{};
    double longitude = 0.0;
    double latitude = 0.0;
    double elevation = 0.0;

    std::array<double, kFeatureCount> to_array() const {
        return {persiann_values[0],    persiann_values[1],    persiann_values[2],
                persiann_values[3],    imerg_values[0],       imerg_values[1],
                imerg_values[2],       imerg_values[3],       persiann_distances[0],
                persiann_distances[1], persiann_distances[2], persiann_distances[3],
                imerg_distances[0],    imerg_distances[1],    imerg_distances[2],
                imerg_distances[3],    longitude,             latitude,
                elevation};
    }
};

inline const std::vector<std::string>& feature_column_names() {
    static const std::vector<std::string> names = {
        "persiann_value_1",    "persiann_value_2",    "persiann_value_3",    "persiann_value_4",
        "imerg_value_1",       "imerg_value_2",       "imerg_value_3",       "imerg_value_4",
        "persiann_distance_1", "persiann_distance_2", "persiann_distance_3", "persiann_distance_4",
        "imerg_distance_1",    "imerg_distance_2",    "imerg_distance_3",    "imerg_distance_4",
        "longitude",           "latitude",            "elevation"};
    return names;
}

struct Sample {
    FeatureVector features;
    double target = 0.0;  // mm/day, >= 0
    std::string station_id;
    Date date;
};

struct BuildResult {
    std::vector<Sample> samples;
    std::size_t dropped = 0;  // station-days with a missing predictor
};

/// Joins station records with the (already regridded) product fields by
/// date. A station-day whose 4 nearest cells are not all present in both
/// products is dropped and counted.
inline BuildResult build_samples(const std::vector<StationRecord>& stations,
                                 const std::vector<GridField>& persiann_fields,
                                 const std::vector<GridField>& imerg_fields) {
    if (stations.empty()) throw DataError("build_samples: no station records");
    if (persiann_fields.empty() || imerg_fields.empty())
        throw DataError("build_samples: empty product fields");

    const GridSpec& pspec = persiann_fields.front().spec;
    const GridSpec& ispec = imerg_fields.front().spec;
    std::map<Date, const GridField*> persiann_by_date, imerg_by_date;
    for (const auto& f : persiann_fields) {
        if (!(f.spec == pspec))
            throw DataError("build_samples: inconsistent PERSIANN grid specs");
        persiann_by_date[f.date] = &f;
    }
    for (const auto& f : imerg_fields) {
        if (!(f.spec == ispec)) throw DataError("build_samples: inconsistent IMERG grid specs");
        imerg_by_date[f.date] = &f;
    }

    // Nearest cells per station are date-independent; cache by location.
    std::map<std::pair<double, double>, std::pair<std::vector<NearestCell>, std::vector<NearestCell>>>
        nearest_cache;
    const auto nearest_for = [&](const StationRecord& r)
        -> const std::pair<std::vector<NearestCell>, std::vector<NearestCell>>& {
        auto key = std::make_pair(r.longitude, r.latitude);
        auto it = nearest_cache.find(key);
        if (it == nearest_cache.end()) {
            it = nearest_cache
                     .emplace(key, std::make_pair(
                                       nearest_grid_points(r.longitude, r.latitude, pspec, 4),
                                       nearest_grid_points(r.longitude, r.latitude, ispec, 4)))
                     .first;
        }
        return it->second;
    };

    BuildResult result;
    bool any_date_overlap = false;
    for (const auto& r : stations) {
        auto pit = persiann_by_date.find(r.date);
        auto iit = imerg_by_date.find(r.date);
        if (pit == persiann_by_date.end() || iit == imerg_by_date.end()) {
            ++result.dropped;
            continue;
        }
        any_date_overlap = true;
        const auto& [pn, in] = nearest_for(r);

        Sample s;
        bool missing = false;
        for (int m = 0; m < 4; ++m) {
            const double pv = pit->second->at(pn[m].i_lon, pn[m].j_lat);
            const double iv = iit->second->at(in[m].i_lon, in[m].j_lat);
            if (is_missing(pv) || is_missing(iv)) {
                missing = true;
                break;
            }
            s.features.persiann_values[m] = pv;
            s.features.imerg_values[m] = iv;
            s.features.persiann_distances[m] = pn[m].distance_km;
            s.features.imerg_distances[m] = in[m].distance_km;
        }
        if (missing) {
            ++result.dropped;
            continue;
        }
        s.features.longitude = r.longitude;
        s.features.latitude = r.latitude;
        s.features.elevation = r.elevation;
        s.target = r.precipitation;
        s.station_id = r.station_id;
        s.date = r.date;
        result.samples.push_back(std::move(s));
    }
    if (!any_date_overlap)
        throw DataError("build_samples: no overlapping dates between stations and fields");
    return result;
}

struct FoldAssignment {
    std::vector<int> fold_of;  // per sample, in {0 .. n_folds-1}
    int n_folds = 0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> indices_of(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] == fold) out.push_back(i);
        return out;
    }
};

/// Sizes of a partition of n into k nearly equal folds (first n % k folds
/// get the extra sample). Usable without materializing any data.
inline std::vector<std::size_t> fold_sizes(std::size_t n_samples, int n_folds) {
    if (n_folds < 1) throw InvariantError("fold_sizes: n_folds must be >= 1");
    if (n_samples < static_cast<std::size_t>(n_folds))
        throw InvariantError("fold_sizes: fewer samples than folds");
    std::vector<std::size_t> sizes(n_folds, n_samples / n_folds);
    for (std::size_t i = 0; i < n_samples % n_folds; ++i) ++sizes[i];
    return sizes;
}

/// Uniform random permutation cut into contiguous blocks.
inline FoldAssignment split_folds(std::size_t n_samples, int n_folds, std::uint64_t seed) {
    const auto sizes = fold_sizes(n_samples, n_folds);
    std::vector<std::uint32_t> perm(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) perm[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(seed, "folds"));
    rng.shuffle(perm);

    FoldAssignment fa;
    fa.fold_of.assign(n_samples, -1);
    fa.n_folds = n_folds;
    fa.seed = seed;
    std::size_t pos = 0;
    for (int f = 0; f < n_folds; ++f)
        for (std::size_t i = 0; i < sizes[f]; ++i) fa.fold_of[perm[pos++]] = f;
    return fa;
}

// ---- sample table interchange ----

inline const std::vector<std::string>& sample_table_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = feature_column_names();
        c.insert(c.end(), {"target", "station_id", "date", "fold_index"});
        return c;
    }();
    return cols;
}

inline std::string serialize_samples(const std::vector<Sample>& samples,
                                     const FoldAssignment& folds) {
    if (folds.fold_of.size() != samples.size())
        throw InvariantError("serialize_samples: fold assignment size mismatch");
    std::ostringstream out;
    const auto& cols = sample_table_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto row = samples[i].features.to_array();
        for (double v : row) out << csv::format_double(v) << ',';
        out << csv::format_double(samples[i].target) << ',' << samples[i].station_id << ','
            << samples[i].date.to_string() << ',' << folds.fold_of[i] << '\n';
    }
    return out.str();
}

struct SampleTable {
    std::vector<Sample> samples;
    FoldAssignment folds;
};

inline SampleTable load_samples(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": missing header row");
    csv::expect_header(csv::split(lines[0]), sample_table_columns(), path);

    SampleTable table;
    int max_fold = -1;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string context = path + ":" + std::to_string(ln + 1);
        const auto f = csv::split(lines[ln]);
        if (f.size() != sample_table_columns().size())
            throw DataError(context + ": expected " +
                            std::to_string(sample_table_columns().size()) + " fields, found " +
                            std::to_string(f.size()));
        Sample s;
        std::array<double, kFeatureCount> row;
        for (int c = 0; c < kFeatureCount; ++c) row[c] = csv::parse_double(f[c], context);
        for (int m = 0; m < 4; ++m) {
            s.features.persiann_values[m] = row[m];
            s.features.imerg_values[m] = row[4 + m];
            s.features.persiann_distances[m] = row[8 + m];
            s.features.imerg_distances[m] = row[12 + m];
        }
        s.features.longitude = row[16];
        s.features.latitude = row[17];
        s.features.elevation = row[18];
        s.target = csv::parse_double(f[19], context);
        if (s.target < 0.0) throw DataError(context + ": negative target");
        s.station_id = f[20];
        s.date = Date::parse(f[21], context);
        const long long fold = csv::parse_int(f[22], context);
        if (fold < 0) throw DataError(context + ": negative fold_index");
        table.samples.push_back(std::move(s));
        table.folds.fold_of.push_back(static_cast<int>(fold));
        max_fold = std::max(max_fold, static_cast<int>(fold));
    }
    table.folds.n_folds = max_fold + 1;
    return table;
}

}  // namespace quantmerge

#endif  // QUANTMERGE_FEATURES_HPP
