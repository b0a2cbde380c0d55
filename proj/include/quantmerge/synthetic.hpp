#ifndef QUANTMERGE_SYNTHETIC_HPP
#define QUANTMERGE_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/data.hpp"
#include "quantmerge/grid.hpp"
#include "quantmerge/rng.hpp"
#include "quantmerge/scoring.hpp"

// Synthetic intermittent-precipitation generator. Station precipitation is
// a zero-inflated lognormal whose log-location follows a smooth daily
// "storm" field plus a fixed spatial pattern; the two gridded products are
// noisy transforms of the same storm field sampled at their cell centers.
// Because positives are drawn through the inverse normal CDF, the returned
// oracle's conditional quantiles are exact by construction.

namespace quantmerge {

struct SyntheticConfig {
    int n_stations = 100;
    int n_days = 50;
    GridSpec persiann_spec{-100.0, 35.0, 0.25, 13, 9};
    GridSpec imerg_spec{-100.2, 34.8, 0.1, 37, 27};
    double zero_probability = 0.72;
    // Positive part: log y ~ Normal(mu, sigma^2) with
    // mu = mu_offset + mu_scale * log(storm) + location_gain * pattern(lon, lat)
    //      + elevation_gain * (elevation_m - 500) / 1000.
    double lognormal_sigma = 1.0;
    double mu_offset = 0.5;
    double mu_scale = 1.0;
    double location_gain = 0.3;
    double elevation_gain = 0.0;
    double persiann_noise = 0.2;  // multiplicative lognormal noise, corrected product
    double imerg_noise = 0.5;     // heavier noise, uncorrected product
    double imerg_exponent = 0.9;  // uncorrected-product bias
    Date start_date{2014, 1, 1};
    std::uint64_t seed = 1;

    void validate() const {
        if (n_stations <= 0 || n_days <= 0)
            throw InvariantError("SyntheticConfig: counts must be positive");
        if (!(zero_probability >= 0.0 && zero_probability <= 1.0))
            throw InvariantError("SyntheticConfig: zero_probability must be in [0, 1]");
        if (!(lognormal_sigma > 0.0))
            throw InvariantError("SyntheticConfig: lognormal_sigma must be > 0");
        persiann_spec.validate();
        imerg_spec.validate();
    }
};

/// Exact conditional tau-quantile of the generating mixture at any
/// station-day: 0 for tau <= zero_probability, otherwise the lognormal
/// quantile at the renormalized level.
class TruthOracle {
public:
    TruthOracle(double zero_probability, double sigma, std::vector<std::string> station_ids,
                Date start_date, int n_days, std::vector<double> mu)
        : zero_probability_(zero_probability),
          sigma_(sigma),
          station_ids_(std::move(station_ids)),
          start_date_(start_date),
          n_days_(n_days),
          mu_(std::move(mu)) {
        for (std::size_t s = 0; s < station_ids_.size(); ++s) station_index_[station_ids_[s]] = s;
        Date d = start_date_;
        for (int k = 0; k < n_days_; ++k) {
            date_index_[d] = k;
            d = d.next();
        }
    }

    double quantile_by_index(std::size_t station, int day, QuantileLevel tau) const {
        const double t = tau.value();
        if (t <= zero_probability_) return 0.0;
        const double renorm = (t - zero_probability_) / (1.0 - zero_probability_);
        return std::exp(mu_[station * n_days_ + day] + sigma_ * Rng::normal_quantile(renorm));
    }

    double quantile(const std::string& station_id, Date date, QuantileLevel tau) const {
        return quantile_by_index(station_of(station_id), day_of(date), tau);
    }

    double mu_by_index(std::size_t station, int day) const { return mu_[station * n_days_ + day]; }

    std::size_t station_of(const std::string& station_id) const {
        auto it = station_index_.find(station_id);
        if (it == station_index_.end())
            throw InvariantError("TruthOracle: unknown station " + station_id);
        return it->second;
    }
    int day_of(Date date) const {
        auto it = date_index_.find(date);
        if (it == date_index_.end())
            throw InvariantError("TruthOracle: date outside generated range");
        return it->second;
    }

    double zero_probability() const { return zero_probability_; }
    double sigma() const { return sigma_; }
    const std::vector<std::string>& station_ids() const { return station_ids_; }
    Date start_date() const { return start_date_; }
    int n_days() const { return n_days_; }

private:
    double zero_probability_;
    double sigma_;
    std::vector<std::string> station_ids_;
    Date start_date_;
    int n_days_;
    std::vector<double> mu_;  // station-major [station * n_days + day]
    std::map<std::string, std::size_t> station_index_;
    std::map<Date, int> date_index_;
};

struct SyntheticData {
    std::vector<StationRecord> stations;  // one record per station-day, day-major
    std::vector<GridField> grids;         // both products, all days
    TruthOracle truth;
};

namespace detail {

struct StormBump {
    double lon, lat, amplitude, width;
};

/// Daily storm field: background plus a few Gaussian bumps.
struct StormField {
    double background;
    std::vector<StormBump> bumps;

    double at(double lon, double lat) const {
        double v = background;
        for (const auto& b : bumps) {
            const double dx = lon - b.lon;
            const double dy = lat - b.lat;
            v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
        }
        return v;
    }
};

inline StormField make_storm_field(Rng& rng, const GridSpec& region) {
    StormField f;
    f.background = 0.05;
    const double lon_lo = region.origin_longitude;
    const double lon_hi = region.lon_at(region.n_lon - 1);
    const double lat_lo = region.origin_latitude;
    const double lat_hi = region.lat_at(region.n_lat - 1);
    const int n_bumps = 1 + static_cast<int>(rng.below(4));
    for (int k = 0; k < n_bumps; ++k) {
        StormBump b;
        b.lon = lon_lo + rng.uniform() * (lon_hi - lon_lo);
        b.lat = lat_lo + rng.uniform() * (lat_hi - lat_lo);
        b.amplitude = std::exp(1.5 + 0.8 * rng.normal());
        b.width = 0.3 + rng.uniform() * 1.0;
        f.bumps.push_back(b);
    }
    return f;
}

inline double terrain_elevation(double lon, double lat) {
    return 500.0 + 400.0 * std::sin(0.9 * lon) + 300.0 * std::cos(1.3 * lat);
}

inline double spatial_pattern(double lon, double lat) {
    return std::sin(0.8 * lon) + std::cos(1.1 * lat);
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const auto& region = config.persiann_spec;

    // Stations live strictly inside the coarse-grid center hull so that
    // regridding and 4-nearest lookups always have data around them.
    Rng station_rng(derive_seed(config.seed, "synthetic.stations"));
    std::vector<std::string> station_ids(config.n_stations);
    std::vector<double> station_lon(config.n_stations), station_lat(config.n_stations),
        station_elev(config.n_stations);
    const double lon_lo = region.origin_longitude + 0.05 * region.cell_size;
    const double lon_hi = region.lon_at(region.n_lon - 1) - 0.05 * region.cell_size;
    const double lat_lo = region.origin_latitude + 0.05 * region.cell_size;
    const double lat_hi = region.lat_at(region.n_lat - 1) - 0.05 * region.cell_size;
    for (int s = 0; s < config.n_stations; ++s) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "S%04d", s);
        station_ids[s] = buf;
        station_lon[s] = lon_lo + station_rng.uniform() * (lon_hi - lon_lo);
        station_lat[s] = lat_lo + station_rng.uniform() * (lat_hi - lat_lo);
        station_elev[s] =
            detail::terrain_elevation(station_lon[s], station_lat[s]) + 50.0 * station_rng.normal();
    }

    std::vector<double> mu(static_cast<std::size_t>(config.n_stations) * config.n_days);
    std::vector<StationRecord> records;
    records.reserve(mu.size());
    std::vector<GridField> grids;
    grids.reserve(2 * static_cast<std::size_t>(config.n_days));

    Date date = config.start_date;
    for (int d = 0; d < config.n_days; ++d, date = date.next()) {
        Rng storm_rng(derive_seed(config.seed, "synthetic.storm", d));
        const auto storm = detail::make_storm_field(storm_rng, region);

        Rng target_rng(derive_seed(config.seed, "synthetic.target", d));
        for (int s = 0; s < config.n_stations; ++s) {
            const double storm_here = storm.at(station_lon[s], station_lat[s]);
            const double m = config.mu_offset + config.mu_scale * std::log(storm_here) +
                             config.location_gain *
                                 detail::spatial_pattern(station_lon[s], station_lat[s]) +
                             config.elevation_gain * (station_elev[s] - 500.0) / 1000.0;
            mu[static_cast<std::size_t>(s) * config.n_days + d] = m;

            const double u_zero = target_rng.uniform();
            double y = 0.0;
            if (u_zero >= config.zero_probability) {
                const double u = target_rng.uniform_open();
                y = std::exp(m + config.lognormal_sigma * Rng::normal_quantile(u));
            }
            records.push_back(StationRecord{station_ids[s], station_lon[s], station_lat[s],
                                            station_elev[s], date, y});
        }

        Rng persiann_rng(derive_seed(config.seed, "synthetic.persiann", d));
        GridField pf = GridField::empty("persiann", config.persiann_spec, date);
        for (int j = 0; j < config.persiann_spec.n_lat; ++j)
            for (int i = 0; i < config.persiann_spec.n_lon; ++i) {
                const double v = storm.at(config.persiann_spec.lon_at(i),
                                          config.persiann_spec.lat_at(j));
                const double noise = std::exp(config.persiann_noise * persiann_rng.normal() -
                                              0.5 * config.persiann_noise * config.persiann_noise);
                pf.at(i, j) = v * noise;
            }
        grids.push_back(std::move(pf));

        Rng imerg_rng(derive_seed(config.seed, "synthetic.imerg", d));
        GridField gf = GridField::empty("imerg", config.imerg_spec, date);
        for (int j = 0; j < config.imerg_spec.n_lat; ++j)
            for (int i = 0; i < config.imerg_spec.n_lon; ++i) {
                const double v =
                    storm.at(config.imerg_spec.lon_at(i), config.imerg_spec.lat_at(j));
                const double noise = std::exp(config.imerg_noise * imerg_rng.normal() -
                                              0.5 * config.imerg_noise * config.imerg_noise);
                gf.at(i, j) = std::pow(v, config.imerg_exponent) * noise;
            }
        grids.push_back(std::move(gf));
    }

    TruthOracle truth(config.zero_probability, config.lognormal_sigma, std::move(station_ids),
                      config.start_date, config.n_days, std::move(mu));
    return SyntheticData{std::move(records), std::move(grids), std::move(truth)};
}

/// Long-format truth table of oracle quantiles at the given levels.
inline std::string serialize_truth(const TruthOracle& truth,
                                   const std::vector<QuantileLevel>& levels) {
    std::ostringstream out;
    out << "station_id,date,tau,quantile_mm\n";
    Date date = truth.start_date();
    for (int d = 0; d < truth.n_days(); ++d, date = date.next()) {
        for (std::size_t s = 0; s < truth.station_ids().size(); ++s) {
            for (const auto tau : levels) {
                out << truth.station_ids()[s] << ',' << date.to_string() << ','
                    << csv::format_double(tau.value()) << ','
                    << csv::format_double(truth.quantile_by_index(s, d, tau)) << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace quantmerge

#endif  // QUANTMERGE_SYNTHETIC_HPP
