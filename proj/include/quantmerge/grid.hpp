#ifndef QUANTMERGE_GRID_HPP
#define QUANTMERGE_GRID_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "quantmerge/dates.hpp"
#include "quantmerge/errors.hpp"

namespace quantmerge {

/// Marker for cells without data. NaN compares false everywhere, so any
/// arithmetic on a missing cell poisons the result instead of hiding it.
inline constexpr double kMissingValue = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Regular lon/lat grid; cell centers at origin + index * cell_size.
struct GridSpec {
    double origin_longitude = 0.0;
    double origin_latitude = 0.0;
    double cell_size = 0.0;
    int n_lon = 0;
    int n_lat = 0;

    void validate() const {
        if (!(cell_size > 0.0)) throw InvariantError("GridSpec: cell_size must be > 0");
        if (n_lon <= 0 || n_lat <= 0) throw InvariantError("GridSpec: dimensions must be positive");
    }

    double lon_at(int i) const { return origin_longitude + i * cell_size; }
    double lat_at(int j) const { return origin_latitude + j * cell_size; }
    std::size_t cell_count() const {
        return static_cast<std::size_t>(n_lon) * static_cast<std::size_t>(n_lat);
    }
    std::size_t flat_index(int i_lon, int j_lat) const {
        return static_cast<std::size_t>(j_lat) * static_cast<std::size_t>(n_lon) +
               static_cast<std::size_t>(i_lon);
    }

    bool operator==(const GridSpec& o) const {
        return origin_longitude == o.origin_longitude && origin_latitude == o.origin_latitude &&
               cell_size == o.cell_size && n_lon == o.n_lon && n_lat == o.n_lat;
    }
};

/// One product on one day: dense value array with missing markers.
struct GridField {
    std::string product_id;
    GridSpec spec;
    Date date;
    std::vector<double> values;  // length n_lon * n_lat, row = constant latitude

    double at(int i_lon, int j_lat) const { return values[spec.flat_index(i_lon, j_lat)]; }
    double& at(int i_lon, int j_lat) { return values[spec.flat_index(i_lon, j_lat)]; }

    static GridField empty(std::string product, const GridSpec& spec, Date date) {
        spec.validate();
        GridField f{std::move(product), spec, date, {}};
        f.values.assign(spec.cell_count(), kMissingValue);
        return f;
    }

    void validate() const {
        spec.validate();
        if (values.size() != spec.cell_count())
            throw InvariantError("GridField: value array length does not match spec");
        for (double v : values)
            if (!is_missing(v) && v < 0.0)
                throw InvariantError("GridField: negative value in " + product_id);
    }
};

/// Resamples a field onto a target grid by bilinear interpolation of the 4
/// surrounding source cell centers. Target cells outside the source center
/// hull, or with any missing corner, come out missing. Exact for fields
/// affine in lon/lat.
inline GridField bilinear_regrid(const GridField& field, const GridSpec& target) {
    field.spec.validate();
    target.validate();
    const GridSpec& src = field.spec;
    GridField out = GridField::empty(field.product_id, target, field.date);

    const double src_lon_max = src.lon_at(src.n_lon - 1);
    const double src_lat_max = src.lat_at(src.n_lat - 1);

    for (int j = 0; j < target.n_lat; ++j) {
        const double lat = target.lat_at(j);
        for (int i = 0; i < target.n_lon; ++i) {
            const double lon = target.lon_at(i);
            if (lon < src.origin_longitude || lon > src_lon_max ||
                lat < src.origin_latitude || lat > src_lat_max)
                continue;  // outside hull -> missing

            double fi = (lon - src.origin_longitude) / src.cell_size;
            double fj = (lat - src.origin_latitude) / src.cell_size;
            int i0 = static_cast<int>(std::floor(fi));
            int j0 = static_cast<int>(std::floor(fj));
            if (i0 >= src.n_lon - 1) i0 = src.n_lon - 2;  // exactly on the far edge
            if (j0 >= src.n_lat - 1) j0 = src.n_lat - 2;
            if (src.n_lon == 1) i0 = 0;
            if (src.n_lat == 1) j0 = 0;
            const double wx = (src.n_lon == 1) ? 0.0 : fi - i0;
            const double wy = (src.n_lat == 1) ? 0.0 : fj - j0;
            const int i1 = (src.n_lon == 1) ? i0 : i0 + 1;
            const int j1 = (src.n_lat == 1) ? j0 : j0 + 1;

            const double v00 = field.at(i0, j0);
            const double v10 = field.at(i1, j0);
            const double v01 = field.at(i0, j1);
            const double v11 = field.at(i1, j1);
            if (is_missing(v00) || is_missing(v10) || is_missing(v01) || is_missing(v11))
                continue;

            out.at(i, j) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) +
                           wy * ((1.0 - wx) * v01 + wx * v11);
        }
    }
    return out;
}

}  // namespace quantmerge

#endif  // QUANTMERGE_GRID_HPP
