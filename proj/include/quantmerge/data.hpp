#ifndef QUANTMERGE_DATA_HPP
#define QUANTMERGE_DATA_HPP

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/csv.hpp"
#include "quantmerge/dates.hpp"
#include "quantmerge/errors.hpp"
#include "quantmerge/grid.hpp"

// Tabular interchange for station records and gridded product fields.
// Stations: one row per station-day. Grids: long format keyed by
// product/date/cell indices; cells absent from the file stay missing.

namespace quantmerge {

struct StationRecord {
    std::string station_id;
    double longitude = 0.0;   // degrees east
    double latitude = 0.0;    // degrees north
    double elevation = 0.0;   // meters
    Date date;
    double precipitation = 0.0;  // mm/day

    void validate(const std::string& context) const {
        if (station_id.empty()) throw DataError(context + ": empty station_id");
        if (precipitation < 0.0)
            throw DataError(context + ": negative precipitation " +
                            csv::format_double(precipitation));
        if (latitude < -90.0 || latitude > 90.0)
            throw DataError(context + ": latitude out of [-90, 90]");
        if (longitude < -180.0 || longitude > 180.0)
            throw DataError(context + ": longitude out of [-180, 180]");
    }
};

inline const std::vector<std::string>& station_table_columns() {
    static const std::vector<std::string> cols = {"station_id", "longitude", "latitude",
                                                  "elevation_m", "date", "precip_mm"};
    return cols;
}

inline std::vector<StationRecord> load_stations(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": missing header row");
    csv::expect_header(csv::split(lines[0]), station_table_columns(), path);

    std::vector<StationRecord> records;
    records.reserve(lines.size() - 1);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string context = path + ":" + std::to_string(ln + 1);
        const auto fields = csv::split(lines[ln]);
        if (fields.size() != station_table_columns().size())
            throw DataError(context + ": expected 6 fields, found " +
                            std::to_string(fields.size()));
        StationRecord r;
        r.station_id = fields[0];
        r.longitude = csv::parse_double(fields[1], context);
        r.latitude = csv::parse_double(fields[2], context);
        r.elevation = csv::parse_double(fields[3], context);
        r.date = Date::parse(fields[4], context);
        r.precipitation = csv::parse_double(fields[5], context);
        r.validate(context);
        records.push_back(std::move(r));
    }
    return records;
}

inline std::string serialize_stations(const std::vector<StationRecord>& records) {
    std::ostringstream out;
    out << "station_id,longitude,latitude,elevation_m,date,precip_mm\n";
    for (const auto& r : records) {
        out << r.station_id << ',' << csv::format_double(r.longitude) << ','
            << csv::format_double(r.latitude) << ',' << csv::format_double(r.elevation) << ','
            << r.date.to_string() << ',' << csv::format_double(r.precipitation) << '\n';
    }
    return out.str();
}

inline void save_stations(const std::string& path, const std::vector<StationRecord>& records) {
    csv::write_file(path, serialize_stations(records));
}

inline const std::vector<std::string>& grid_table_columns() {
    static const std::vector<std::string> cols = {"product_id", "date", "i_lon", "j_lat",
                                                  "value_mm"};
    return cols;
}

/// Loads a long-format grid table. `specs` maps each product_id in the file
/// to its grid geometry; a product without a spec is an error, as are cell
/// indices outside the spec and duplicate (product, date, cell) rows.
inline std::vector<GridField> load_grid_table(const std::string& path,
                                              const std::map<std::string, GridSpec>& specs) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": missing header row");
    csv::expect_header(csv::split(lines[0]), grid_table_columns(), path);

    // Keyed by (product, date); insertion order of first appearance kept.
    std::vector<GridField> fields;
    std::map<std::pair<std::string, Date>, std::size_t> index;

    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string context = path + ":" + std::to_string(ln + 1);
        const auto f = csv::split(lines[ln]);
        if (f.size() != grid_table_columns().size())
            throw DataError(context + ": expected 5 fields, found " + std::to_string(f.size()));
        const std::string& product = f[0];
        auto spec_it = specs.find(product);
        if (spec_it == specs.end())
            throw DataError(context + ": no grid spec for product '" + product + "'");
        const GridSpec& spec = spec_it->second;
        const Date date = Date::parse(f[1], context);
        const long long i_lon = csv::parse_int(f[2], context);
        const long long j_lat = csv::parse_int(f[3], context);
        if (i_lon < 0 || i_lon >= spec.n_lon || j_lat < 0 || j_lat >= spec.n_lat)
            throw DataError(context + ": cell index (" + std::to_string(i_lon) + ", " +
                            std::to_string(j_lat) + ") out of range for product '" + product +
                            "'");
        const double value = csv::parse_double(f[4], context);
        if (value < 0.0) throw DataError(context + ": negative value");

        auto key = std::make_pair(product, date);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, fields.size()).first;
            fields.push_back(GridField::empty(product, spec, date));
        }
        double& cell = fields[it->second].at(static_cast<int>(i_lon), static_cast<int>(j_lat));
        if (!is_missing(cell))
            throw DataError(context + ": duplicate entry for product '" + product + "', date " +
                            date.to_string() + ", cell (" + std::to_string(i_lon) + ", " +
                            std::to_string(j_lat) + ")");
        cell = value;
    }
    return fields;
}

/// Single-product convenience: every product row in the file must share `spec`.
inline std::vector<GridField> load_grid(const std::string& path, const GridSpec& spec) {
    const auto lines = csv::read_lines(path);
    if (lines.size() < 2) return load_grid_table(path, {});
    std::map<std::string, GridSpec> specs;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = csv::split(lines[ln]);
        if (!f.empty()) specs.emplace(f[0], spec);
    }
    return load_grid_table(path, specs);
}

inline std::string serialize_grid_fields(const std::vector<GridField>& fields) {
    std::ostringstream out;
    out << "product_id,date,i_lon,j_lat,value_mm\n";
    for (const auto& field : fields) {
        for (int j = 0; j < field.spec.n_lat; ++j) {
            for (int i = 0; i < field.spec.n_lon; ++i) {
                const double v = field.at(i, j);
                if (is_missing(v)) continue;
                out << field.product_id << ',' << field.date.to_string() << ',' << i << ',' << j
                    << ',' << csv::format_double(v) << '\n';
            }
        }
    }
    return out.str();
}

inline void save_grid_fields(const std::string& path, const std::vector<GridField>& fields) {
    csv::write_file(path, serialize_grid_fields(fields));
}

}  // namespace quantmerge

#endif  // QUANTMERGE_DATA_HPP
