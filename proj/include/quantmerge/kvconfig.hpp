#ifndef QUANTMERGE_KVCONFIG_HPP
#define QUANTMERGE_KVCONFIG_HPP

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quantmerge/csv.hpp"
#include "quantmerge/errors.hpp"

// Structured key-value files: one `key = value` pair per line, `#` comments.
// Used for run configs and manifests. Keys are dotted paths
// (e.g. grid.persiann.cell_size). Writing is deterministic (sorted keys).

namespace quantmerge {

class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(const std::string& text, const std::string& origin = "<string>") {
        KvConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string_view s(line);
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            if (s.empty() || s.front() == '#') continue;
            auto eq = s.find('=');
            if (eq == std::string_view::npos)
                throw DataError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            auto trim = [](std::string_view v) {
                while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
                while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
                return std::string(v);
            };
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty())
                throw DataError(origin + ":" + std::to_string(lineno) + ": empty key");
            if (cfg.values_.count(key))
                throw DataError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KvConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw DataError("missing config key: " + key);
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const {
        return csv::parse_double(get(key), "config key " + key);
    }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    long long get_int(const std::string& key) const {
        return csv::parse_int(get(key), "config key " + key);
    }
    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
    unsigned long long get_uint64(const std::string& key) const {
        return csv::parse_uint64(get(key), "config key " + key);
    }
    unsigned long long get_uint64_or(const std::string& key, unsigned long long fallback) const {
        return has(key) ? get_uint64(key) : fallback;
    }
    void set_uint64(const std::string& key, unsigned long long value) {
        values_[key] = std::to_string(value);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set_double(const std::string& key, double value) { values_[key] = csv::format_double(value); }
    void set_int(const std::string& key, long long value) { values_[key] = std::to_string(value); }

    /// Keys under `prefix.` with the prefix stripped.
    std::vector<std::string> keys_under(const std::string& prefix) const {
        std::vector<std::string> out;
        const std::string p = prefix + ".";
        for (const auto& [k, v] : values_) {
            if (k.rfind(p, 0) == 0) out.push_back(k.substr(p.size()));
        }
        return out;
    }

    std::string serialize() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
        return out.str();
    }

    void save(const std::string& path) const { csv::write_file(path, serialize()); }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace quantmerge

#endif  // QUANTMERGE_KVCONFIG_HPP
