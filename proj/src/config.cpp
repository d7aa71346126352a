#include "evcorridor/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evc {

static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key or value");
        kv[key] = val;
    }
    return kv;
}

KeyValues load_key_values(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_key_values(ss.str());
}

static double to_double(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad number for " + key + ": " + v);
    return x;
}

static long long to_int(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad integer for " + key + ": " + v);
    return x;
}

GridConfig grid_config_from(const KeyValues& kv, GridConfig cfg) {
    for (const auto& [k, v] : kv) {
        if (k == "rows") cfg.spec.rows = static_cast<int>(to_int(k, v));
        else if (k == "cols") cfg.spec.cols = static_cast<int>(to_int(k, v));
        else if (k == "link_length_m") cfg.spec.link_length = to_double(k, v);
        else if (k == "v_f") cfg.spec.v_f = to_double(k, v);
        else if (k == "w") cfg.spec.w = to_double(k, v);
        else if (k == "k_jam") cfg.spec.k_jam = to_double(k, v);
        else if (k == "dt_s") cfg.spec.dt = to_double(k, v);
        else if (k == "demand_veh_s") cfg.spec.entry_demand = to_double(k, v);
        else if (k == "ratio_through") cfg.spec.ratio_through = to_double(k, v);
        else if (k == "ratio_left") cfg.spec.ratio_left = to_double(k, v);
        else if (k == "ratio_right") cfg.spec.ratio_right = to_double(k, v);
        else if (k == "seed") cfg.seed = static_cast<uint64_t>(to_int(k, v));
        else throw std::invalid_argument("unknown config key: " + k);
    }
    cfg.spec.validate();
    return cfg;
}

GridConfig load_grid_config(const std::string& path) {
    return grid_config_from(load_key_values(path));
}

}  // namespace evc
