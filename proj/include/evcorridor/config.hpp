#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "evcorridor/ctm.hpp"

namespace evc {

using KeyValues = std::map<std::string, std::string>;

// Plain "key = value" lines; '#' starts a comment.
KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::string& path);

struct GridConfig {
    GridSpec spec;
    uint64_t seed = 0;
};

// Recognized keys: rows, cols, link_length_m, v_f, w, k_jam, dt_s, demand_veh_s,
// ratio_through, ratio_left, ratio_right, seed. Unknown keys are rejected.
GridConfig grid_config_from(const KeyValues& kv, GridConfig base = {});
GridConfig load_grid_config(const std::string& path);

}  // namespace evc
