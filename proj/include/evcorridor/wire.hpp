#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace evc::wire {

constexpr int kProtocolVersion = 1;

// One JSON object per line, discriminated by "type". Unknown fields are ignored on parse.

struct Hello {
    int protocol = kProtocolVersion;
    std::string server;
    std::string model;  // variant name, empty for baseline policies
};

struct LinkGeom {
    int from = 0, to = 0, heading = 0, first_cell = 0;
    bool operator==(const LinkGeom&) const = default;
};

struct ScenarioInfo {
    nlohmann::json scenario;  // serialized Scenario
    uint64_t seed = 0;
    int rows = 0, cols = 0;
    int cells_per_link = 0;
    int num_cells = 0;
    double n_max = 0.0;
    double cell_length_m = 0.0;
    double route_length_m = 0.0;
    std::vector<int> route;
    std::vector<int> ev_phase;
    std::vector<double> node_pos_m;
    std::vector<LinkGeom> links;
};

struct Snapshot {
    int t = 0;
    double time_s = 0.0;
    std::vector<double> densities;  // vehicles per cell
    std::vector<int> phases;        // every intersection
    double ev_pos_m = 0.0;
    double ev_speed = 0.0;
    bool ev_arrived = false;
    int ev_stops = 0;
    double rtg = 0.0;         // running R-hat
    double rtg_anchor = 0.0;  // R-hat right after the last target update
    double accrued = 0.0;     // rewards since that update
    std::optional<double> ctg;
    double g_star = 0.0;
    std::optional<double> c_star;
    double reward = 0.0;
    double cost = 0.0;
    double episode_return = 0.0;
    double queue_total = 0.0;
    double throughput = 0.0;
    std::optional<double> acd;
    bool done = false;
};

struct SetTarget {
    double g_star = 0.0;
    std::optional<double> c_star;
};

enum class ControlKind { Start, Pause, Resume, Reset, Rate };

struct Control {
    ControlKind kind = ControlKind::Start;
    std::optional<uint64_t> seed;  // reset
    std::optional<double> rate;    // steps per second
};

struct Metrics {
    double ett_s = 0.0;
    bool arrived = false;
    std::optional<double> acd;
    double throughput = 0.0;
    int ev_stops = 0;
    std::vector<double> intersection_delay_s;
    double clipped_entries = 0.0;
    int steps = 0;
    double episode_return = 0.0;
};

struct Bye {
    std::string reason;
};

struct Error {
    std::string message;
};

using Message = std::variant<Hello, ScenarioInfo, Snapshot, SetTarget, Control, Metrics, Bye, Error>;

std::string type_name(const Message& m);
nlohmann::json to_json(const Message& m);
std::string serialize(const Message& m);  // no trailing newline

// Throws std::invalid_argument with a readable reason on malformed input.
Message parse(const std::string& line);

std::string control_name(ControlKind k);

}  // namespace evc::wire
