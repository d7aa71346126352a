#include "evcorridor/wire.hpp"

#include <stdexcept>

namespace evc::wire {

using nlohmann::json;

namespace {

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

template <typename T>
T get_or(const json& j, const char* key, T dflt) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return dflt;
    return it->get<T>();
}

template <typename T>
T need(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw std::invalid_argument(std::string("missing field \"") + key + "\"");
    return it->get<T>();
}

const char* kControlNames[] = {"start", "pause", "resume", "reset", "rate"};

ControlKind parse_control(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == kControlNames[i]) return static_cast<ControlKind>(i);
    throw std::invalid_argument("unknown control action \"" + s + "\"");
}

struct ToJson {
    json operator()(const Hello& m) const {
        return json{{"type", "hello"}, {"protocol", m.protocol}, {"server", m.server}, {"model", m.model}};
    }
    json operator()(const ScenarioInfo& m) const {
        json links = json::array();
        for (const auto& l : m.links) links.push_back({l.from, l.to, l.heading, l.first_cell});
        return json{{"type", "scenario"},      {"scenario", m.scenario},       {"seed", m.seed},
                    {"rows", m.rows},          {"cols", m.cols},               {"cells_per_link", m.cells_per_link},
                    {"num_cells", m.num_cells}, {"n_max", m.n_max},            {"cell_length_m", m.cell_length_m},
                    {"route_length_m", m.route_length_m}, {"route", m.route}, {"ev_phase", m.ev_phase},
                    {"node_pos_m", m.node_pos_m}, {"links", links}};
    }
    json operator()(const Snapshot& m) const {
        json j{{"type", "snapshot"},
               {"t", m.t},
               {"time_s", m.time_s},
               {"densities", m.densities},
               {"phases", m.phases},
               {"ev", {{"pos_m", m.ev_pos_m}, {"speed", m.ev_speed}, {"arrived", m.ev_arrived}, {"stops", m.ev_stops}}},
               {"rtg", m.rtg},
               {"rtg_anchor", m.rtg_anchor},
               {"accrued", m.accrued},
               {"g_star", m.g_star},
               {"reward", m.reward},
               {"cost", m.cost},
               {"episode_return", m.episode_return},
               {"queue_total", m.queue_total},
               {"throughput", m.throughput},
               {"done", m.done}};
        put_opt(j, "ctg", m.ctg);
        put_opt(j, "c_star", m.c_star);
        put_opt(j, "acd", m.acd);
        return j;
    }
    json operator()(const SetTarget& m) const {
        json j{{"type", "set_target"}, {"g_star", m.g_star}};
        put_opt(j, "c_star", m.c_star);
        return j;
    }
    json operator()(const Control& m) const {
        json j{{"type", "control"}, {"action", control_name(m.kind)}};
        put_opt(j, "seed", m.seed);
        put_opt(j, "rate", m.rate);
        return j;
    }
    json operator()(const Metrics& m) const {
        json j{{"type", "metrics"},
               {"ett_s", m.ett_s},
               {"arrived", m.arrived},
               {"throughput", m.throughput},
               {"ev_stops", m.ev_stops},
               {"intersection_delay_s", m.intersection_delay_s},
               {"clipped_entries", m.clipped_entries},
               {"steps", m.steps},
               {"episode_return", m.episode_return}};
        put_opt(j, "acd", m.acd);
        return j;
    }
    json operator()(const Bye& m) const { return json{{"type", "bye"}, {"reason", m.reason}}; }
    json operator()(const Error& m) const { return json{{"type", "error"}, {"message", m.message}}; }
};

Message from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("message must be a JSON object");
    const std::string type = need<std::string>(j, "type");
    if (type == "hello") {
        Hello m;
        m.protocol = get_or(j, "protocol", kProtocolVersion);
        m.server = get_or<std::string>(j, "server", "");
        m.model = get_or<std::string>(j, "model", "");
        return m;
    }
    if (type == "scenario") {
        ScenarioInfo m;
        m.scenario = j.value("scenario", json::object());
        m.seed = get_or<uint64_t>(j, "seed", 0);
        m.rows = need<int>(j, "rows");
        m.cols = need<int>(j, "cols");
        m.cells_per_link = need<int>(j, "cells_per_link");
        m.num_cells = need<int>(j, "num_cells");
        m.n_max = need<double>(j, "n_max");
        m.cell_length_m = get_or(j, "cell_length_m", 0.0);
        m.route_length_m = get_or(j, "route_length_m", 0.0);
        m.route = need<std::vector<int>>(j, "route");
        m.ev_phase = get_or(j, "ev_phase", std::vector<int>{});
        m.node_pos_m = get_or(j, "node_pos_m", std::vector<double>{});
        for (const auto& l : j.value("links", json::array())) {
            if (!l.is_array() || l.size() != 4) throw std::invalid_argument("link entries are [from, to, heading, first_cell]");
            m.links.push_back({l[0].get<int>(), l[1].get<int>(), l[2].get<int>(), l[3].get<int>()});
        }
        return m;
    }
    if (type == "snapshot") {
        Snapshot m;
        m.t = need<int>(j, "t");
        m.time_s = get_or(j, "time_s", 0.0);
        m.densities = get_or(j, "densities", std::vector<double>{});
        m.phases = get_or(j, "phases", std::vector<int>{});
        if (auto it = j.find("ev"); it != j.end() && it->is_object()) {
            m.ev_pos_m = get_or(*it, "pos_m", 0.0);
            m.ev_speed = get_or(*it, "speed", 0.0);
            m.ev_arrived = get_or(*it, "arrived", false);
            m.ev_stops = get_or(*it, "stops", 0);
        }
        m.rtg = get_or(j, "rtg", 0.0);
        m.rtg_anchor = get_or(j, "rtg_anchor", 0.0);
        m.accrued = get_or(j, "accrued", 0.0);
        m.ctg = get_opt<double>(j, "ctg");
        m.g_star = get_or(j, "g_star", 0.0);
        m.c_star = get_opt<double>(j, "c_star");
        m.reward = get_or(j, "reward", 0.0);
        m.cost = get_or(j, "cost", 0.0);
        m.episode_return = get_or(j, "episode_return", 0.0);
        m.queue_total = get_or(j, "queue_total", 0.0);
        m.throughput = get_or(j, "throughput", 0.0);
        m.acd = get_opt<double>(j, "acd");
        m.done = get_or(j, "done", false);
        return m;
    }
    if (type == "set_target") {
        SetTarget m;
        auto it = j.find("g_star");
        if (it == j.end() || !it->is_number()) throw std::invalid_argument("set_target needs a numeric g_star");
        m.g_star = it->get<double>();
        if (auto c = j.find("c_star"); c != j.end() && !c->is_null()) {
            if (!c->is_number()) throw std::invalid_argument("c_star must be a number or null");
            m.c_star = c->get<double>();
        }
        return m;
    }
    if (type == "control") {
        Control m;
        m.kind = parse_control(need<std::string>(j, "action"));
        m.seed = get_opt<uint64_t>(j, "seed");
        m.rate = get_opt<double>(j, "rate");
        if (m.kind == ControlKind::Rate && (!m.rate || !(*m.rate > 0.0)))
            throw std::invalid_argument("rate control needs a positive \"rate\"");
        return m;
    }
    if (type == "metrics") {
        Metrics m;
        m.ett_s = get_or(j, "ett_s", 0.0);
        m.arrived = get_or(j, "arrived", false);
        m.acd = get_opt<double>(j, "acd");
        m.throughput = get_or(j, "throughput", 0.0);
        m.ev_stops = get_or(j, "ev_stops", 0);
        m.intersection_delay_s = get_or(j, "intersection_delay_s", std::vector<double>{});
        m.clipped_entries = get_or(j, "clipped_entries", 0.0);
        m.steps = get_or(j, "steps", 0);
        m.episode_return = get_or(j, "episode_return", 0.0);
        return m;
    }
    if (type == "bye") return Bye{get_or<std::string>(j, "reason", "")};
    if (type == "error") return Error{get_or<std::string>(j, "message", "")};
    throw std::invalid_argument("unknown message type \"" + type + "\"");
}

}  // namespace

std::string control_name(ControlKind k) { return kControlNames[static_cast<int>(k)]; }

std::string type_name(const Message& m) { return to_json(m).at("type").get<std::string>(); }

json to_json(const Message& m) { return std::visit(ToJson{}, m); }

std::string serialize(const Message& m) { return to_json(m).dump(); }

Message parse(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("not valid JSON: ") + e.what());
    }
    try {
        return from_json(j);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad field type: ") + e.what());
    }
}

}  // namespace evc::wire
