#include "evcorridor/ev.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace evc {

namespace {
constexpr double kEps = 1e-9;
}

EvRoute make_route(const Network& net, const std::vector<int>& nodes) {
    if (nodes.size() < 2) throw std::invalid_argument("route needs at least two intersections");
    EvRoute r;
    r.nodes = nodes;
    r.cell_length = net.spec.cell_length();
    r.cells_per_link = net.params.cells_per_link;
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        int link = -1;
        for (int l : net.nodes[nodes[i]].out_link)
            if (l >= 0 && net.links[l].to == nodes[i + 1]) link = l;
        if (link < 0) throw std::invalid_argument("route intersections are not grid-adjacent");
        r.links.push_back(link);
        for (int k = 0; k < r.cells_per_link; ++k) r.cells.push_back(net.links[link].first_cell + k);
    }
    const int K = r.K();
    r.node_pos.resize(K);
    for (int i = 0; i < K; ++i) r.node_pos[i] = i * net.spec.link_length;
    r.length = r.node_pos.back();
    r.ev_phase.resize(K);
    for (int i = 0; i < K; ++i) {
        if (i == 0) {
            Dir h = net.links[r.links[0]].heading;
            r.ev_phase[i] = static_cast<uint8_t>(phase_for(opposite(h), Through));
        } else if (i == K - 1) {
            Dir h = net.links[r.links[K - 2]].heading;
            r.ev_phase[i] = static_cast<uint8_t>(phase_for(opposite(h), Through));
        } else {
            Dir hin = net.links[r.links[i - 1]].heading;
            Dir hout = net.links[r.links[i]].heading;
            r.ev_phase[i] = static_cast<uint8_t>(phase_for(opposite(hin), turn_between(hin, hout)));
        }
    }
    return r;
}

int default_min_manhattan(const GridSpec& spec) {
    return std::max(1, std::max(spec.rows, spec.cols) / 2);
}

EvRoute sample_route(const Network& net, Rng& rng, int min_manhattan) {
    const int R = net.spec.rows, C = net.spec.cols;
    std::vector<std::pair<int, int>> pairs;
    for (int o = 0; o < R * C; ++o)
        for (int d = 0; d < R * C; ++d) {
            if (o == d) continue;
            int md = std::abs(o / C - d / C) + std::abs(o % C - d % C);
            if (md >= min_manhattan) pairs.emplace_back(o, d);
        }
    if (pairs.empty()) throw std::invalid_argument("no origin/destination pair meets the distance bound");
    std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
    auto [o, d] = pairs[pick(rng)];
    bool rows_first = std::uniform_int_distribution<int>(0, 1)(rng) == 1;

    int r = o / C, c = o % C;
    const int rd = d / C, cd = d % C;
    std::vector<int> path{o};
    auto walk_rows = [&] {
        while (r != rd) { r += rd > r ? 1 : -1; path.push_back(r * C + c); }
    };
    auto walk_cols = [&] {
        while (c != cd) { c += cd > c ? 1 : -1; path.push_back(r * C + c); }
    };
    if (rows_first) { walk_rows(); walk_cols(); }
    else { walk_cols(); walk_rows(); }
    return make_route(net, path);
}

EvState ev_dispatch(const EvRoute& route, double v_f, double now_s) {
    EvState ev;
    ev.speed = v_f;
    ev.dispatch_time = now_s;
    ev.passed.assign(route.K(), 0);
    return ev;
}

double ev_speed(double n, double n_max, bool gate_green, double v_f) {
    if (!gate_green) return 0.0;
    return v_f * std::clamp(1.0 - n / n_max, 0.0, 1.0);
}

EvMove ev_step(EvState& ev, const EvRoute& route, const Network& net, const SignalGates& gates,
               double step_end_s) {
    EvMove mv;
    if (ev.arrived) {
        mv.occupied_cell = route.cells.back();
        return mv;
    }
    const double ell = route.cell_length;
    const int L = route.cells_per_link;
    const int last = static_cast<int>(route.cells.size()) - 1;
    const double dt = net.spec.dt;
    const double pos0 = ev.pos;

    if (!ev.dispatched) {
        ev.dispatched = true;
        ev.passed[0] = 1;
    }

    auto red_ahead = [&](int cell_idx) {
        if ((cell_idx + 1) % L != 0) return false;
        int next = (cell_idx + 1) / L;  // route node index at the end of this link
        if (next >= route.K() - 1) return false;
        return !gates.permits(route.nodes[next], route.ev_phase[next]);
    };

    double remaining =
        ev_speed(net.n[route.cells[ev.cell_idx]], net.params.n_max, true, net.spec.v_f) * dt;
    while (true) {
        double room = ell - ev.offset;
        if (remaining < room - kEps) {
            ev.offset += remaining;
            break;
        }
        remaining = std::max(0.0, remaining - room);
        ev.offset = ell;
        if (ev.cell_idx == last) {
            ev.arrived = true;
            break;
        }
        if (red_ahead(ev.cell_idx)) break;
        if ((ev.cell_idx + 1) % L == 0) ev.passed[(ev.cell_idx + 1) / L] = 1;
        ++ev.cell_idx;
        ev.offset = 0.0;
        if (remaining <= kEps) break;
    }
    ev.pos = ev.cell_idx * ell + ev.offset;
    mv.advance = ev.pos - pos0;
    double prev_speed = ev.speed;
    ev.speed = mv.advance / dt;
    if (mv.advance <= kEps) {
        ev.speed = 0.0;
        mv.stopped = true;
        if (prev_speed > 0.0) ++ev.stop_count;
    }
    if (ev.arrived) {
        ev.pos = route.length;
        ev.passed.back() = 1;
        ev.arrival_time = step_end_s;
    }
    mv.occupied_cell = route.cells[ev.cell_idx];
    return mv;
}

double ev_remaining(const EvState& ev, const EvRoute& route) {
    return ev.arrived ? 0.0 : std::max(0.0, route.length - ev.pos);
}

EvFeatures ev_features(const EvState& ev, const EvRoute& route, double v_f, int horizon_cells) {
    EvFeatures f;
    const int K = route.K();
    f.delta.resize(K);
    f.arrival_flag.resize(K);
    for (int i = 0; i < K; ++i) {
        double ahead = route.node_pos[i] - ev.pos;
        if (!ev.dispatched) f.delta[i] = 1.0;
        else if (ev.passed[i]) f.delta[i] = 0.0;
        else f.delta[i] = std::clamp(ahead / route.length, 0.0, 1.0);
        f.arrival_flag[i] = !ev.passed[i] && ahead <= horizon_cells * route.cell_length + kEps;
    }
    f.speed_fraction = std::clamp(ev.speed / v_f, 0.0, 1.0);
    return f;
}

}  // namespace evc
