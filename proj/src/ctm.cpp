#include "evcorridor/ctm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace evc {

Dir opposite(Dir d) {
    switch (d) {
        case N: return S;
        case S: return N;
        case E: return W;
        default: return E;
    }
}

static Dir left_of(Dir heading) {
    switch (heading) {
        case S: return E;
        case N: return W;
        case E: return N;
        default: return S;
    }
}

Dir turn_heading(Dir heading, Turn t) {
    if (t == Through) return heading;
    Dir l = left_of(heading);
    return t == Left ? l : opposite(l);
}

Turn turn_between(Dir in_heading, Dir out_heading) {
    if (in_heading == out_heading) return Through;
    if (left_of(in_heading) == out_heading) return Left;
    if (opposite(left_of(in_heading)) == out_heading) return Right;
    throw std::invalid_argument("u-turns are not movements");
}

int phase_for(Dir approach_side, Turn t) {
    int axis = (approach_side == N || approach_side == S) ? 0 : 2;
    return axis + (t == Left ? 1 : 0);
}

void GridSpec::validate() const {
    if (rows < 1 || cols < 1 || rows * cols < 2)
        throw std::invalid_argument("grid needs at least two intersections");
    if (!(link_length > 0 && v_f > 0 && w > 0 && k_jam > 0 && dt > 0))
        throw std::invalid_argument("physical constants must be strictly positive");
    if (entry_demand < 0) throw std::invalid_argument("entry demand must be non-negative");
    if (ratio_through < 0 || ratio_left < 0 || ratio_right < 0 ||
        std::abs(ratio_through + ratio_left + ratio_right - 1.0) > 1e-9)
        throw std::invalid_argument("turn ratios must be non-negative and sum to 1");
    double ell = cell_length();
    if (ell + 1e-9 < std::max(v_f, w) * dt)
        throw std::invalid_argument("CFL violated: cell length below max(v_f, w) * dt");
    double k = link_length / ell;
    if (std::abs(k - std::round(k)) > 1e-9 || std::round(k) < 1)
        throw std::invalid_argument("link length " + std::to_string(link_length) +
                                    " is not a multiple of cell length " + std::to_string(ell));
}

DerivedParams derive_params(const GridSpec& spec) {
    spec.validate();
    DerivedParams p;
    double ell = spec.cell_length();
    p.n_max = std::round(spec.k_jam * ell);
    p.q_max = std::round(spec.v_f * spec.w * spec.k_jam / (spec.v_f + spec.w) * spec.dt);
    p.cells_per_link = static_cast<int>(std::lround(spec.link_length / ell));
    p.wave_ratio = spec.w / spec.v_f;
    return p;
}

double cell_flow(double n_up, double n_down, double n_max, double q_max, double wave_ratio,
                 bool gate_open) {
    if (!gate_open) return 0.0;
    double demand = std::min(n_up, q_max);
    double supply = std::min(wave_ratio * (n_max - n_down), q_max);
    return std::max(0.0, std::min(demand, supply));
}

int expected_cell_count(int rows, int cols, int cells_per_link) {
    return 2 * (rows * (cols - 1) + cols * (rows - 1)) * cells_per_link;
}

double Network::total_vehicles() const {
    double s = 0.0;
    for (double v : n) s += v;
    return s;
}

void Network::clear() { std::fill(n.begin(), n.end(), 0.0); }

Network build_grid(const GridSpec& spec) {
    Network net;
    net.spec = spec;
    net.params = derive_params(spec);
    const int R = spec.rows, C = spec.cols, L = net.params.cells_per_link;

    net.nodes.resize(R * C);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            auto& nd = net.nodes[net.node_id(r, c)];
            nd.row = r;
            nd.col = c;
        }

    auto neighbor = [&](int r, int c, Dir h) -> int {
        int rr = r + (h == S) - (h == N);
        int cc = c + (h == E) - (h == W);
        if (rr < 0 || rr >= R || cc < 0 || cc >= C) return -1;
        return rr * C + cc;
    };

    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            int u = net.node_id(r, c);
            for (Dir h : {N, S, E, W}) {
                int v = neighbor(r, c, h);
                if (v < 0) continue;
                Link lk;
                lk.from = u;
                lk.to = v;
                lk.heading = h;
                lk.first_cell = static_cast<int>(net.links.size()) * L;
                int id = static_cast<int>(net.links.size());
                net.links.push_back(lk);
                net.nodes[u].out_link[h] = id;
                net.nodes[v].in_link[opposite(h)] = id;
                net.nodes[u].neighbors.push_back(v);
            }
        }

    const int ncell = static_cast<int>(net.links.size()) * L;
    net.n.assign(ncell, 0.0);
    net.cell_link.resize(ncell);
    for (int l = 0; l < static_cast<int>(net.links.size()); ++l)
        for (int k = 0; k < L; ++k) net.cell_link[net.links[l].first_cell + k] = l;

    const double ratios[3] = {spec.ratio_through, spec.ratio_left, spec.ratio_right};
    for (int v = 0; v < R * C; ++v) {
        auto& nd = net.nodes[v];
        for (Dir side : {N, S, E, W}) {
            int l = nd.in_link[side];
            if (l < 0) continue;
            Dir heading = net.links[l].heading;
            for (Turn t : {Through, Left, Right}) {
                Movement m;
                m.from_cell = net.last_cell(l);
                int out = nd.out_link[turn_heading(heading, t)];
                m.to_cell = out >= 0 ? net.links[out].first_cell : -1;
                m.node = v;
                m.approach_link = l;
                m.side = side;
                m.turn = t;
                m.phase = phase_for(side, t);
                m.ratio = ratios[t];
                nd.movements.push_back(static_cast<int>(net.movements.size()));
                net.movements.push_back(m);
            }
        }
        // Boundary sides: traffic enters on the link continuing straight inward.
        for (Dir side : {N, S, E, W}) {
            if (nd.in_link[side] >= 0) continue;
            int out = nd.out_link[opposite(side)];
            if (out >= 0) net.entry_cells.push_back(net.links[out].first_cell);
        }
    }

    net.outflow.assign(ncell, 0.0);
    net.inflow.assign(ncell, 0.0);
    net.demand_into.assign(ncell, 0.0);
    net.extra_occupancy.assign(ncell, 0.0);
    net.mv_flow.assign(net.movements.size(), 0.0);
    return net;
}

double inject_demand(Network& net, double rate, double dt, Rng& rng, double* dropped) {
    if (dropped) *dropped = 0.0;
    if (rate <= 0.0) return 0.0;
    std::poisson_distribution<int> arrivals(rate * dt);
    double injected = 0.0;
    for (int c : net.entry_cells) {
        int k = arrivals(rng);
        double room = std::floor(net.params.n_max - net.n[c] + 1e-9);
        double put = std::min<double>(k, std::max(0.0, room));
        net.n[c] += put;
        injected += put;
        if (dropped) *dropped += k - put;
    }
    return injected;
}

StepStats propagate(Network& net, const SignalGates& gates) {
    const auto& P = net.params;
    const int L = P.cells_per_link;
    const int ncell = net.num_cells();
    std::fill(net.outflow.begin(), net.outflow.end(), 0.0);
    std::fill(net.inflow.begin(), net.inflow.end(), 0.0);
    std::fill(net.demand_into.begin(), net.demand_into.end(), 0.0);

    auto supply = [&](int c) {
        double occ = std::min(net.n[c] + net.extra_occupancy[c], P.n_max);
        return std::min(P.wave_ratio * (P.n_max - occ), P.q_max);
    };

    // Within-link boundaries.
    for (const auto& lk : net.links) {
        for (int k = 0; k + 1 < L; ++k) {
            int c = lk.first_cell + k;
            double f = std::min(std::min(net.n[c], P.q_max), supply(c + 1));
            f = std::max(0.0, f);
            net.outflow[c] += f;
            net.inflow[c + 1] += f;
        }
    }

    // Junction movements: per-movement demand, proportional split of shared supply.
    const int nm = static_cast<int>(net.movements.size());
    for (int i = 0; i < nm; ++i) {
        const auto& m = net.movements[i];
        double d = 0.0;
        if (gates.permits(m.node, m.phase)) d = m.ratio * std::min(net.n[m.from_cell], P.q_max);
        net.mv_flow[i] = d;
        if (m.to_cell >= 0) net.demand_into[m.to_cell] += d;
    }
    StepStats st;
    for (int i = 0; i < nm; ++i) {
        const auto& m = net.movements[i];
        double f = net.mv_flow[i];
        if (m.to_cell >= 0 && f > 0.0) {
            double D = net.demand_into[m.to_cell];
            double S = supply(m.to_cell);
            if (D > S) f *= S / D;
            net.inflow[m.to_cell] += f;
        } else if (m.to_cell < 0) {
            st.exited += f;
        }
        net.mv_flow[i] = f;
        net.outflow[m.from_cell] += f;
    }

    double delay = 0.0;
    for (int c = 0; c < ncell; ++c) {
        delay += net.n[c] - net.outflow[c];
        net.n[c] += net.inflow[c] - net.outflow[c];
        if (net.n[c] < 0.0) net.n[c] = 0.0;
    }
    st.delay_veh_s = delay * net.spec.dt;
    std::fill(net.extra_occupancy.begin(), net.extra_occupancy.end(), 0.0);
    return st;
}

StepStats step(Network& net, const SignalGates& gates, Rng& rng) {
    double dropped = 0.0;
    double injected = inject_demand(net, net.spec.entry_demand, net.spec.dt, rng, &dropped);
    StepStats st = propagate(net, gates);
    st.injected = injected;
    st.dropped = dropped;
    return st;
}

}  // namespace evc
