#pragma once

#include <cstdint>
#include <vector>

#include "evcorridor/ctm.hpp"

namespace evc {

struct EvRoute {
    std::vector<int> nodes;      // v_1 .. v_K
    std::vector<int> links;      // K - 1 links
    std::vector<int> cells;      // network cell ids in travel order
    std::vector<double> node_pos;  // distance of each route node from the origin, m
    std::vector<uint8_t> ev_phase;  // phase that lets the EV through each route node
    double length = 0.0;
    double cell_length = 0.0;
    int cells_per_link = 0;

    int K() const { return static_cast<int>(nodes.size()); }
};

EvRoute make_route(const Network& net, const std::vector<int>& nodes);

// Uniform origin/destination pair with Manhattan distance >= min_manhattan; the path
// is L-shaped with the leg order drawn from rng.
EvRoute sample_route(const Network& net, Rng& rng, int min_manhattan);

int default_min_manhattan(const GridSpec& spec);

struct EvState {
    int cell_idx = 0;        // index into route.cells
    double offset = 0.0;     // m travelled inside the current cell, in [0, cell_length]
    double pos = 0.0;        // m from the origin
    double speed = 0.0;      // m/s realized over the last step
    bool dispatched = false;
    bool arrived = false;
    int stop_count = 0;
    double dispatch_time = 0.0;
    double arrival_time = -1.0;
    std::vector<uint8_t> passed;
};

EvState ev_dispatch(const EvRoute& route, double v_f, double now_s);

double ev_speed(double n, double n_max, bool gate_green, double v_f);

struct EvMove {
    double advance = 0.0;
    bool stopped = false;
    int occupied_cell = -1;  // network cell holding the EV after the move
};

// Advances the EV by one step using the densities in net and this step's gates.
EvMove ev_step(EvState& ev, const EvRoute& route, const Network& net, const SignalGates& gates,
               double step_end_s);

struct EvFeatures {
    std::vector<double> delta;          // per route node
    std::vector<uint8_t> arrival_flag;  // per route node
    double speed_fraction = 0.0;
};

EvFeatures ev_features(const EvState& ev, const EvRoute& route, double v_f, int horizon_cells = 3);

double ev_remaining(const EvState& ev, const EvRoute& route);

}  // namespace evc
