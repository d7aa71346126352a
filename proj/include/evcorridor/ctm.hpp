#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace evc {

using Rng = std::mt19937_64;

constexpr int kPhases = 4;

// Compass sides. An approach on side N carries vehicles heading south.
enum Dir : int { N = 0, S = 1, E = 2, W = 3 };
enum Turn : int { Through = 0, Left = 1, Right = 2 };

Dir opposite(Dir d);
Dir turn_heading(Dir heading, Turn t);
Turn turn_between(Dir in_heading, Dir out_heading);

// Phase ids: 0 NS-through, 1 NS-left, 2 EW-through, 3 EW-left.
// Through and right turns share a phase.
int phase_for(Dir approach_side, Turn t);

struct GridSpec {
    int rows = 4;
    int cols = 4;
    double link_length = 300.0;  // m
    double v_f = 15.0;           // m/s
    double w = 5.0;              // m/s
    double k_jam = 0.15;         // veh/m
    double dt = 5.0;             // s
    double entry_demand = 0.10;  // veh/s per entry
    double ratio_through = 0.6;
    double ratio_left = 0.2;
    double ratio_right = 0.2;

    double cell_length() const { return v_f * dt; }
    void validate() const;
};

struct DerivedParams {
    double n_max = 0.0;
    double q_max = 0.0;
    int cells_per_link = 0;
    double wave_ratio = 0.0;  // w / v_f in cells per step
};

DerivedParams derive_params(const GridSpec& spec);

// Flow across one cell boundary in normalized units (v_f = 1 cell/step).
double cell_flow(double n_up, double n_down, double n_max, double q_max, double wave_ratio,
                 bool gate_open);

struct Link {
    int from = -1;
    int to = -1;
    Dir heading = N;
    int first_cell = 0;
};

struct Movement {
    int from_cell = 0;
    int to_cell = -1;  // -1 leaves the network
    int node = 0;
    int approach_link = 0;
    Dir side = N;
    Turn turn = Through;
    int phase = 0;
    double ratio = 0.0;
};

struct Intersection {
    int row = 0;
    int col = 0;
    std::array<int, 4> in_link{-1, -1, -1, -1};   // indexed by approach side
    std::array<int, 4> out_link{-1, -1, -1, -1};  // indexed by heading
    std::vector<int> neighbors;
    std::vector<int> movements;
};

struct SignalGates {
    std::vector<uint8_t> phase;
    bool all_open = false;

    bool permits(int node, int movement_phase) const {
        return all_open || phase[node] == movement_phase;
    }
};

struct StepStats {
    double injected = 0.0;
    double dropped = 0.0;
    double exited = 0.0;
    double delay_veh_s = 0.0;
};

struct Network {
    GridSpec spec;
    DerivedParams params;
    std::vector<Intersection> nodes;
    std::vector<Link> links;
    std::vector<Movement> movements;
    std::vector<int> entry_cells;
    std::vector<int> cell_link;  // owning link per cell
    std::vector<double> n;       // current vehicle count per cell

    // Scratch buffers reused by step(); outflow holds the last step's per-cell outflow.
    std::vector<double> outflow;
    std::vector<double> inflow;
    std::vector<double> demand_into;
    std::vector<double> mv_flow;
    std::vector<double> extra_occupancy;

    int num_cells() const { return static_cast<int>(n.size()); }
    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int node_id(int r, int c) const { return r * spec.cols + c; }
    int last_cell(int link) const { return links[link].first_cell + params.cells_per_link - 1; }
    double total_vehicles() const;
    void clear();
};

int expected_cell_count(int rows, int cols, int cells_per_link);

Network build_grid(const GridSpec& spec);

double inject_demand(Network& net, double rate, double dt, Rng& rng, double* dropped);

// One CTM update. The caller may set net.extra_occupancy (same length as n) to add
// phantom occupancy seen only by supply; it is cleared by the call.
StepStats step(Network& net, const SignalGates& gates, Rng& rng);

// Flows and update without injection; used by step() and by tests.
StepStats propagate(Network& net, const SignalGates& gates);

}  // namespace evc
