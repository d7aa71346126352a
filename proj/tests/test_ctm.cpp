#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "evcorridor/config.hpp"
#include "evcorridor/ctm.hpp"

using namespace evc;

namespace {

// Brute force straight from the demand/supply definitions.
double oracle_flow(int n_up, int n_down, double n_max, double q_max, double wr) {
    double best = 1e300;
    for (double v : {static_cast<double>(n_up), q_max, wr * (n_max - n_down)}) best = std::min(best, v);
    return std::max(0.0, best);
}

SignalGates gates_for(const Network& net, int phase) {
    SignalGates g;
    g.phase.assign(net.num_nodes(), static_cast<uint8_t>(phase));
    return g;
}

}  // namespace

TEST(Discretization, DefaultGridMatchesWorkedExample) {
    GridSpec g;
    DerivedParams p = derive_params(g);
    EXPECT_EQ(p.n_max, 11.0);
    EXPECT_EQ(p.q_max, 3.0);
    EXPECT_EQ(p.cells_per_link, 4);
    EXPECT_DOUBLE_EQ(p.wave_ratio, 1.0 / 3.0);
    Network net = build_grid(g);
    EXPECT_EQ(net.num_cells(), 192);
    EXPECT_EQ(expected_cell_count(4, 4, 4), 192);
    EXPECT_EQ(build_grid([] { GridSpec s; s.rows = s.cols = 8; return s; }()).num_cells(), 896);
}

TEST(Discretization, SymmetricDiagramCapacity) {
    GridSpec g;
    g.w = g.v_f;
    g.k_jam = 0.2;
    // v_f = w gives q_max = v_f * k_jam / 2 * dt = 7.5, rounded half away from zero.
    EXPECT_EQ(derive_params(g).q_max, std::round(g.v_f * g.k_jam / 2 * g.dt));
}

TEST(Discretization, RejectsCflViolation) {
    GridSpec g;
    g.link_length = 270;
    g.dt = 6;
    g.w = 20;  // w * dt = 120 m exceeds the 90 m cell
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(CellFlow, MatchesBruteForceOnIntegerGrid) {
    const double n_max = 11, q_max = 3, wr = 1.0 / 3.0;
    for (int up = 0; up <= 11; ++up)
        for (int down = 0; down <= 11; ++down) {
            EXPECT_EQ(cell_flow(up, down, n_max, q_max, wr, true), oracle_flow(up, down, n_max, q_max, wr))
                << up << "," << down;
            EXPECT_EQ(cell_flow(up, down, n_max, q_max, wr, false), 0.0);
        }
}

TEST(CellFlow, Examples) {
    EXPECT_EQ(cell_flow(0, 4, 11, 3, 1.0 / 3, true), 0.0);
    EXPECT_EQ(cell_flow(8, 11, 11, 3, 1.0 / 3, true), 0.0);
    EXPECT_EQ(cell_flow(5, 2, 11, 3, 1.0 / 3, true), 3.0);
}

TEST(CellFlow, SupplyIsMonotone) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 11.0);
    for (int i = 0; i < 10000; ++i) {
        double up = u(rng), a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        double fa = cell_flow(up, a, 11, 3, 1.0 / 3, true), fb = cell_flow(up, b, 11, 3, 1.0 / 3, true);
        EXPECT_GE(fa, fb);
        EXPECT_LE(fa, up + 1e-12);
    }
}

TEST(Grid, EntriesAndAdjacency) {
    Network net = build_grid(GridSpec{});
    EXPECT_EQ(net.entry_cells.size(), 16u);
    int interior = 0;
    for (const auto& v : net.nodes) interior += v.neighbors.size() == 4;
    EXPECT_EQ(interior, 4);
    for (int c : net.entry_cells) EXPECT_EQ(net.links[net.cell_link[c]].first_cell, c);
}

TEST(Step, EmptyNetworkStaysEmpty) {
    GridSpec g;
    g.entry_demand = 0.0;
    Network net = build_grid(g);
    Rng rng(1);
    for (int phase = 0; phase < 4; ++phase) {
        StepStats st = step(net, gates_for(net, phase), rng);
        EXPECT_EQ(st.exited, 0.0);
        EXPECT_EQ(st.injected, 0.0);
    }
    EXPECT_EQ(net.total_vehicles(), 0.0);
}

TEST(Step, TwoCellsAgainstRedMoveThree) {
    Network net = build_grid(GridSpec{});
    const int l = 0;
    const Link& link = net.links[l];
    const int c0 = link.first_cell + net.params.cells_per_link - 2, c1 = c0 + 1;
    net.n[c0] = 5;
    net.n[c1] = 2;
    // A phase serving no movement of this approach holds the last cell.
    Dir side = opposite(link.heading);
    int phase = 0;
    while (phase == phase_for(side, Through) || phase == phase_for(side, Left) || phase == phase_for(side, Right))
        ++phase;
    SignalGates g = gates_for(net, phase);
    propagate(net, g);
    EXPECT_DOUBLE_EQ(net.n[c0], 2.0);
    EXPECT_DOUBLE_EQ(net.n[c1], 5.0);
}

TEST(Step, PulseOnOpenNetworkFullyExits) {
    Network net = build_grid(GridSpec{});
    net.n[net.entry_cells[0]] = 5;
    SignalGates g;
    g.phase.assign(net.num_nodes(), 0);
    g.all_open = true;
    double exited = 0.0;
    for (int t = 0; t < 200 && net.total_vehicles() > 1e-12; ++t) exited += propagate(net, g).exited;
    EXPECT_NEAR(exited, 5.0, 1e-9);
}

TEST(Step, ClosedGateBlocksMovement) {
    Network net = build_grid(GridSpec{});
    for (double& x : net.n) x = 6.0;
    SignalGates g = gates_for(net, 2);
    propagate(net, g);
    for (size_t m = 0; m < net.movements.size(); ++m)
        if (net.movements[m].phase != 2) EXPECT_EQ(net.mv_flow[m], 0.0);
}

TEST(Step, ConservationUnderRandomGates) {
    Network net = build_grid(GridSpec{});
    Rng rng(11);
    std::uniform_int_distribution<int> ph(0, 3);
    double injected = 0.0, exited = 0.0;
    for (int t = 0; t < 500; ++t) {
        SignalGates g;
        for (int v = 0; v < net.num_nodes(); ++v) g.phase.push_back(static_cast<uint8_t>(ph(rng)));
        StepStats st = step(net, g, rng);
        injected += st.injected;
        exited += st.exited;
        for (double x : net.n) {
            EXPECT_GE(x, -1e-12);
            EXPECT_LE(x, net.params.n_max + 1e-9);
        }
    }
    EXPECT_NEAR(injected, exited + net.total_vehicles(), 1e-9);
}

TEST(Inject, ZeroRateAndFullCell) {
    Network net = build_grid(GridSpec{});
    Rng rng(2);
    double dropped = 0.0;
    EXPECT_EQ(inject_demand(net, 0.0, 5.0, rng, &dropped), 0.0);
    for (int c : net.entry_cells) net.n[c] = net.params.n_max;
    double injected = 0.0, dropped_total = 0.0;
    for (int t = 0; t < 20; ++t) {
        injected += inject_demand(net, 0.5, 5.0, rng, &dropped);
        dropped_total += dropped;
    }
    EXPECT_EQ(injected, 0.0);
    EXPECT_GT(dropped_total, 0.0);
}

TEST(Inject, PoissonMeanPerEntry) {
    Network net = build_grid(GridSpec{});
    Rng rng(8);
    double total = 0.0;
    const int steps = 100000;
    for (int t = 0; t < steps; ++t) {
        net.clear();
        total += inject_demand(net, 0.10, 5.0, rng, nullptr);
    }
    EXPECT_NEAR(total / steps / net.entry_cells.size(), 0.5, 0.01);
}

TEST(Config, ParsesKeyValues) {
    auto kv = parse_key_values("rows = 3\n# comment\ncols=5\ndemand_veh_s = 0.2 # trailing\n");
    GridConfig c = grid_config_from(kv);
    EXPECT_EQ(c.spec.rows, 3);
    EXPECT_EQ(c.spec.cols, 5);
    EXPECT_DOUBLE_EQ(c.spec.entry_demand, 0.2);
    EXPECT_THROW(grid_config_from(parse_key_values("bogus = 1")), std::invalid_argument);
}
