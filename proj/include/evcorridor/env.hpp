#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evcorridor/ctm.hpp"
#include "evcorridor/ev.hpp"

namespace evc {

constexpr int kNodeFeatures = kPhases + 6;

struct RewardWeights {
    double alpha = 1.0;
    double beta = 0.01;
    double lambda = 10.0;
};

enum class BackgroundControl { FixedTime, MaxPressure };

struct Scenario {
    GridSpec grid;
    int warmup_steps = 12;
    int t_max = 200;
    int horizon_cells = 3;
    int min_manhattan = -1;  // -1: half the larger grid dimension
    int ft_phase_steps = 4;
    BackgroundControl background = BackgroundControl::FixedTime;
    RewardWeights weights;
    std::vector<int> fixed_route;  // empty: sample per reset
    std::string id = "grid4x4";
};

using ActionVec = std::vector<uint8_t>;

struct EpisodeMetrics {
    double ett_s = 0.0;
    bool arrived = false;
    double acd_s_per_veh = 0.0;
    bool acd_valid = false;
    double throughput = 0.0;
    int ev_stops = 0;
    std::vector<double> intersection_delay_s;
    double clipped_entries = 0.0;
    double total_delay_veh_s = 0.0;
    int steps = 0;
    double episode_return = 0.0;
    double episode_cost = 0.0;
};

struct StepInfo {
    double exited = 0.0;
    double injected = 0.0;
    double dropped = 0.0;
    double delay_veh_s = 0.0;
    double ev_speed = 0.0;
    double ev_advance = 0.0;
    std::vector<double> queues;         // per intersection
    std::vector<double> local_rewards;  // per route node
};

struct StepResult {
    std::vector<float> observation;
    double reward = 0.0;
    double cost = 0.0;
    bool done = false;
    StepInfo info;
};

struct StepRecord {
    int t = 0;
    ActionVec action;
    std::vector<uint8_t> phases;  // every intersection
    double reward = 0.0;
    double cost = 0.0;
    double ev_pos = 0.0;
    double ev_speed = 0.0;
    std::vector<double> queues;
    // Cell counts after the update plus the step's per-cell flows.
    std::vector<double> density;
    std::vector<double> inflow;
    std::vector<double> outflow;
    double delay_veh_s = 0.0;
    double exited = 0.0;
};

double queue_length(const Network& net, const SignalGates& gates, int node);
double reward(double delta_d, double queue_sum, bool arrived, const RewardWeights& w);

int fixed_time_phase(int t, int phase_steps);
int max_pressure_phase(const Network& net, int node);

class CorridorEnv {
public:
    explicit CorridorEnv(Scenario sc);

    std::vector<float> reset(uint64_t seed);
    StepResult step(const ActionVec& action);

    const Scenario& scenario() const { return sc_; }
    const Network& network() const { return net_; }
    Network& network_mut() { return net_; }
    const EvRoute& route() const { return route_; }
    const EvState& ev() const { return ev_; }
    const SignalGates& gates() const { return gates_; }
    int t() const { return t_; }
    bool done() const { return done_; }
    uint64_t seed() const { return seed_; }

    int k_slots() const { return sc_.grid.rows + sc_.grid.cols - 1; }
    int obs_dim() const { return k_slots() * kNodeFeatures; }

    std::vector<float> observation() const;
    // Local features of every intersection, row-major [node][feature].
    std::vector<float> node_observation() const;
    EvFeatures features() const;

    // Phase each corridor intersection would need for the EV to pass.
    const std::vector<uint8_t>& ev_phases() const { return route_.ev_phase; }
    double ev_remaining_m() const { return ev_remaining(ev_, route_); }
    // Per route node: alpha * remaining distance inside the node's approach segment
    // plus lambda while the node has not been passed.
    std::vector<double> local_ideal() const;

    EpisodeMetrics metrics() const;
    void set_record_trace(bool on) { record_ = on; }
    const std::vector<StepRecord>& trace() const { return trace_; }

private:
    void set_background_gates(int t);

    Scenario sc_;
    Network net_;
    EvRoute route_;
    EvState ev_;
    SignalGates gates_;
    Rng rng_;
    uint64_t seed_ = 0;
    int t_ = 0;
    bool done_ = true;
    std::vector<char> on_route_;
    std::vector<int> cell_node_;

    double total_delay_ = 0.0;
    double throughput_ = 0.0;
    double clipped_ = 0.0;
    double return_ = 0.0;
    double cost_ = 0.0;
    std::vector<double> node_delay_;

    bool record_ = false;
    std::vector<StepRecord> trace_;
};

void write_trace_jsonl(std::ostream& out, const std::vector<StepRecord>& trace);

}  // namespace evc
