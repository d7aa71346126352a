#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evcorridor/controllers.hpp"
#include "evcorridor/env.hpp"

namespace evc {

struct Trajectory {
    PolicyKind policy = PolicyKind::GreedyPreempt;
    uint64_t seed = 0;
    std::string scenario_id;
    int num_nodes = 0;
    int k_slots = 0;
    std::vector<int32_t> route_nodes;
    std::vector<uint8_t> ev_phase;  // per route node

    std::vector<float> node_obs;        // T x num_nodes x kNodeFeatures
    std::vector<uint8_t> actions;       // T x K (absolute phase ids)
    std::vector<double> rewards;        // T
    std::vector<double> costs;          // T
    std::vector<double> ev_remaining;   // T, metres left before each step
    std::vector<double> local_rewards;  // T x K
    std::vector<double> local_ideal;    // T x K
    std::vector<double> rtg;            // T
    std::vector<double> ctg;            // T

    double episode_return = 0.0;
    double ett_s = 0.0;
    double acd = 0.0;
    bool arrived = false;
    int32_t ev_stops = 0;
    double throughput = 0.0;

    int length() const { return static_cast<int>(rewards.size()); }
    int K() const { return static_cast<int>(route_nodes.size()); }
};

std::vector<double> compute_rtg(const std::vector<double>& rewards);
// Same suffix sum; named separately for cost-to-go.
std::vector<double> compute_ctg(const std::vector<double>& costs);

struct MixSpec {
    double expert = 0.70;
    double random = 0.15;
    double noisy = 0.15;
    int episodes = 5000;
    uint64_t seed = 42;
    double noisy_eps = 0.3;

    void validate() const;
    // Episode counts in (expert, random, noisy) order.
    std::array<int, 3> counts() const;
};

struct PolicyStats {
    int count = 0;
    double return_mean = 0.0;
    double length_mean = 0.0;
    double ett_mean = 0.0;
};

struct DatasetStats {
    int episodes = 0;
    double length_mean = 0, length_std = 0, length_min = 0, length_max = 0;
    double return_mean = 0, return_std = 0, return_min = 0, return_max = 0;
    // Mean share of occupied bins (10 per dimension) over 5 seeded corridor-observation dims.
    double coverage = 0.0;
    std::map<std::string, PolicyStats> per_policy;
};

struct Dataset {
    int version = 1;
    Scenario scenario;
    MixSpec mix;
    std::vector<Trajectory> trajectories;
    DatasetStats stats;
};

uint64_t episode_seed(uint64_t base, uint64_t index);

Trajectory record_episode(CorridorEnv& env, Policy& policy, uint64_t seed);

Dataset collect(const MixSpec& mix, const Scenario& scenario,
                const std::function<void(int, int)>& progress = {});

DatasetStats dataset_stats(const std::vector<Trajectory>& trajs);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Percentiles with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

struct WindowRef {
    int traj = 0;
    int end = 0;  // last timestep in the window (inclusive)
};

class StratifiedSampler {
public:
    StratifiedSampler(const std::vector<Trajectory>& trajs, std::vector<int> indices, int batch_size,
                      uint64_t seed);

    std::vector<WindowRef> next();
    const std::array<double, 3>& boundaries() const { return bounds_; }
    const std::array<std::vector<int>, 4>& quartiles() const { return quart_; }
    int quartile_of(double ret) const;

private:
    const std::vector<Trajectory>& trajs_;
    int batch_;
    Rng rng_;
    std::array<double, 3> bounds_{};
    std::array<std::vector<int>, 4> quart_;
};

}  // namespace evc
