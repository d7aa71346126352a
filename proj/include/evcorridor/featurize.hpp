#pragma once

#include <cstdint>
#include <vector>

#include "evcorridor/dataset.hpp"
#include "evcorridor/env.hpp"
#include "evcorridor/model.hpp"

namespace evc {

// Route-relative frame. Phase ids at a corridor node are XOR-ed with the node's EV
// phase so that "let the EV through" is always phase 0; for EW-bound nodes the four
// approach densities are reordered to (E, W, N, S). Off-corridor nodes keep key 0.
struct CorridorFrame {
    int num_nodes = 0;
    int k_slots = 0;
    std::vector<int> route_nodes;
    std::vector<uint8_t> ev_phase;
    std::vector<uint8_t> key;  // per network node
    std::vector<std::vector<int>> neighbors;  // self first, then grid neighbours

    int K() const { return static_cast<int>(route_nodes.size()); }
};

CorridorFrame make_frame(const Network& net, int k_slots, const std::vector<int>& route_nodes,
                         const std::vector<uint8_t>& ev_phase);
CorridorFrame make_frame(const CorridorEnv& env);

inline uint8_t relative_phase(uint8_t phase, uint8_t key) { return phase ^ key; }

// One node's kNodeFeatures vector mapped into the frame given by key.
void relabel_node(const float* in, float* out, uint8_t key);

// One decision step in reward units, before scaling.
struct StepTokens {
    int t = 0;
    float rtg = 0.0f;        // return-to-go in excess of alpha * remaining + lambda
    float ctg = 0.0f;        // -beta * cost-to-go
    float cost = 0.0f;       // this step's queue cost
    std::vector<float> node_obs;   // num_nodes x kNodeFeatures, absolute frame
    std::vector<uint8_t> action;   // K absolute phases; empty while undecided
    std::vector<float> local_rtg;  // K, excess over each agent's ideal local return
};

StepTokens trajectory_step(const Trajectory& tr, int t, const RewardWeights& w);

// Appends one batch row holding `steps` (at most C, oldest first) left-padded to C.
void append_window(TokenBatch& batch, const ModelConfig& cfg, const CorridorFrame& frame,
                   const std::vector<StepTokens>& steps, int C);

void begin_batch(TokenBatch& batch, const ModelConfig& cfg, const CorridorFrame& any_frame, int C);

}  // namespace evc
