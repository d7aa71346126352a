#pragma once

#include <memory>
#include <string>
#include <vector>

#include "evcorridor/env.hpp"

namespace evc {

enum class PolicyKind { FixedTimeEVP, GreedyPreempt, MaxPressure, UniformRandom, NoisyExpert };

std::string policy_name(PolicyKind k);
PolicyKind parse_policy(const std::string& name);

// Round-robin plan of phase_steps per phase; intersections whose EV flag is set
// show the EV phase instead.
ActionVec fixed_time_evp(int t, const std::vector<uint8_t>& ev_flags,
                         const std::vector<uint8_t>& ev_phase, int phase_steps = 4);

ActionVec greedy_preempt(const EvRoute& route);

int max_pressure(const Network& net, int node);

ActionVec uniform_random(int k, Rng& rng);

// replaced, when given, receives 1 where the expert action was resampled.
ActionVec noisy_expert(const ActionVec& expert, double eps, Rng& rng,
                       std::vector<uint8_t>* replaced = nullptr);

class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset(uint64_t /*seed*/) {}
    virtual ActionVec act(const CorridorEnv& env) = 0;
    virtual PolicyKind kind() const = 0;
};

std::unique_ptr<Policy> make_policy(PolicyKind kind, double eps = 0.3);

}  // namespace evc
