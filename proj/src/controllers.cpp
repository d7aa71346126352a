#include "evcorridor/controllers.hpp"

#include <stdexcept>

namespace evc {

std::string policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::FixedTimeEVP: return "ft-evp";
        case PolicyKind::GreedyPreempt: return "greedy";
        case PolicyKind::MaxPressure: return "max-pressure";
        case PolicyKind::UniformRandom: return "random";
        case PolicyKind::NoisyExpert: return "noisy";
    }
    return "?";
}

PolicyKind parse_policy(const std::string& name) {
    for (auto k : {PolicyKind::FixedTimeEVP, PolicyKind::GreedyPreempt, PolicyKind::MaxPressure,
                   PolicyKind::UniformRandom, PolicyKind::NoisyExpert})
        if (policy_name(k) == name) return k;
    throw std::invalid_argument("unknown policy: " + name);
}

ActionVec fixed_time_evp(int t, const std::vector<uint8_t>& ev_flags,
                         const std::vector<uint8_t>& ev_phase, int phase_steps) {
    ActionVec a(ev_phase.size());
    const auto base = static_cast<uint8_t>(fixed_time_phase(t, phase_steps));
    for (size_t i = 0; i < a.size(); ++i) a[i] = ev_flags[i] ? ev_phase[i] : base;
    return a;
}

ActionVec greedy_preempt(const EvRoute& route) { return route.ev_phase; }

int max_pressure(const Network& net, int node) { return max_pressure_phase(net, node); }

ActionVec uniform_random(int k, Rng& rng) {
    std::uniform_int_distribution<int> ph(0, kPhases - 1);
    ActionVec a(k);
    for (auto& x : a) x = static_cast<uint8_t>(ph(rng));
    return a;
}

ActionVec noisy_expert(const ActionVec& expert, double eps, Rng& rng, std::vector<uint8_t>* replaced) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("epsilon must lie in [0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> ph(0, kPhases - 1);
    ActionVec a = expert;
    if (replaced) replaced->assign(a.size(), 0);
    for (size_t i = 0; i < a.size(); ++i) {
        if (u(rng) < eps) {
            a[i] = static_cast<uint8_t>(ph(rng));
            if (replaced) (*replaced)[i] = 1;
        }
    }
    return a;
}

namespace {

class FtEvp final : public Policy {
public:
    ActionVec act(const CorridorEnv& env) override {
        return fixed_time_evp(env.t(), env.features().arrival_flag, env.route().ev_phase,
                              env.scenario().ft_phase_steps);
    }
    PolicyKind kind() const override { return PolicyKind::FixedTimeEVP; }
};

class Greedy final : public Policy {
public:
    ActionVec act(const CorridorEnv& env) override { return greedy_preempt(env.route()); }
    PolicyKind kind() const override { return PolicyKind::GreedyPreempt; }
};

class MaxPressure final : public Policy {
public:
    ActionVec act(const CorridorEnv& env) override {
        ActionVec a;
        for (int v : env.route().nodes) a.push_back(static_cast<uint8_t>(max_pressure(env.network(), v)));
        return a;
    }
    PolicyKind kind() const override { return PolicyKind::MaxPressure; }
};

class RandomPolicy final : public Policy {
public:
    void reset(uint64_t seed) override { rng_.seed(seed ^ 0x5eed5eedULL); }
    ActionVec act(const CorridorEnv& env) override { return uniform_random(env.route().K(), rng_); }
    PolicyKind kind() const override { return PolicyKind::UniformRandom; }

private:
    Rng rng_{1};
};

class Noisy final : public Policy {
public:
    explicit Noisy(double eps) : eps_(eps) {
        if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("epsilon must lie in [0, 1]");
    }
    void reset(uint64_t seed) override { rng_.seed(seed ^ 0x0a15eULL); }
    ActionVec act(const CorridorEnv& env) override {
        return noisy_expert(greedy_preempt(env.route()), eps_, rng_);
    }
    PolicyKind kind() const override { return PolicyKind::NoisyExpert; }

private:
    double eps_;
    Rng rng_{1};
};

}  // namespace

std::unique_ptr<Policy> make_policy(PolicyKind kind, double eps) {
    switch (kind) {
        case PolicyKind::FixedTimeEVP: return std::make_unique<FtEvp>();
        case PolicyKind::GreedyPreempt: return std::make_unique<Greedy>();
        case PolicyKind::MaxPressure: return std::make_unique<MaxPressure>();
        case PolicyKind::UniformRandom: return std::make_unique<RandomPolicy>();
        case PolicyKind::NoisyExpert: return std::make_unique<Noisy>(eps);
    }
    throw std::invalid_argument("unknown policy kind");
}

}  // namespace evc
