#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evcorridor/controllers.hpp"
#include "evcorridor/env.hpp"
#include "evcorridor/rollout.hpp"
#include "evcorridor/wire.hpp"

namespace evc {

struct ServeConfig {
    Scenario scenario;
    uint64_t seed = 0;
    double rate = 2.0;  // control steps per wall-clock second
    Targets targets;
    PolicyKind fallback = PolicyKind::FixedTimeEVP;  // used when no model is loaded
};

// Transport-agnostic live episode. The owner feeds incoming text lines through
// on_message() and calls tick() on its own clock; both must run on one thread, which
// is what keeps knob and control updates between control steps.
class ServeSession {
public:
    ServeSession(ServeConfig cfg, Model<float>* model);

    struct Reply {
        std::vector<std::string> lines;
        bool close = false;
    };

    // hello, scenario and the current snapshot.
    Reply on_connect();
    // The episode stays where it is, paused.
    void on_disconnect();
    Reply on_message(const std::string& line);
    // One control step when running; snapshot, plus metrics when the episode ends.
    Reply tick();

    bool running() const { return running_; }
    double rate() const { return rate_; }
    int t() const { return env_.t(); }
    const CorridorEnv& env() const { return env_; }

    wire::Snapshot snapshot() const;
    wire::ScenarioInfo scenario_info() const;

private:
    void reset_episode(uint64_t seed);
    void apply_targets(const Targets& tg);

    ServeConfig cfg_;
    Model<float>* model_;
    CorridorEnv env_;
    std::unique_ptr<DtController> ctl_;
    std::unique_ptr<Policy> policy_;
    uint64_t seed_ = 0;
    bool running_ = false;
    double rate_ = 2.0;
    std::optional<Targets> pending_;
    Targets targets_;

    // Mirrors the controller's bookkeeping when a baseline policy drives the episode.
    double rtg_ = 0.0, anchor_ = 0.0, accrued_ = 0.0, ctg_ = 0.0;
    double last_reward_ = 0.0, last_cost_ = 0.0, last_queue_ = 0.0;
};

}  // namespace evc
