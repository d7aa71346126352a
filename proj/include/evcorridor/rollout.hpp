#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "evcorridor/dataset.hpp"
#include "evcorridor/featurize.hpp"
#include "evcorridor/model.hpp"

namespace evc {

// Cost budget used when a CDT rollout gets no explicit C*, in reward units.
constexpr double kDefaultCostTarget = -5.0;

// G* is the target return in excess of the distance and arrival terms that any arriving
// episode collects, so G* = 0 asks for an arrival with no queue penalty.
struct Targets {
    double g_star = 0.0;
    std::optional<double> c_star;
};

// Knob updates from another thread, drained between control steps.
class KnobChannel {
public:
    void push(const Targets& t);
    // Latest pending update, if any; older pending ones are dropped.
    std::optional<Targets> poll();

private:
    std::mutex mu_;
    std::deque<Targets> q_;
};

class DtController {
public:
    DtController(Model<float>& model, const RewardWeights& w);

    void begin(const CorridorEnv& env, const Targets& tg);
    // Resets the running targets: R-hat = G* + alpha * remaining + lambda, C-hat = -C*/beta.
    void retarget(const CorridorEnv& env, const Targets& tg);
    ActionVec act(const CorridorEnv& env);
    void observe(const StepResult& r);

    const Targets& targets() const { return tg_; }
    double rtg() const { return rtg_; }
    double ctg() const { return ctg_; }
    double rtg_anchor() const { return anchor_; }
    double accrued_since_target() const { return accrued_; }
    const std::vector<double>& local_rtg() const { return local_rtg_; }
    // Relative-frame logits of the last decision, K x P.
    const nn::Mat<float>& last_logits() const { return last_logits_; }

private:
    Model<float>& model_;
    RewardWeights w_;
    CorridorFrame frame_;
    Targets tg_;
    double rtg_ = 0.0, ctg_ = 0.0, anchor_ = 0.0, accrued_ = 0.0;
    std::vector<double> local_rtg_;
    std::vector<StepTokens> hist_;
    nn::Mat<float> last_logits_;
};

struct RolloutOptions {
    Targets targets;
    KnobChannel* knobs = nullptr;
    bool record_trace = false;
    std::function<void(const CorridorEnv&, const DtController&, const StepResult&)> on_step;
};

struct RolloutResult {
    Trajectory traj;
    EpisodeMetrics metrics;
    std::vector<double> rtg_trace;  // R-hat before each step
    std::vector<StepRecord> trace;
};

RolloutResult rollout(Model<float>& model, CorridorEnv& env, uint64_t seed, const RolloutOptions& opt);

}  // namespace evc
