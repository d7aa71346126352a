#include "evcorridor/rollout.hpp"

#include <stdexcept>

namespace evc {

void KnobChannel::push(const Targets& t) {
    std::lock_guard<std::mutex> lk(mu_);
    q_.push_back(t);
}

std::optional<Targets> KnobChannel::poll() {
    std::lock_guard<std::mutex> lk(mu_);
    if (q_.empty()) return std::nullopt;
    Targets t = q_.back();
    q_.clear();
    return t;
}

DtController::DtController(Model<float>& model, const RewardWeights& w) : model_(model), w_(w) {}

void DtController::begin(const CorridorEnv& env, const Targets& tg) {
    frame_ = make_frame(env);
    if (frame_.k_slots != model_.config().k_slots || frame_.num_nodes != model_.config().num_nodes)
        throw std::invalid_argument("scenario does not match the model's corridor size");
    hist_.clear();
    retarget(env, tg);
}

void DtController::retarget(const CorridorEnv& env, const Targets& tg) {
    tg_ = tg;
    anchor_ = tg.g_star + w_.alpha * env.ev_remaining_m() + w_.lambda;
    rtg_ = anchor_;
    accrued_ = 0.0;
    const double cstar = tg.c_star.value_or(kDefaultCostTarget);
    ctg_ = w_.beta > 0.0 ? -cstar / w_.beta : 0.0;
    const auto ideal = env.local_ideal();
    const int K = static_cast<int>(ideal.size());
    local_rtg_.resize(K);
    for (int k = 0; k < K; ++k) local_rtg_[k] = tg.g_star / K + ideal[k];
}

ActionVec DtController::act(const CorridorEnv& env) {
    const ModelConfig& cfg = model_.config();
    const int K = frame_.K();
    const int P = cfg.phases;
    StepTokens cur;
    cur.t = env.t();
    cur.rtg = static_cast<float>(rtg_ - w_.alpha * env.ev_remaining_m() - w_.lambda);
    cur.ctg = static_cast<float>(-w_.beta * ctg_);
    cur.node_obs = env.node_observation();
    const auto ideal = env.local_ideal();
    cur.local_rtg.resize(K);
    for (int k = 0; k < K; ++k) cur.local_rtg[k] = static_cast<float>(local_rtg_[k] - ideal[k]);

    std::vector<StepTokens> win;
    const int keep = std::min<int>(static_cast<int>(hist_.size()), cfg.context - 1);
    win.insert(win.end(), hist_.end() - keep, hist_.end());
    win.push_back(cur);
    const int C = static_cast<int>(win.size());

    TokenBatch bt;
    begin_batch(bt, cfg, frame_, C);
    append_window(bt, cfg, frame_, win, C);
    auto out = model_.forward(bt, nn::Context{});

    last_logits_.resize(K, P);
    ActionVec a(K);
    for (int k = 0; k < K; ++k) {
        const Eigen::Index row = cfg.variant == Variant::MADT ? static_cast<Eigen::Index>(k) * C + C - 1 : C - 1;
        const Eigen::Index col = cfg.variant == Variant::MADT ? 0 : static_cast<Eigen::Index>(k) * P;
        auto z = out.logits.row(row).segment(col, P);
        last_logits_.row(k) = z;
        Eigen::Index best;
        z.maxCoeff(&best);
        a[k] = relative_phase(static_cast<uint8_t>(best), frame_.ev_phase[k]);
    }
    cur.action = a;
    hist_.push_back(std::move(cur));
    return a;
}

void DtController::observe(const StepResult& r) {
    rtg_ -= r.reward;
    ctg_ -= r.cost;
    accrued_ += r.reward;
    for (size_t k = 0; k < local_rtg_.size() && k < r.info.local_rewards.size(); ++k)
        local_rtg_[k] -= r.info.local_rewards[k];
}

RolloutResult rollout(Model<float>& model, CorridorEnv& env, uint64_t seed, const RolloutOptions& opt) {
    RolloutResult res;
    env.set_record_trace(opt.record_trace);
    env.reset(seed);
    DtController ctl(model, env.scenario().weights);
    ctl.begin(env, opt.targets);

    Trajectory& tr = res.traj;
    tr.seed = seed;
    tr.scenario_id = env.scenario().id;
    tr.num_nodes = env.network().num_nodes();
    tr.k_slots = env.k_slots();
    tr.route_nodes.assign(env.route().nodes.begin(), env.route().nodes.end());
    tr.ev_phase = env.route().ev_phase;
    while (!env.done()) {
        if (opt.knobs)
            if (auto t = opt.knobs->poll()) ctl.retarget(env, *t);
        auto obs = env.node_observation();
        tr.node_obs.insert(tr.node_obs.end(), obs.begin(), obs.end());
        tr.ev_remaining.push_back(env.ev_remaining_m());
        auto ideal = env.local_ideal();
        tr.local_ideal.insert(tr.local_ideal.end(), ideal.begin(), ideal.end());
        res.rtg_trace.push_back(ctl.rtg());

        ActionVec a = ctl.act(env);
        StepResult r = env.step(a);
        ctl.observe(r);
        tr.actions.insert(tr.actions.end(), a.begin(), a.end());
        tr.rewards.push_back(r.reward);
        tr.costs.push_back(r.cost);
        tr.local_rewards.insert(tr.local_rewards.end(), r.info.local_rewards.begin(), r.info.local_rewards.end());
        if (opt.on_step) opt.on_step(env, ctl, r);
    }
    tr.rtg = compute_rtg(tr.rewards);
    tr.ctg = compute_ctg(tr.costs);
    res.metrics = env.metrics();
    tr.episode_return = tr.rtg.empty() ? 0.0 : tr.rtg.front();
    tr.ett_s = res.metrics.ett_s;
    tr.acd = res.metrics.acd_s_per_veh;
    tr.arrived = res.metrics.arrived;
    tr.ev_stops = res.metrics.ev_stops;
    tr.throughput = res.metrics.throughput;
    if (opt.record_trace) res.trace = env.trace();
    return res;
}

}  // namespace evc
