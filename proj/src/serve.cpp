#include "evcorridor/serve.hpp"

#include <numeric>
#include <stdexcept>

#include "evcorridor/serialize.hpp"

namespace evc {

ServeSession::ServeSession(ServeConfig cfg, Model<float>* model)
    : cfg_(std::move(cfg)), model_(model), env_(cfg_.scenario), rate_(cfg_.rate) {
    if (!(rate_ > 0.0)) throw std::invalid_argument("snapshot rate must be positive");
    if (model_) ctl_ = std::make_unique<DtController>(*model_, cfg_.scenario.weights);
    else policy_ = make_policy(cfg_.fallback);
    reset_episode(cfg_.seed);
}

void ServeSession::reset_episode(uint64_t seed) {
    seed_ = seed;
    env_.reset(seed);
    running_ = false;
    pending_.reset();
    last_reward_ = last_cost_ = last_queue_ = 0.0;
    if (ctl_) ctl_->begin(env_, cfg_.targets);
    else policy_->reset(seed);
    apply_targets(cfg_.targets);
}

void ServeSession::apply_targets(const Targets& tg) {
    targets_ = tg;
    if (ctl_) {
        ctl_->retarget(env_, tg);
        return;
    }
    const auto& w = cfg_.scenario.weights;
    anchor_ = tg.g_star + w.alpha * env_.ev_remaining_m() + w.lambda;
    rtg_ = anchor_;
    accrued_ = 0.0;
    ctg_ = w.beta > 0.0 ? -tg.c_star.value_or(kDefaultCostTarget) / w.beta : 0.0;
}

wire::ScenarioInfo ServeSession::scenario_info() const {
    wire::ScenarioInfo s;
    const auto& net = env_.network();
    const auto& r = env_.route();
    s.scenario = scenario_to_json(cfg_.scenario);
    s.seed = seed_;
    s.rows = net.spec.rows;
    s.cols = net.spec.cols;
    s.cells_per_link = net.params.cells_per_link;
    s.num_cells = net.num_cells();
    s.n_max = net.params.n_max;
    s.cell_length_m = net.spec.cell_length();
    s.route_length_m = r.length;
    s.route = r.nodes;
    s.ev_phase.assign(r.ev_phase.begin(), r.ev_phase.end());
    s.node_pos_m = r.node_pos;
    for (const auto& l : net.links) s.links.push_back({l.from, l.to, static_cast<int>(l.heading), l.first_cell});
    return s;
}

wire::Snapshot ServeSession::snapshot() const {
    wire::Snapshot s;
    const auto& net = env_.network();
    const auto& ev = env_.ev();
    auto m = env_.metrics();
    s.t = env_.t();
    s.time_s = env_.t() * net.spec.dt;
    s.densities = net.n;
    s.phases.assign(env_.gates().phase.begin(), env_.gates().phase.end());
    s.ev_pos_m = ev.pos;
    s.ev_speed = ev.speed;
    s.ev_arrived = ev.arrived;
    s.ev_stops = ev.stop_count;
    if (ctl_) {
        s.rtg = ctl_->rtg();
        s.rtg_anchor = ctl_->rtg_anchor();
        s.accrued = ctl_->accrued_since_target();
        if (model_->config().variant == Variant::CDT) s.ctg = ctl_->ctg();
    } else {
        s.rtg = rtg_;
        s.rtg_anchor = anchor_;
        s.accrued = accrued_;
    }
    s.g_star = targets_.g_star;
    s.c_star = targets_.c_star;
    s.reward = last_reward_;
    s.cost = last_cost_;
    s.episode_return = m.episode_return;
    s.queue_total = last_queue_;
    s.throughput = m.throughput;
    if (m.acd_valid) s.acd = m.acd_s_per_veh;
    s.done = env_.done();
    return s;
}

ServeSession::Reply ServeSession::on_connect() {
    Reply r;
    r.lines.push_back(wire::serialize(wire::Hello{wire::kProtocolVersion, "evcorridor",
                                                  model_ ? variant_name(model_->config().variant) : ""}));
    r.lines.push_back(wire::serialize(scenario_info()));
    r.lines.push_back(wire::serialize(snapshot()));
    return r;
}

void ServeSession::on_disconnect() { running_ = false; }

ServeSession::Reply ServeSession::on_message(const std::string& line) {
    Reply r;
    wire::Message msg;
    try {
        msg = wire::parse(line);
    } catch (const std::exception& e) {
        r.lines.push_back(wire::serialize(wire::Error{e.what()}));
        return r;
    }
    if (auto* st = std::get_if<wire::SetTarget>(&msg)) {
        // Applied right before the next inference step.
        pending_ = Targets{st->g_star, st->c_star};
    } else if (auto* c = std::get_if<wire::Control>(&msg)) {
        switch (c->kind) {
            case wire::ControlKind::Start:
            case wire::ControlKind::Resume:
                running_ = !env_.done();
                break;
            case wire::ControlKind::Pause:
                running_ = false;
                break;
            case wire::ControlKind::Reset:
                reset_episode(c->seed.value_or(seed_));
                r.lines.push_back(wire::serialize(scenario_info()));
                r.lines.push_back(wire::serialize(snapshot()));
                break;
            case wire::ControlKind::Rate:
                rate_ = *c->rate;
                break;
        }
    } else if (std::holds_alternative<wire::Bye>(msg)) {
        running_ = false;
        r.lines.push_back(wire::serialize(wire::Bye{"client closed"}));
        r.close = true;
    } else if (std::holds_alternative<wire::Hello>(msg)) {
        // Nothing to negotiate yet.
    } else {
        r.lines.push_back(wire::serialize(wire::Error{"unexpected message type \"" + wire::type_name(msg) + "\""}));
    }
    return r;
}

ServeSession::Reply ServeSession::tick() {
    Reply r;
    if (!running_ || env_.done()) return r;
    if (pending_) {
        apply_targets(*pending_);
        pending_.reset();
    }
    ActionVec a = ctl_ ? ctl_->act(env_) : policy_->act(env_);
    StepResult res = env_.step(a);
    if (ctl_) {
        ctl_->observe(res);
    } else {
        rtg_ -= res.reward;
        ctg_ -= res.cost;
        accrued_ += res.reward;
    }
    last_reward_ = res.reward;
    last_cost_ = res.cost;
    last_queue_ = std::accumulate(res.info.queues.begin(), res.info.queues.end(), 0.0);
    r.lines.push_back(wire::serialize(snapshot()));
    if (env_.done()) {
        running_ = false;
        auto m = env_.metrics();
        wire::Metrics wm;
        wm.ett_s = m.ett_s;
        wm.arrived = m.arrived;
        if (m.acd_valid) wm.acd = m.acd_s_per_veh;
        wm.throughput = m.throughput;
        wm.ev_stops = m.ev_stops;
        wm.intersection_delay_s = m.intersection_delay_s;
        wm.clipped_entries = m.clipped_entries;
        wm.steps = m.steps;
        wm.episode_return = m.episode_return;
        r.lines.push_back(wire::serialize(wm));
    }
    return r;
}

}  // namespace evc
