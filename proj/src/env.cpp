#include "evcorridor/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace evc {

double queue_length(const Network& net, const SignalGates& gates, int node) {
    double q = 0.0;
    for (int mi : net.nodes[node].movements) {
        const auto& m = net.movements[mi];
        if (!gates.permits(node, m.phase)) q += m.ratio * net.n[m.from_cell];
    }
    return q;
}

double reward(double delta_d, double queue_sum, bool arrived, const RewardWeights& w) {
    return w.alpha * delta_d - w.beta * queue_sum + (arrived ? w.lambda : 0.0);
}

int fixed_time_phase(int t, int phase_steps) {
    int period = kPhases * phase_steps;
    int m = ((t % period) + period) % period;
    return m / phase_steps;
}

int max_pressure_phase(const Network& net, int node) {
    double pressure[kPhases] = {0, 0, 0, 0};
    for (int mi : net.nodes[node].movements) {
        const auto& m = net.movements[mi];
        double down = m.to_cell >= 0 ? net.n[m.to_cell] : 0.0;
        pressure[m.phase] += net.n[m.from_cell] - down;
    }
    int best = 0;
    for (int p = 1; p < kPhases; ++p)
        if (pressure[p] > pressure[best]) best = p;
    return best;
}

CorridorEnv::CorridorEnv(Scenario sc) : sc_(std::move(sc)), net_(build_grid(sc_.grid)) {
    if (sc_.t_max < 1) throw std::invalid_argument("t_max must be positive");
    if (sc_.warmup_steps < 0) throw std::invalid_argument("warmup must be non-negative");
    if (sc_.ft_phase_steps < 1) throw std::invalid_argument("phase duration must be positive");
    if (sc_.min_manhattan < 0) sc_.min_manhattan = default_min_manhattan(sc_.grid);
    gates_.phase.assign(net_.num_nodes(), 0);
    cell_node_.resize(net_.num_cells());
    for (int c = 0; c < net_.num_cells(); ++c) cell_node_[c] = net_.links[net_.cell_link[c]].to;
}

void CorridorEnv::set_background_gates(int t) {
    for (int v = 0; v < net_.num_nodes(); ++v) {
        if (!on_route_.empty() && on_route_[v]) continue;
        gates_.phase[v] = static_cast<uint8_t>(sc_.background == BackgroundControl::MaxPressure
                                                   ? max_pressure_phase(net_, v)
                                                   : fixed_time_phase(t, sc_.ft_phase_steps));
    }
}

std::vector<float> CorridorEnv::reset(uint64_t seed) {
    seed_ = seed;
    rng_.seed(seed);
    net_.clear();
    route_ = sc_.fixed_route.empty() ? sample_route(net_, rng_, sc_.min_manhattan)
                                     : make_route(net_, sc_.fixed_route);
    on_route_.assign(net_.num_nodes(), 0);

    for (int t = -sc_.warmup_steps; t < 0; ++t) {
        set_background_gates(t);
        evc::step(net_, gates_, rng_);
    }
    for (int v : route_.nodes) on_route_[v] = 1;

    ev_ = ev_dispatch(route_, net_.spec.v_f, 0.0);
    t_ = 0;
    done_ = false;
    total_delay_ = throughput_ = clipped_ = return_ = cost_ = 0.0;
    node_delay_.assign(net_.num_nodes(), 0.0);
    trace_.clear();
    return observation();
}

EvFeatures CorridorEnv::features() const {
    return ev_features(ev_, route_, net_.spec.v_f, sc_.horizon_cells);
}

std::vector<float> CorridorEnv::node_observation() const {
    const int V = net_.num_nodes();
    std::vector<float> out(static_cast<size_t>(V) * kNodeFeatures, 0.0f);
    EvFeatures f = features();
    std::vector<double> delta(V, 1.0);
    for (int i = 0; i < route_.K(); ++i) delta[route_.nodes[i]] = f.delta[i];
    const float tbar = static_cast<float>(std::min(t_, sc_.t_max)) / static_cast<float>(sc_.t_max);
    for (int v = 0; v < V; ++v) {
        float* o = &out[static_cast<size_t>(v) * kNodeFeatures];
        o[gates_.phase[v]] = 1.0f;
        for (int side = 0; side < 4; ++side) {
            int l = net_.nodes[v].in_link[side];
            if (l >= 0) o[kPhases + side] = static_cast<float>(net_.n[net_.last_cell(l)] / net_.params.n_max);
        }
        o[kPhases + 4] = static_cast<float>(delta[v]);
        o[kPhases + 5] = tbar;
    }
    return out;
}

std::vector<float> CorridorEnv::observation() const {
    std::vector<float> nodes = node_observation();
    std::vector<float> out(static_cast<size_t>(obs_dim()), 0.0f);
    for (int i = 0; i < route_.K(); ++i)
        std::copy_n(&nodes[static_cast<size_t>(route_.nodes[i]) * kNodeFeatures], kNodeFeatures,
                    &out[static_cast<size_t>(i) * kNodeFeatures]);
    return out;
}

std::vector<double> CorridorEnv::local_ideal() const {
    const int K = route_.K();
    std::vector<double> out(K);
    for (int i = 0; i < K; ++i) {
        double seg_lo = i == 0 ? 0.0 : route_.node_pos[i - 1];
        double rem = std::clamp(route_.node_pos[i] - std::max(ev_.pos, seg_lo), 0.0,
                                route_.node_pos[i] - seg_lo);
        bool passed = ev_.dispatched ? ev_.passed[i] != 0 : false;
        out[i] = sc_.weights.alpha * rem + (passed ? 0.0 : sc_.weights.lambda);
    }
    return out;
}

StepResult CorridorEnv::step(const ActionVec& action) {
    if (done_) throw std::logic_error("step() on a finished episode");
    if (static_cast<int>(action.size()) != route_.K())
        throw std::invalid_argument("action length " + std::to_string(action.size()) +
                                    " does not match corridor size " + std::to_string(route_.K()));
    for (int i = 0; i < route_.K(); ++i) {
        if (action[i] >= kPhases) throw std::invalid_argument("phase id out of range");
        gates_.phase[route_.nodes[i]] = action[i];
    }
    set_background_gates(t_);

    const double pos0 = ev_.pos;
    std::vector<uint8_t> passed0 = ev_.passed;
    EvMove mv = ev_step(ev_, route_, net_, gates_, (t_ + 1) * net_.spec.dt);
    if (mv.stopped) net_.extra_occupancy[mv.occupied_cell] += 1.0;
    StepStats st = evc::step(net_, gates_, rng_);

    StepResult res;
    auto& info = res.info;
    info.exited = st.exited;
    info.injected = st.injected;
    info.dropped = st.dropped;
    info.delay_veh_s = st.delay_veh_s;
    info.ev_speed = ev_.speed;
    info.ev_advance = mv.advance;

    for (int c = 0; c < net_.num_cells(); ++c)
        node_delay_[cell_node_[c]] += (net_.n[c] - net_.inflow[c]) * net_.spec.dt;
    total_delay_ += st.delay_veh_s;
    throughput_ += st.exited;
    clipped_ += st.dropped;

    const int V = net_.num_nodes();
    info.queues.resize(V);
    double qsum = 0.0;
    for (int v = 0; v < V; ++v) {
        info.queues[v] = queue_length(net_, gates_, v);
        qsum += info.queues[v];
    }
    const auto& w = sc_.weights;
    res.cost = qsum;
    res.reward = reward(mv.advance, qsum, ev_.arrived, w);

    const int K = route_.K();
    info.local_rewards.resize(K);
    const double pos1 = ev_.pos;
    for (int i = 0; i < K; ++i) {
        double lo = i == 0 ? 0.0 : route_.node_pos[i - 1];
        double hi = route_.node_pos[i];
        double dd = std::max(0.0, std::min(pos1, hi) - std::max(pos0, lo));
        bool passes = ev_.passed[i] && !passed0[i];
        info.local_rewards[i] = reward(dd, info.queues[route_.nodes[i]], passes, w);
    }

    return_ += res.reward;
    cost_ += res.cost;

    if (record_) {
        StepRecord r;
        r.t = t_;
        r.action = action;
        r.phases = gates_.phase;
        r.reward = res.reward;
        r.cost = res.cost;
        r.ev_pos = ev_.pos;
        r.ev_speed = ev_.speed;
        r.queues = info.queues;
        r.density = net_.n;
        r.inflow = net_.inflow;
        r.outflow = net_.outflow;
        r.delay_veh_s = st.delay_veh_s;
        r.exited = st.exited;
        trace_.push_back(std::move(r));
    }

    ++t_;
    done_ = ev_.arrived || t_ > sc_.t_max;
    res.done = done_;
    res.observation = observation();
    return res;
}

EpisodeMetrics CorridorEnv::metrics() const {
    EpisodeMetrics m;
    m.arrived = ev_.arrived;
    m.ett_s = ev_.arrived ? ev_.arrival_time - ev_.dispatch_time : sc_.t_max * net_.spec.dt;
    m.throughput = throughput_;
    m.total_delay_veh_s = total_delay_;
    m.acd_valid = throughput_ > 0.0;
    m.acd_s_per_veh = m.acd_valid ? total_delay_ / throughput_ : 0.0;
    m.ev_stops = ev_.stop_count;
    m.intersection_delay_s = node_delay_;
    m.clipped_entries = clipped_;
    m.steps = t_;
    m.episode_return = return_;
    m.episode_cost = cost_;
    return m;
}

void write_trace_jsonl(std::ostream& out, const std::vector<StepRecord>& trace) {
    for (const auto& r : trace) {
        nlohmann::json j;
        j["t"] = r.t;
        j["action"] = r.action;
        j["reward"] = r.reward;
        j["cost"] = r.cost;
        j["ev_pos"] = r.ev_pos;
        j["ev_speed"] = r.ev_speed;
        j["queues"] = r.queues;
        j["phases"] = r.phases;
        out << j.dump() << '\n';
    }
}

}  // namespace evc
