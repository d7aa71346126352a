#include "evcorridor/featurize.hpp"

#include <stdexcept>

namespace evc {

CorridorFrame make_frame(const Network& net, int k_slots, const std::vector<int>& route_nodes,
                         const std::vector<uint8_t>& ev_phase) {
    if (route_nodes.size() != ev_phase.size()) throw std::invalid_argument("route/phase length mismatch");
    if (static_cast<int>(route_nodes.size()) > k_slots) throw std::invalid_argument("route longer than k_slots");
    CorridorFrame f;
    f.num_nodes = net.num_nodes();
    f.k_slots = k_slots;
    f.route_nodes = route_nodes;
    f.ev_phase = ev_phase;
    f.key.assign(f.num_nodes, 0);
    for (size_t i = 0; i < route_nodes.size(); ++i) f.key[route_nodes[i]] = ev_phase[i];
    f.neighbors.resize(f.num_nodes);
    for (int v = 0; v < f.num_nodes; ++v) {
        f.neighbors[v].push_back(v);
        for (int u : net.nodes[v].neighbors) f.neighbors[v].push_back(u);
    }
    return f;
}

CorridorFrame make_frame(const CorridorEnv& env) {
    return make_frame(env.network(), env.k_slots(), env.route().nodes, env.route().ev_phase);
}

void relabel_node(const float* in, float* out, uint8_t key) {
    for (int p = 0; p < kPhases; ++p) out[relative_phase(static_cast<uint8_t>(p), key)] = in[p];
    const float* d = in + kPhases;
    float* o = out + kPhases;
    if (key & 2) {
        o[0] = d[E];
        o[1] = d[W];
        o[2] = d[N];
        o[3] = d[S];
    } else {
        for (int s = 0; s < 4; ++s) o[s] = d[s];
    }
    for (int k = kPhases + 4; k < kNodeFeatures; ++k) out[k] = in[k];
}

StepTokens trajectory_step(const Trajectory& tr, int t, const RewardWeights& w) {
    const int K = tr.K();
    const size_t V = static_cast<size_t>(tr.num_nodes);
    StepTokens s;
    s.t = t;
    s.rtg = static_cast<float>(tr.rtg[t] - w.alpha * tr.ev_remaining[t] - w.lambda);
    s.ctg = static_cast<float>(-w.beta * tr.ctg[t]);
    s.cost = static_cast<float>(tr.costs[t]);
    s.node_obs.assign(tr.node_obs.begin() + t * V * kNodeFeatures,
                      tr.node_obs.begin() + (t + 1) * V * kNodeFeatures);
    s.action.assign(tr.actions.begin() + static_cast<size_t>(t) * K,
                    tr.actions.begin() + static_cast<size_t>(t + 1) * K);
    s.local_rtg.resize(K);
    const int T = tr.length();
    for (int k = 0; k < K; ++k) {
        double g = 0.0;
        for (int u = t; u < T; ++u) g += tr.local_rewards[static_cast<size_t>(u) * K + k];
        s.local_rtg[k] = static_cast<float>(g - tr.local_ideal[static_cast<size_t>(t) * K + k]);
    }
    return s;
}

void begin_batch(TokenBatch& batch, const ModelConfig& cfg, const CorridorFrame& frame, int C) {
    batch = TokenBatch{};
    batch.C = C;
    if (cfg.variant == Variant::MADT) batch.neighbors = frame.neighbors;
}

void append_window(TokenBatch& bt, const ModelConfig& cfg, const CorridorFrame& fr,
                   const std::vector<StepTokens>& steps, int C) {
    if (bt.C != C) throw std::invalid_argument("batch context mismatch");
    const int n = static_cast<int>(steps.size());
    if (n < 1 || n > C) throw std::invalid_argument("window must hold 1..C steps");
    const int K = fr.K();
    const int P = cfg.phases;
    const int F = kNodeFeatures;
    const int pad = C - n;
    const bool madt = cfg.variant == Variant::MADT;
    const float rs = static_cast<float>(1.0 / cfg.rtg_scale);
    const int b = bt.B++;

    for (int j = 0; j < C; ++j) {
        const StepTokens* s = j >= pad ? &steps[j - pad] : nullptr;
        bt.valid.push_back(s ? 1 : 0);
        bt.timesteps.push_back(s ? s->t : 0);
        if (madt) {
            const size_t off = bt.node_obs.size();
            bt.node_obs.resize(off + static_cast<size_t>(fr.num_nodes) * F, 0.0f);
            if (s)
                for (int v = 0; v < fr.num_nodes; ++v)
                    relabel_node(&s->node_obs[static_cast<size_t>(v) * F], &bt.node_obs[off + static_cast<size_t>(v) * F],
                                 fr.key[v]);
            continue;
        }
        bt.rtg.push_back(s ? s->rtg * rs : 0.0f);
        if (cfg.variant == Variant::CDT) {
            bt.ctg.push_back(s ? s->ctg * rs : 0.0f);
            bt.cost_target.push_back(s ? static_cast<float>(s->cost * cfg.cost_scale) : 0.0f);
        }
        size_t off = bt.states.size();
        bt.states.resize(off + static_cast<size_t>(cfg.k_slots) * F, 0.0f);
        off = bt.actions.size();
        bt.actions.resize(off + static_cast<size_t>(cfg.k_slots) * P, 0.0f);
        const bool undecided = s && s->action.empty();
        bt.placeholder.push_back(undecided ? 1 : 0);
        for (int k = 0; k < cfg.k_slots; ++k) {
            int tgt = -1;
            if (s && k < K) {
                const int v = fr.route_nodes[k];
                relabel_node(&s->node_obs[static_cast<size_t>(v) * F],
                             &bt.states[bt.states.size() - static_cast<size_t>(cfg.k_slots - k) * F], fr.key[v]);
                if (!undecided) {
                    tgt = relative_phase(s->action[k], fr.ev_phase[k]);
                    bt.actions[off + static_cast<size_t>(k) * P + tgt] = 1.0f;
                }
            }
            bt.targets.push_back(tgt);
        }
    }
    if (!madt) return;

    for (int k = 0; k < K; ++k) {
        bt.streams.push_back({b, fr.route_nodes[k], k});
        for (int j = 0; j < C; ++j) {
            const StepTokens* s = j >= pad ? &steps[j - pad] : nullptr;
            bt.rtg.push_back(s ? s->local_rtg[k] * rs : 0.0f);
            const size_t off = bt.actions.size();
            bt.actions.resize(off + P, 0.0f);
            const bool undecided = s && s->action.empty();
            bt.placeholder.push_back(undecided ? 1 : 0);
            int tgt = -1;
            if (s && !undecided) {
                tgt = relative_phase(s->action[k], fr.ev_phase[k]);
                bt.actions[off + tgt] = 1.0f;
            }
            bt.targets.push_back(tgt);
        }
    }
}

}  // namespace evc
