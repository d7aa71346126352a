#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evcorridor/controllers.hpp"
#include "evcorridor/dataset.hpp"
#include "evcorridor/featurize.hpp"
#include "evcorridor/model.hpp"
#include "evcorridor/train.hpp"

using namespace evc;

namespace {

const std::vector<Trajectory>& trajs() {
    static const std::vector<Trajectory> out = [] {
        CorridorEnv env(Scenario{});
        auto greedy = make_policy(PolicyKind::GreedyPreempt);
        auto rnd = make_policy(PolicyKind::UniformRandom);
        std::vector<Trajectory> v;
        for (uint64_t s = 0; s < 4; ++s) v.push_back(record_episode(env, s % 2 ? *rnd : *greedy, 100 + s));
        return v;
    }();
    return out;
}

const Network& grid() {
    static const Network net = build_grid(GridSpec{});
    return net;
}

ModelConfig tiny(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.d = 8;
    c.layers = 1;
    c.heads = 2;
    c.context = 3;
    c.ffn_hidden = 16;
    c.gat_layers = 1;
    c.gat_heads = 2;
    c.gat_ffn_hidden = 16;
    c.dropout = 0.0f;
    return c;
}

// Window ends past an episode's end are pulled back to its last step.
TokenBatch batch_for(const ModelConfig& c, std::vector<WindowRef> refs) {
    for (auto& r : refs) r.end = std::min(r.end, trajs()[r.traj].length() - 1);
    return make_batch(trajs(), refs, c, grid(), RewardWeights{});
}

// Relative error over sampled entries of one tensor, ||a - n|| / (||a|| + ||n||).
template <typename F>
double tensor_rel_err(nn::Param<double>* p, F&& loss_at, int max_entries, std::mt19937_64& rng) {
    const double h = 1e-6;
    double diff = 0, na = 0, nn_ = 0;
    const Eigen::Index size = p->w.size();
    std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
    const int n = static_cast<int>(std::min<Eigen::Index>(size, max_entries));
    for (int k = 0; k < n; ++k) {
        Eigen::Index i = size <= max_entries ? k : pick(rng);
        double* w = p->w.data() + i;
        const double orig = *w;
        *w = orig + h;
        double lp = loss_at();
        *w = orig - h;
        double lm = loss_at();
        *w = orig;
        double num = (lp - lm) / (2 * h);
        double ana = p->g.data()[i];
        diff += (num - ana) * (num - ana);
        na += ana * ana;
        nn_ += num * num;
    }
    double denom = std::sqrt(na) + std::sqrt(nn_);
    return denom < 1e-10 ? 0.0 : std::sqrt(diff) / denom;
}

void gradient_check(Variant v) {
    ModelConfig c = tiny(v);
    Model<double> m(c, 5);
    TokenBatch bt = batch_for(c, {{0, 1}, {1, 10}, {2, 25}});
    nn::Context ctx;
    m.params().zero_grad();
    m.loss(bt, ctx, true);
    auto loss_at = [&] { return m.loss(bt, ctx, false).total; };
    std::mt19937_64 rng(1);
    int checked = 0;
    for (auto* p : m.params().all()) {
        double err = tensor_rel_err(p, loss_at, 12, rng);
        EXPECT_LT(err, 1e-3) << variant_name(v) << " " << p->name;
        ++checked;
    }
    EXPECT_GT(checked, 10);
}

}  // namespace

TEST(Frame, RelativePhaseAndReorder) {
    for (int p = 0; p < 4; ++p) EXPECT_EQ(relative_phase(static_cast<uint8_t>(p), static_cast<uint8_t>(p)), 0);
    float in[kNodeFeatures] = {0, 0, 1, 0, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
    float out[kNodeFeatures];
    relabel_node(in, out, 2);
    EXPECT_EQ(out[0], 1.0f);
    // (N, S, E, W) becomes (E, W, N, S).
    EXPECT_EQ(out[4], 0.3f);
    EXPECT_EQ(out[5], 0.4f);
    EXPECT_EQ(out[6], 0.1f);
    EXPECT_EQ(out[7], 0.2f);
    EXPECT_EQ(out[8], 0.5f);
    EXPECT_EQ(out[9], 0.6f);
    relabel_node(in, out, 0);
    for (int k = 0; k < kNodeFeatures; ++k) EXPECT_EQ(out[k], in[k]);
}

TEST(Frame, NeighborsSelfFirst) {
    CorridorFrame f = make_frame(grid(), 7, {0, 1, 2}, {2, 2, 2});
    EXPECT_EQ(f.neighbors[0].front(), 0);
    EXPECT_EQ(f.neighbors[0].size(), 3u);
    EXPECT_EQ(f.neighbors[5].size(), 5u);
    EXPECT_EQ(f.key[1], 2);
    EXPECT_EQ(f.key[15], 0);
    EXPECT_THROW(make_frame(grid(), 2, {0, 1, 2}, {0, 0, 0}), std::invalid_argument);
}

TEST(Frame, TrajectoryStepRtgExcess) {
    const auto& tr = trajs()[0];
    RewardWeights w;
    StepTokens s = trajectory_step(tr, 0, w);
    EXPECT_NEAR(s.rtg, tr.rtg[0] - tr.ev_remaining[0] - 10.0, 1e-3);
    EXPECT_NEAR(s.ctg, -0.01 * tr.ctg[0], 1e-4);
    EXPECT_EQ(s.action.size(), static_cast<size_t>(tr.K()));
}

TEST(Model, ParameterCounts) {
    Model<float> dt(ModelConfig::dt_defaults(), 0);
    Model<float> madt(ModelConfig::madt_defaults(), 0);
    EXPECT_NEAR(static_cast<double>(dt.param_count()), 1.2e6, 0.12e6);
    EXPECT_NEAR(static_cast<double>(madt.param_count()), 1.8e6, 0.18e6);
}

TEST(Model, GradientCheckDT) { gradient_check(Variant::DT); }
TEST(Model, GradientCheckCDT) { gradient_check(Variant::CDT); }
TEST(Model, GradientCheckMADT) { gradient_check(Variant::MADT); }

TEST(Model, UniformHeadGivesLogFour) {
    for (Variant v : {Variant::DT, Variant::MADT}) {
        ModelConfig c = tiny(v);
        Model<double> m(c, 2);
        m.params().find("head.action.W")->w.setZero();
        m.params().find("head.action.b")->w.setZero();
        TokenBatch bt = batch_for(c, {{0, 5}, {3, 40}});
        LossStats ls = m.loss(bt, nn::Context{}, false);
        EXPECT_NEAR(ls.ce, std::log(4.0), 1e-12);
    }
}

TEST(Model, CausalMaskBlocksFuture) {
    ModelConfig c = tiny(Variant::DT);
    c.context = 6;
    Model<float> m(c, 3);
    TokenBatch bt = batch_for(c, {{0, 20}});
    nn::Context ctx;
    auto base = m.forward(bt, ctx).logits;
    TokenBatch pert = bt;
    const int S = c.obs_dim(), last = c.context - 1;
    for (int j = 0; j < S; ++j) pert.states[last * S + j] += 0.5f;
    pert.rtg[last] += 3.0f;
    auto out = m.forward(pert, ctx).logits;
    for (int t = 0; t < last; ++t)
        for (Eigen::Index k = 0; k < out.cols(); ++k) EXPECT_EQ(out(t, k), base(t, k)) << t;
    EXPECT_NE(out.row(last), base.row(last));

    // The action of step t is read after the prediction at t.
    TokenBatch act = bt;
    const int KP = c.k_slots * c.phases;
    for (int j = 0; j < KP; ++j) act.actions[2 * KP + j] = j % 3 == 0 ? 1.0f : 0.0f;
    auto out2 = m.forward(act, ctx).logits;
    for (int t = 0; t <= 2; ++t)
        for (Eigen::Index k = 0; k < out2.cols(); ++k) EXPECT_EQ(out2(t, k), base(t, k));
    EXPECT_NE(out2.row(3), base.row(3));
}

TEST(Model, MaskOffLeaksFuture) {
    ModelConfig c = tiny(Variant::DT);
    c.context = 6;
    c.causal = false;
    Model<float> m(c, 3);
    TokenBatch bt = batch_for(c, {{0, 20}});
    nn::Context ctx;
    auto base = m.forward(bt, ctx).logits;
    TokenBatch pert = bt;
    pert.rtg[c.context - 1] += 3.0f;
    auto out = m.forward(pert, ctx).logits;
    EXPECT_NE(out.row(0), base.row(0));
}

TEST(Model, PaddingDoesNotAffectValidTokens) {
    ModelConfig c = tiny(Variant::DT);
    c.context = 5;
    Model<float> m(c, 4);
    // End 1 leaves three padded steps in front.
    TokenBatch bt = batch_for(c, {{0, 1}});
    ASSERT_EQ(bt.valid[0], 0);
    nn::Context ctx;
    auto base = m.forward(bt, ctx).logits;
    TokenBatch pert = bt;
    pert.rtg[0] = 42.0f;
    for (int j = 0; j < c.obs_dim(); ++j) pert.states[j] = 0.7f;
    auto out = m.forward(pert, ctx).logits;
    for (int t = 3; t < 5; ++t) EXPECT_TRUE(out.row(t).isApprox(base.row(t), 1e-6f));
}

TEST(Model, TimestepClampsAtHorizon) {
    ModelConfig c = tiny(Variant::DT);
    Model<float> m(c, 6);
    TokenBatch bt = batch_for(c, {{0, 10}});
    TokenBatch a = bt, b = bt;
    for (int& t : a.timesteps) t = c.t_max - 1;
    for (int& t : b.timesteps) t = c.t_max + 50;
    nn::Context ctx;
    EXPECT_EQ(m.forward(a, ctx).logits, m.forward(b, ctx).logits);
}

TEST(Model, GatAttentionNormalized) {
    ModelConfig c = tiny(Variant::MADT);
    Model<double> m(c, 7);
    TokenBatch bt = batch_for(c, {{0, 5}, {1, 8}});
    m.forward(bt, nn::Context{});
    const auto& gat = m.gat_blocks().at(0).gat;
    const int graphs = 2 * c.context;
    for (int g = 0; g < graphs; ++g)
        for (int h = 0; h < c.gat_heads; ++h)
            for (int v = 0; v < c.num_nodes; ++v) {
                auto a = gat.attention(g, h, v);
                EXPECT_EQ(a.size(), bt.neighbors[v].size());
                EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-12);
                for (double x : a) EXPECT_GT(x, 0.0);
            }
    // Interior node of 4x4 attends to itself and four neighbours.
    EXPECT_EQ(gat.attention(0, 0, 5).size(), 5u);
}

TEST(Model, MadtStreamsCoverCorridor) {
    ModelConfig c = tiny(Variant::MADT);
    TokenBatch bt = batch_for(c, {{0, 5}, {1, 8}});
    size_t expect = trajs()[0].K() + trajs()[1].K();
    EXPECT_EQ(bt.streams.size(), expect);
    for (const auto& s : bt.streams) EXPECT_LT(s.agent, c.k_slots);
}

TEST(Nn, LayerNormUnitScale) {
    nn::ParamSet<double> ps;
    nn::LayerNorm<double> ln;
    ln.create(ps, "ln", 16);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(2.0, 5.0);
    nn::Mat<double> x(10, 16);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    auto y = ln.forward(x);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-9);
        EXPECT_NEAR(y.row(r).norm(), 4.0, 1e-3);
    }
}

TEST(Nn, TruncNormalStaysInBounds) {
    std::mt19937_64 rng(9);
    nn::Mat<double> m(200, 200);
    nn::init_trunc_normal(m, 0.02, rng);
    EXPECT_LE(m.cwiseAbs().maxCoeff(), 0.04);
    double sd = std::sqrt(m.array().square().mean());
    // A normal cut at two sigma keeps about 77% of its variance.
    EXPECT_NEAR(sd, 0.02 * std::sqrt(0.774), 0.001);
}

TEST(Model, VariantNames) {
    for (Variant v : {Variant::DT, Variant::MADT, Variant::CDT}) EXPECT_EQ(parse_variant(variant_name(v)), v);
    ModelConfig bad = tiny(Variant::DT);
    bad.heads = 3;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}
