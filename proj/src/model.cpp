#include "evcorridor/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace evc {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::DT: return "dt";
        case Variant::MADT: return "madt";
        case Variant::CDT: return "cdt";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    if (s == "dt") return Variant::DT;
    if (s == "madt") return Variant::MADT;
    if (s == "cdt") return Variant::CDT;
    throw std::invalid_argument("unknown model variant: " + s);
}

void ModelConfig::validate() const {
    if (d <= 0 || layers <= 0 || heads <= 0 || context <= 0 || k_slots <= 0 || phases <= 0 || t_max <= 0)
        throw std::invalid_argument("model sizes must be positive");
    if (d % heads != 0) throw std::invalid_argument("hidden size must be divisible by the head count");
    if (variant == Variant::MADT) {
        if (gat_layers < 1 || gat_heads < 1 || d % gat_heads != 0)
            throw std::invalid_argument("GAT heads must divide the hidden size");
        if (num_nodes < 1) throw std::invalid_argument("MADT needs the node count");
    }
    if (dropout < 0.0f || dropout >= 1.0f) throw std::invalid_argument("dropout must lie in [0, 1)");
}

ModelConfig ModelConfig::dt_defaults() { return ModelConfig{}; }

ModelConfig ModelConfig::madt_defaults() {
    ModelConfig c;
    c.variant = Variant::MADT;
    c.layers = 3;
    c.context = 20;
    return c;
}

ModelConfig ModelConfig::cdt_defaults() {
    ModelConfig c;
    c.variant = Variant::CDT;
    return c;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.d;
    const bool madt = cfg_.variant == Variant::MADT;
    m_ = cfg_.tokens_per_step();

    lin_r_.create(ps_, "embed.rtg", 1, d);
    ln_r_.create(ps_, "embed.rtg_ln", d);
    if (cfg_.variant == Variant::CDT) {
        lin_c_.create(ps_, "embed.ctg", 1, d);
        ln_c_.create(ps_, "embed.ctg_ln", d);
    }
    if (madt) {
        lin_n_.create(ps_, "embed.node", cfg_.node_features, d);
        ln_n_.create(ps_, "embed.node_ln", d);
        lin_a_.create(ps_, "embed.action", cfg_.phases, d);
    } else {
        lin_s_.create(ps_, "embed.state", cfg_.obs_dim(), d);
        ln_s_.create(ps_, "embed.state_ln", d);
        lin_a_.create(ps_, "embed.action", cfg_.k_slots * cfg_.phases, d);
    }
    ln_a_.create(ps_, "embed.action_ln", d);
    time_emb_ = ps_.add("embed.timestep", cfg_.t_max, d, false);
    modality_ = ps_.add("embed.modality", m_, d, false);
    sos_ = ps_.add("embed.sos_action", 1, d, false);
    if (madt) {
        agent_emb_ = ps_.add("embed.agent", cfg_.k_slots, d, false);
        gat_.resize(cfg_.gat_layers);
        for (int l = 0; l < cfg_.gat_layers; ++l)
            gat_[l].create(ps_, "gat" + std::to_string(l), d, cfg_.gat_heads, l + 1 < cfg_.gat_layers,
                           cfg_.gat_ffn_hidden);
    }
    blocks_.resize(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l) {
        blocks_[l].create(ps_, "block" + std::to_string(l), d, cfg_.heads, cfg_.ffn_hidden);
        blocks_[l].attn.causal = cfg_.causal;
    }
    ln_f_.create(ps_, "final_ln", d);
    head_.create(ps_, "head.action", d, madt ? cfg_.phases : cfg_.k_slots * cfg_.phases);
    if (cfg_.variant == Variant::CDT) cost_head_.create(ps_, "head.cost", d, 1);

    std::mt19937_64 rng(seed);
    for (auto* p : ps_.all()) {
        const std::string& n = p->name;
        bool is_bias = n.size() > 2 && n.compare(n.size() - 2, 2, ".b") == 0;
        bool is_ln = n.find("gamma") != std::string::npos || n.find("beta") != std::string::npos;
        if (is_bias || is_ln) continue;
        nn::init_trunc_normal(p->w, 0.02, rng);
    }
}

template <typename T>
typename Model<T>::Output Model<T>::forward(const TokenBatch& batch, const nn::Context& ctx) {
    return cfg_.variant == Variant::MADT ? forward_madt(batch, ctx) : forward_flat(batch, ctx);
}

template <typename T>
void Model<T>::backward(const Mat& dlogits, const Mat& dcost) {
    if (cfg_.variant == Variant::MADT) backward_madt(dlogits);
    else backward_flat(dlogits, dcost);
}

template <typename T>
static nn::Mat<T> to_mat(const std::vector<float>& v, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw std::invalid_argument("token batch shape mismatch");
    nn::Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) m.data()[i] = static_cast<T>(v[i]);
    return m;
}

template <typename T>
typename Model<T>::Output Model<T>::forward_flat(const TokenBatch& bt, const nn::Context& ctx) {
    const int d = cfg_.d;
    B_ = bt.B;
    C_ = bt.C;
    if (C_ > cfg_.context) throw std::invalid_argument("window longer than the model context");
    const int n = B_ * C_;
    const bool cdt = cfg_.variant == Variant::CDT;
    const int s_pos = cdt ? 2 : 1, a_pos = cdt ? 3 : 2;

    Mat Er = ln_r_.forward(lin_r_.forward(to_mat<T>(bt.rtg, n, 1)));
    Mat Es = ln_s_.forward(lin_s_.forward(to_mat<T>(bt.states, n, cfg_.obs_dim())));
    Mat Ea = ln_a_.forward(lin_a_.forward(to_mat<T>(bt.actions, n, cfg_.k_slots * cfg_.phases)));
    Mat Ec;
    if (cdt) Ec = ln_c_.forward(lin_c_.forward(to_mat<T>(bt.ctg, n, 1)));

    placeholder_ = bt.placeholder;
    tsteps_.resize(n);
    token_valid_.resize(static_cast<size_t>(n) * m_);
    Mat X(static_cast<Eigen::Index>(n) * m_, d);
    for (int i = 0; i < n; ++i) {
        const int t = std::clamp(bt.timesteps[i], 0, cfg_.t_max - 1);
        tsteps_[i] = t;
        const Eigen::Index base = static_cast<Eigen::Index>(i) * m_;
        auto te = time_emb_->w.row(t);
        X.row(base) = Er.row(i) + te + modality_->w.row(0);
        X.row(base + s_pos) = Es.row(i) + te + modality_->w.row(1);
        X.row(base + a_pos) = (placeholder_[i] ? Mat(sos_->w) : Mat(Ea.row(i))) + te + modality_->w.row(2);
        if (cdt) X.row(base + 1) = Ec.row(i) + te + modality_->w.row(3);
        for (int k = 0; k < m_; ++k) token_valid_[base + k] = bt.valid[i];
    }
    X = drop_emb_.forward(X, ctx);
    for (auto& blk : blocks_) X = blk.forward(X, B_, C_ * m_, token_valid_, ctx);
    hidden_ = ln_f_.forward(X);

    Mat Hs(n, d);
    for (int i = 0; i < n; ++i) Hs.row(i) = hidden_.row(static_cast<Eigen::Index>(i) * m_ + s_pos);
    Output out;
    out.logits = head_.forward(Hs);
    if (cdt) {
        Mat Ha(n, d);
        for (int i = 0; i < n; ++i) Ha.row(i) = hidden_.row(static_cast<Eigen::Index>(i) * m_ + a_pos);
        out.cost = cost_head_.forward(Ha);
    }
    return out;
}

template <typename T>
void Model<T>::backward_flat(const Mat& dlogits, const Mat& dcost) {
    const int d = cfg_.d;
    const int n = B_ * C_;
    const bool cdt = cfg_.variant == Variant::CDT;
    const int s_pos = cdt ? 2 : 1, a_pos = cdt ? 3 : 2;

    Mat dH = Mat::Zero(static_cast<Eigen::Index>(n) * m_, d);
    Mat dHs = head_.backward(dlogits);
    for (int i = 0; i < n; ++i) dH.row(static_cast<Eigen::Index>(i) * m_ + s_pos) += dHs.row(i);
    if (cdt) {
        Mat dHa = cost_head_.backward(dcost);
        for (int i = 0; i < n; ++i) dH.row(static_cast<Eigen::Index>(i) * m_ + a_pos) += dHa.row(i);
    }
    Mat dX = ln_f_.backward(dH);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dX = it->backward(dX);
    dX = drop_emb_.backward(dX);

    Mat dEr(n, d), dEs(n, d), dEa(n, d), dEc;
    if (cdt) dEc.resize(n, d);
    for (int i = 0; i < n; ++i) {
        const Eigen::Index base = static_cast<Eigen::Index>(i) * m_;
        for (int k = 0; k < m_; ++k) time_emb_->g.row(tsteps_[i]) += dX.row(base + k);
        modality_->g.row(0) += dX.row(base);
        modality_->g.row(1) += dX.row(base + s_pos);
        modality_->g.row(2) += dX.row(base + a_pos);
        dEr.row(i) = dX.row(base);
        dEs.row(i) = dX.row(base + s_pos);
        if (placeholder_[i]) {
            sos_->g.row(0) += dX.row(base + a_pos);
            dEa.row(i).setZero();
        } else {
            dEa.row(i) = dX.row(base + a_pos);
        }
        if (cdt) {
            modality_->g.row(3) += dX.row(base + 1);
            dEc.row(i) = dX.row(base + 1);
        }
    }
    lin_r_.backward(ln_r_.backward(dEr));
    lin_s_.backward(ln_s_.backward(dEs));
    lin_a_.backward(ln_a_.backward(dEa));
    if (cdt) lin_c_.backward(ln_c_.backward(dEc));
}

template <typename T>
typename Model<T>::Output Model<T>::forward_madt(const TokenBatch& bt, const nn::Context& ctx) {
    const int d = cfg_.d;
    const int N = cfg_.num_nodes;
    B_ = bt.B;
    C_ = bt.C;
    if (C_ > cfg_.context) throw std::invalid_argument("window longer than the model context");
    if (static_cast<int>(bt.neighbors.size()) != N) throw std::invalid_argument("adjacency size mismatch");
    const int G = B_ * C_;
    streams_ = bt.streams;
    S_ = static_cast<int>(streams_.size());
    const int n = S_ * C_;

    Mat Hn = ln_n_.forward(lin_n_.forward(to_mat<T>(bt.node_obs, static_cast<Eigen::Index>(G) * N, cfg_.node_features)));
    for (auto& g : gat_) Hn = g.forward(Hn, G, bt.neighbors, ctx);

    Mat Er = ln_r_.forward(lin_r_.forward(to_mat<T>(bt.rtg, n, 1)));
    Mat Ea = ln_a_.forward(lin_a_.forward(to_mat<T>(bt.actions, n, cfg_.phases)));

    placeholder_ = bt.placeholder;
    tsteps_.assign(n, 0);
    token_valid_.resize(static_cast<size_t>(n) * 3);
    Mat X(static_cast<Eigen::Index>(n) * 3, d);
    for (int s = 0; s < S_; ++s) {
        const auto& st = streams_[s];
        if (st.agent < 0 || st.agent >= cfg_.k_slots) throw std::invalid_argument("agent index out of range");
        auto ae = agent_emb_->w.row(st.agent);
        for (int t = 0; t < C_; ++t) {
            const int i = s * C_ + t;
            const int bti = st.b * C_ + t;
            const int ts = std::clamp(bt.timesteps[bti], 0, cfg_.t_max - 1);
            tsteps_[i] = ts;
            auto te = time_emb_->w.row(ts);
            const Eigen::Index base = static_cast<Eigen::Index>(i) * 3;
            X.row(base) = Er.row(i) + te + modality_->w.row(0) + ae;
            X.row(base + 1) = Hn.row(static_cast<Eigen::Index>(bti) * N + st.node) + te + modality_->w.row(1) + ae;
            X.row(base + 2) = (placeholder_[i] ? Mat(sos_->w) : Mat(Ea.row(i))) + te + modality_->w.row(2) + ae;
            for (int k = 0; k < 3; ++k) token_valid_[base + k] = bt.valid[bti];
        }
    }
    X = drop_emb_.forward(X, ctx);
    for (auto& blk : blocks_) X = blk.forward(X, S_, C_ * 3, token_valid_, ctx);
    hidden_ = ln_f_.forward(X);
    Mat Hs(n, d);
    for (int i = 0; i < n; ++i) Hs.row(i) = hidden_.row(static_cast<Eigen::Index>(i) * 3 + 1);
    Output out;
    out.logits = head_.forward(Hs);
    return out;
}

template <typename T>
void Model<T>::backward_madt(const Mat& dlogits) {
    const int d = cfg_.d;
    const int N = cfg_.num_nodes;
    const int G = B_ * C_;
    const int n = S_ * C_;
    Mat dH = Mat::Zero(static_cast<Eigen::Index>(n) * 3, d);
    Mat dHs = head_.backward(dlogits);
    for (int i = 0; i < n; ++i) dH.row(static_cast<Eigen::Index>(i) * 3 + 1) = dHs.row(i);
    Mat dX = ln_f_.backward(dH);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dX = it->backward(dX);
    dX = drop_emb_.backward(dX);

    Mat dEr(n, d), dEa(n, d);
    Mat dHn = Mat::Zero(static_cast<Eigen::Index>(G) * N, d);
    for (int s = 0; s < S_; ++s) {
        const auto& st = streams_[s];
        for (int t = 0; t < C_; ++t) {
            const int i = s * C_ + t;
            const Eigen::Index base = static_cast<Eigen::Index>(i) * 3;
            for (int k = 0; k < 3; ++k) {
                time_emb_->g.row(tsteps_[i]) += dX.row(base + k);
                modality_->g.row(k) += dX.row(base + k);
                agent_emb_->g.row(st.agent) += dX.row(base + k);
            }
            dEr.row(i) = dX.row(base);
            dHn.row(static_cast<Eigen::Index>(st.b * C_ + t) * N + st.node) += dX.row(base + 1);
            if (placeholder_[i]) {
                sos_->g.row(0) += dX.row(base + 2);
                dEa.row(i).setZero();
            } else {
                dEa.row(i) = dX.row(base + 2);
            }
        }
    }
    lin_r_.backward(ln_r_.backward(dEr));
    lin_a_.backward(ln_a_.backward(dEa));
    for (auto it = gat_.rbegin(); it != gat_.rend(); ++it) dHn = it->backward(dHn);
    lin_n_.backward(ln_n_.backward(dHn));
}

template <typename T>
LossStats Model<T>::loss(const TokenBatch& bt, const nn::Context& ctx, bool with_grad) {
    Output out = forward(bt, ctx);
    const int P = cfg_.phases;
    const bool madt = cfg_.variant == Variant::MADT;
    const int heads_per_row = madt ? 1 : cfg_.k_slots;
    const Eigen::Index rows = out.logits.rows();
    Mat dlogits = Mat::Zero(rows, out.logits.cols());
    LossStats st;

    auto row_valid = [&](Eigen::Index r) {
        if (!madt) return bt.valid[r] != 0;
        const int s = static_cast<int>(r) / C_, t = static_cast<int>(r) % C_;
        return bt.valid[streams_[s].b * C_ + t] != 0;
    };

    double ce = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!row_valid(r)) continue;
        for (int k = 0; k < heads_per_row; ++k) {
            const int tgt = bt.targets[r * heads_per_row + k];
            if (tgt < 0) continue;
            auto z = out.logits.row(r).segment(k * P, P);
            T mx = z.maxCoeff();
            T se = (z.array() - mx).exp().sum();
            T lse = mx + std::log(se);
            ce += static_cast<double>(lse - z(tgt));
            Eigen::Index arg;
            z.maxCoeff(&arg);
            st.correct += arg == tgt;
            st.count += 1;
            if (with_grad) {
                dlogits.row(r).segment(k * P, P) = (z.array() - lse).exp().matrix();
                dlogits(r, k * P + tgt) -= T(1);
            }
        }
    }
    if (st.count > 0) {
        st.ce = ce / st.count;
        dlogits /= static_cast<T>(st.count);
    }
    st.total = st.ce;

    Mat dcost;
    if (cfg_.variant == Variant::CDT) {
        dcost = Mat::Zero(rows, 1);
        long nc = 0;
        double mse = 0.0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (!bt.valid[r]) continue;
            double e = static_cast<double>(out.cost(r, 0)) - bt.cost_target[r];
            mse += e * e;
            dcost(r, 0) = static_cast<T>(e);
            ++nc;
        }
        if (nc > 0) {
            st.cost_mse = mse / nc;
            dcost *= static_cast<T>(2.0 * cfg_.mu / nc);
        }
        st.total += cfg_.mu * st.cost_mse;
    }
    if (with_grad) backward(dlogits, dcost);
    return st;
}

template class Model<float>;
template class Model<double>;

}  // namespace evc
