#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evcorridor/nn.hpp"

namespace evc {

enum class Variant { DT, MADT, CDT };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
    Variant variant = Variant::DT;
    int d = 128;
    int layers = 4;
    int heads = 4;
    int context = 30;
    int k_slots = 7;
    int phases = 4;
    int t_max = 200;
    int node_features = 10;
    int num_nodes = 16;
    int ffn_hidden = 896;
    int gat_layers = 2;
    int gat_heads = 4;
    int gat_ffn_hidden = 1536;
    float dropout = 0.1f;
    bool causal = true;
    double rtg_scale = 100.0;
    double cost_scale = 0.01;  // per-step cost target multiplier
    double mu = 0.1;

    int obs_dim() const { return k_slots * node_features; }
    int tokens_per_step() const { return variant == Variant::CDT ? 4 : 3; }
    void validate() const;

    static ModelConfig dt_defaults();
    static ModelConfig madt_defaults();
    static ModelConfig cdt_defaults();
};

// Token inputs for one forward pass. For DT/CDT every per-step array is indexed by
// (b * C + t). For MADT the rtg, actions, placeholder and targets arrays are indexed by
// (stream * C + t) while valid and timesteps stay indexed by (b * C + t).
struct TokenBatch {
    int B = 0;
    int C = 0;
    std::vector<float> rtg;
    std::vector<float> ctg;
    std::vector<float> states;   // DT/CDT: B*C x obs_dim
    std::vector<float> actions;  // one-hot; DT/CDT: K*P per step, MADT: P per step
    std::vector<uint8_t> placeholder;
    std::vector<uint8_t> valid;
    std::vector<int> timesteps;
    std::vector<int> targets;  // DT/CDT: B*C x K, MADT: S*C; -1 ignored
    std::vector<float> cost_target;

    std::vector<float> node_obs;  // MADT: B*C x N x F
    std::vector<std::vector<int>> neighbors;
    struct Stream {
        int b = 0;
        int node = 0;
        int agent = 0;
    };
    std::vector<Stream> streams;
};

struct LossStats {
    double ce = 0.0;
    double cost_mse = 0.0;
    double total = 0.0;
    long correct = 0;
    long count = 0;
};

template <typename T>
class Model {
public:
    using Mat = nn::Mat<T>;

    Model(const ModelConfig& cfg, uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    struct Output {
        Mat logits;  // DT/CDT: (B*C) x (K*P); MADT: (S*C) x P
        Mat cost;    // CDT: (B*C) x 1
    };

    Output forward(const TokenBatch& batch, const nn::Context& ctx);
    void backward(const Mat& dlogits, const Mat& dcost);
    // Mean cross-entropy (+ mu * cost MSE for CDT). Gradients are accumulated when with_grad.
    LossStats loss(const TokenBatch& batch, const nn::Context& ctx, bool with_grad);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamSet<T>& params() { return ps_; }
    const nn::ParamSet<T>& params() const { return ps_; }
    size_t param_count() const { return ps_.count(); }

    // Final-layer hidden states of the last forward pass, one row per token.
    const Mat& hidden() const { return hidden_; }
    const std::vector<nn::GatBlock<T>>& gat_blocks() const { return gat_; }

private:
    Output forward_flat(const TokenBatch& batch, const nn::Context& ctx);
    Output forward_madt(const TokenBatch& batch, const nn::Context& ctx);
    void backward_flat(const Mat& dlogits, const Mat& dcost);
    void backward_madt(const Mat& dlogits);

    ModelConfig cfg_;
    nn::ParamSet<T> ps_;

    nn::Linear<T> lin_r_, lin_c_, lin_s_, lin_a_, lin_n_;
    nn::LayerNorm<T> ln_r_, ln_c_, ln_s_, ln_a_, ln_n_, ln_f_;
    nn::Param<T>* time_emb_ = nullptr;
    nn::Param<T>* modality_ = nullptr;
    nn::Param<T>* sos_ = nullptr;
    nn::Param<T>* agent_emb_ = nullptr;
    std::vector<nn::TransformerBlock<T>> blocks_;
    std::vector<nn::GatBlock<T>> gat_;
    nn::Linear<T> head_, cost_head_;
    nn::Dropout<T> drop_emb_;

    // forward caches
    int B_ = 0, C_ = 0, S_ = 0, m_ = 3;
    std::vector<int> tsteps_;
    std::vector<uint8_t> token_valid_;
    std::vector<uint8_t> placeholder_;
    std::vector<TokenBatch::Stream> streams_;
    Mat hidden_;
};

}  // namespace evc
