#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evc::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Param {
    std::string name;
    Mat<T> w;
    Mat<T> g;
    bool decay = false;
};

template <typename T>
class ParamSet {
public:
    Param<T>* add(const std::string& name, int rows, int cols, bool decay);
    std::vector<Param<T>*> all() const;
    Param<T>* find(const std::string& name) const;
    size_t count() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Param<T>>> params_;
};

// Truncated normal (cut at two standard deviations).
template <typename T>
void init_trunc_normal(Mat<T>& m, double std, std::mt19937_64& rng);

struct Context {
    bool train = false;
    float dropout = 0.0f;
    std::mt19937_64* rng = nullptr;
};

template <typename T>
struct Linear {
    Param<T>* W = nullptr;  // in x out
    Param<T>* b = nullptr;  // 1 x out
    Mat<T> x;

    void create(ParamSet<T>& ps, const std::string& name, int in, int out);
    Mat<T> forward(const Mat<T>& in);
    Mat<T> backward(const Mat<T>& dy);
};

template <typename T>
struct LayerNorm {
    Param<T>* gamma = nullptr;
    Param<T>* beta = nullptr;
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;

    void create(ParamSet<T>& ps, const std::string& name, int d);
    Mat<T> forward(const Mat<T>& in);
    Mat<T> backward(const Mat<T>& dy);
};

template <typename T>
struct Gelu {
    Mat<T> x;
    Mat<T> forward(const Mat<T>& in);
    Mat<T> backward(const Mat<T>& dy);
};

template <typename T>
struct Dropout {
    Mat<T> mask;
    bool active = false;
    Mat<T> forward(const Mat<T>& in, const Context& ctx);
    Mat<T> backward(const Mat<T>& dy);
};

// Multi-head self-attention over `seqs` sequences of `len` tokens stored row-major as
// (seqs * len) x d. valid[s * len + i] == 0 marks a padded token; such keys are ignored
// except by their own query.
template <typename T>
struct SelfAttention {
    Linear<T> qkv;
    Linear<T> proj;
    int d = 0;
    int heads = 0;
    bool causal = true;

    int seqs = 0, len = 0;
    Mat<T> qkv_out;
    Mat<T> ctx_out;
    std::vector<Mat<T>> probs;  // per (seq, head)
    const std::vector<uint8_t>* valid = nullptr;

    void create(ParamSet<T>& ps, const std::string& name, int d_model, int n_heads);
    Mat<T> forward(const Mat<T>& x, int n_seqs, int seq_len, const std::vector<uint8_t>& valid_mask);
    Mat<T> backward(const Mat<T>& dy);
};

template <typename T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    SelfAttention<T> attn;
    Linear<T> fc1, fc2;
    Gelu<T> act;
    Dropout<T> drop1, drop2;

    void create(ParamSet<T>& ps, const std::string& name, int d, int heads, int ffn_hidden);
    Mat<T> forward(const Mat<T>& x, int n_seqs, int seq_len, const std::vector<uint8_t>& valid,
                   const Context& ctx);
    Mat<T> backward(const Mat<T>& dy);
};

// Graph attention over `graphs` copies of one graph with `nodes` nodes.
// neighbors[i] lists the nodes attended by i and must include i itself.
template <typename T>
struct GatLayer {
    Param<T>* W = nullptr;      // d_in x (heads * f)
    Param<T>* a_src = nullptr;  // heads x f
    Param<T>* a_dst = nullptr;  // heads x f
    int heads = 0, f = 0;
    bool concat = true;

    const std::vector<std::vector<int>>* nbr = nullptr;
    int graphs = 0, nodes = 0;
    Mat<T> h_in, z, pre_act;
    std::vector<std::vector<T>> alpha;  // [graph * heads + k][edge]
    std::vector<std::vector<T>> score;  // pre-LeakyReLU scores, same layout
    std::vector<int> edge_offset;

    void create(ParamSet<T>& ps, const std::string& name, int d_in, int n_heads, int head_dim, bool concat_heads);
    int out_dim() const { return concat ? heads * f : f; }
    Mat<T> forward(const Mat<T>& h, int n_graphs, const std::vector<std::vector<int>>& neighbors);
    Mat<T> backward(const Mat<T>& dy);
    // Attention weights of node i over its neighbor list for one graph and head.
    std::vector<T> attention(int graph, int head, int node) const;
};

template <typename T>
struct GatBlock {
    GatLayer<T> gat;
    LayerNorm<T> ln1, ln2;
    Linear<T> fc1, fc2;
    Gelu<T> act;
    Dropout<T> drop1, drop2;

    void create(ParamSet<T>& ps, const std::string& name, int d, int heads, bool concat_heads, int ffn_hidden);
    Mat<T> forward(const Mat<T>& x, int n_graphs, const std::vector<std::vector<int>>& neighbors,
                   const Context& ctx);
    Mat<T> backward(const Mat<T>& dy);
};

}  // namespace evc::nn
