#include "evcorridor/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace evc::nn {

template <typename T>
Param<T>* ParamSet<T>::add(const std::string& name, int rows, int cols, bool decay) {
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->w = Mat<T>::Zero(rows, cols);
    p->g = Mat<T>::Zero(rows, cols);
    p->decay = decay;
    params_.push_back(std::move(p));
    return params_.back().get();
}

template <typename T>
std::vector<Param<T>*> ParamSet<T>::all() const {
    std::vector<Param<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

template <typename T>
Param<T>* ParamSet<T>::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

template <typename T>
size_t ParamSet<T>::count() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p->w.size());
    return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
    for (auto& p : params_) p->g.setZero();
}

template <typename T>
void init_trunc_normal(Mat<T>& m, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double v;
        do v = nd(rng);
        while (std::abs(v) > 2.0);
        m.data()[i] = static_cast<T>(v * std);
    }
}

// ---- Linear ----

template <typename T>
void Linear<T>::create(ParamSet<T>& ps, const std::string& name, int in, int out) {
    W = ps.add(name + ".W", in, out, true);
    b = ps.add(name + ".b", 1, out, false);
}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& in) {
    x = in;
    Mat<T> y(in.rows(), W->w.cols());
    y.noalias() = in * W->w;
    y.rowwise() += b->w.row(0);
    return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const Mat<T>& dy) {
    W->g.noalias() += x.transpose() * dy;
    b->g += dy.colwise().sum();
    Mat<T> dx(dy.rows(), W->w.rows());
    dx.noalias() = dy * W->w.transpose();
    return dx;
}

// ---- LayerNorm ----

template <typename T>
void LayerNorm<T>::create(ParamSet<T>& ps, const std::string& name, int d) {
    gamma = ps.add(name + ".gamma", 1, d, false);
    beta = ps.add(name + ".beta", 1, d, false);
    gamma->w.setOnes();
}

template <typename T>
Mat<T> LayerNorm<T>::forward(const Mat<T>& in) {
    const T eps = static_cast<T>(1e-5);
    const Eigen::Index n = in.rows(), d = in.cols();
    xhat.resize(n, d);
    rstd.resize(n);
    Mat<T> y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        T mean = in.row(i).mean();
        T var = (in.row(i).array() - mean).square().mean();
        T r = T(1) / std::sqrt(var + eps);
        rstd(i) = r;
        xhat.row(i) = (in.row(i).array() - mean) * r;
        y.row(i) = xhat.row(i).cwiseProduct(gamma->w.row(0)) + beta->w.row(0);
    }
    return y;
}

template <typename T>
Mat<T> LayerNorm<T>::backward(const Mat<T>& dy) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    gamma->g += dy.cwiseProduct(xhat).colwise().sum();
    beta->g += dy.colwise().sum();
    Mat<T> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto dxh = dy.row(i).cwiseProduct(gamma->w.row(0));
        T s1 = dxh.sum();
        T s2 = dxh.cwiseProduct(xhat.row(i)).sum();
        dx.row(i) = (rstd(i) / static_cast<T>(d)) *
                    (static_cast<T>(d) * dxh.array() - s1 - xhat.row(i).array() * s2).matrix();
    }
    return dx;
}

// ---- GELU (tanh form) ----

template <typename T>
Mat<T> Gelu<T>::forward(const Mat<T>& in) {
    x = in;
    const T c = static_cast<T>(0.7978845608028654);
    return in.unaryExpr([c](T v) {
        return T(0.5) * v * (T(1) + std::tanh(c * (v + T(0.044715) * v * v * v)));
    });
}

template <typename T>
Mat<T> Gelu<T>::backward(const Mat<T>& dy) {
    const T c = static_cast<T>(0.7978845608028654);
    Mat<T> grad = x.unaryExpr([c](T v) {
        T u = c * (v + T(0.044715) * v * v * v);
        T t = std::tanh(u);
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3 * 0.044715) * v * v);
    });
    return dy.cwiseProduct(grad);
}

// ---- Dropout ----

template <typename T>
Mat<T> Dropout<T>::forward(const Mat<T>& in, const Context& ctx) {
    active = ctx.train && ctx.dropout > 0.0f;
    if (!active) return in;
    if (!ctx.rng) throw std::logic_error("dropout needs an rng in training mode");
    std::bernoulli_distribution keep(1.0 - ctx.dropout);
    const T scale = static_cast<T>(1.0 / (1.0 - ctx.dropout));
    mask.resize(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*ctx.rng) ? scale : T(0);
    return in.cwiseProduct(mask);
}

template <typename T>
Mat<T> Dropout<T>::backward(const Mat<T>& dy) {
    return active ? Mat<T>(dy.cwiseProduct(mask)) : dy;
}

// ---- Self-attention ----

template <typename T>
void SelfAttention<T>::create(ParamSet<T>& ps, const std::string& name, int d_model, int n_heads) {
    if (d_model % n_heads != 0) throw std::invalid_argument("hidden size must be divisible by head count");
    d = d_model;
    heads = n_heads;
    qkv.create(ps, name + ".qkv", d, 3 * d);
    proj.create(ps, name + ".proj", d, d);
}

template <typename T>
Mat<T> SelfAttention<T>::forward(const Mat<T>& x, int n_seqs, int seq_len, const std::vector<uint8_t>& valid_mask) {
    seqs = n_seqs;
    len = seq_len;
    valid = &valid_mask;
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const T neg_inf = -std::numeric_limits<T>::infinity();
    qkv_out = qkv.forward(x);
    ctx_out.resize(x.rows(), d);
    probs.resize(static_cast<size_t>(seqs) * heads);
    for (int s = 0; s < seqs; ++s) {
        const int r0 = s * len;
        for (int h = 0; h < heads; ++h) {
            auto Q = qkv_out.block(r0, h * dh, len, dh);
            auto K = qkv_out.block(r0, d + h * dh, len, dh);
            auto V = qkv_out.block(r0, 2 * d + h * dh, len, dh);
            Mat<T>& P = probs[static_cast<size_t>(s) * heads + h];
            P.resize(len, len);
            P.noalias() = Q * K.transpose();
            for (int i = 0; i < len; ++i) {
                T mx = neg_inf;
                for (int j = 0; j < len; ++j) {
                    bool ok = (!causal || j <= i) && (valid_mask[r0 + j] || j == i);
                    T v = ok ? P(i, j) * scale : neg_inf;
                    P(i, j) = v;
                    if (v > mx) mx = v;
                }
                T sum = 0;
                for (int j = 0; j < len; ++j) {
                    T e = P(i, j) == neg_inf ? T(0) : std::exp(P(i, j) - mx);
                    P(i, j) = e;
                    sum += e;
                }
                P.row(i) /= sum;
            }
            ctx_out.block(r0, h * dh, len, dh).noalias() = P * V;
        }
    }
    return proj.forward(ctx_out);
}

template <typename T>
Mat<T> SelfAttention<T>::backward(const Mat<T>& dy) {
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> dctx = proj.backward(dy);
    Mat<T> dqkv = Mat<T>::Zero(qkv_out.rows(), qkv_out.cols());
    Mat<T> dP(len, len), dS(len, len);
    for (int s = 0; s < seqs; ++s) {
        const int r0 = s * len;
        for (int h = 0; h < heads; ++h) {
            auto Q = qkv_out.block(r0, h * dh, len, dh);
            auto K = qkv_out.block(r0, d + h * dh, len, dh);
            auto V = qkv_out.block(r0, 2 * d + h * dh, len, dh);
            const Mat<T>& P = probs[static_cast<size_t>(s) * heads + h];
            auto dO = dctx.block(r0, h * dh, len, dh);
            dP.noalias() = dO * V.transpose();
            dqkv.block(r0, 2 * d + h * dh, len, dh).noalias() += P.transpose() * dO;
            for (int i = 0; i < len; ++i) {
                T dot = P.row(i).dot(dP.row(i));
                dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
            }
            dS *= scale;
            dqkv.block(r0, h * dh, len, dh).noalias() += dS * K;
            dqkv.block(r0, d + h * dh, len, dh).noalias() += dS.transpose() * Q;
        }
    }
    return qkv.backward(dqkv);
}

// ---- Transformer block (pre-norm) ----

template <typename T>
void TransformerBlock<T>::create(ParamSet<T>& ps, const std::string& name, int d, int heads, int ffn_hidden) {
    ln1.create(ps, name + ".ln1", d);
    attn.create(ps, name + ".attn", d, heads);
    ln2.create(ps, name + ".ln2", d);
    fc1.create(ps, name + ".fc1", d, ffn_hidden);
    fc2.create(ps, name + ".fc2", ffn_hidden, d);
}

template <typename T>
Mat<T> TransformerBlock<T>::forward(const Mat<T>& x, int n_seqs, int seq_len, const std::vector<uint8_t>& valid,
                                    const Context& ctx) {
    Mat<T> h = x + drop1.forward(attn.forward(ln1.forward(x), n_seqs, seq_len, valid), ctx);
    Mat<T> y = h + drop2.forward(fc2.forward(act.forward(fc1.forward(ln2.forward(h)))), ctx);
    return y;
}

template <typename T>
Mat<T> TransformerBlock<T>::backward(const Mat<T>& dy) {
    Mat<T> dh = dy + ln2.backward(fc1.backward(act.backward(fc2.backward(drop2.backward(dy)))));
    Mat<T> dx = dh + ln1.backward(attn.backward(drop1.backward(dh)));
    return dx;
}

// ---- Graph attention ----

template <typename T>
void GatLayer<T>::create(ParamSet<T>& ps, const std::string& name, int d_in, int n_heads, int head_dim,
                         bool concat_heads) {
    heads = n_heads;
    f = head_dim;
    concat = concat_heads;
    W = ps.add(name + ".W", d_in, heads * f, true);
    a_src = ps.add(name + ".a_src", heads, f, false);
    a_dst = ps.add(name + ".a_dst", heads, f, false);
}

template <typename T>
Mat<T> GatLayer<T>::forward(const Mat<T>& h, int n_graphs, const std::vector<std::vector<int>>& neighbors) {
    nbr = &neighbors;
    graphs = n_graphs;
    nodes = static_cast<int>(neighbors.size());
    if (h.rows() != static_cast<Eigen::Index>(graphs) * nodes) throw std::invalid_argument("gat input rows");
    h_in = h;
    z.resize(h.rows(), heads * f);
    z.noalias() = h * W->w;
    edge_offset.assign(nodes + 1, 0);
    for (int i = 0; i < nodes; ++i) edge_offset[i + 1] = edge_offset[i] + static_cast<int>(neighbors[i].size());
    const int E = edge_offset[nodes];
    alpha.assign(static_cast<size_t>(graphs) * heads, std::vector<T>(E));
    score.assign(static_cast<size_t>(graphs) * heads, std::vector<T>(E));
    pre_act = Mat<T>::Zero(h.rows(), out_dim());
    std::vector<T> s_src(nodes), s_dst(nodes);
    for (int g = 0; g < graphs; ++g) {
        const int r0 = g * nodes;
        for (int k = 0; k < heads; ++k) {
            for (int i = 0; i < nodes; ++i) {
                auto zi = z.row(r0 + i).segment(k * f, f);
                s_src[i] = zi.dot(a_src->w.row(k));
                s_dst[i] = zi.dot(a_dst->w.row(k));
            }
            auto& al = alpha[static_cast<size_t>(g) * heads + k];
            auto& sc = score[static_cast<size_t>(g) * heads + k];
            for (int i = 0; i < nodes; ++i) {
                const auto& nb = neighbors[i];
                const int e0 = edge_offset[i];
                T mx = -std::numeric_limits<T>::infinity();
                for (size_t q = 0; q < nb.size(); ++q) {
                    T e = s_dst[i] + s_src[nb[q]];
                    sc[e0 + q] = e;
                    T l = e > 0 ? e : T(0.2) * e;
                    al[e0 + q] = l;
                    if (l > mx) mx = l;
                }
                T sum = 0;
                for (size_t q = 0; q < nb.size(); ++q) {
                    al[e0 + q] = std::exp(al[e0 + q] - mx);
                    sum += al[e0 + q];
                }
                for (size_t q = 0; q < nb.size(); ++q) al[e0 + q] /= sum;
                for (size_t q = 0; q < nb.size(); ++q) {
                    auto zj = z.row(r0 + nb[q]).segment(k * f, f);
                    if (concat) pre_act.row(r0 + i).segment(k * f, f) += al[e0 + q] * zj;
                    else pre_act.row(r0 + i) += (al[e0 + q] / static_cast<T>(heads)) * zj;
                }
            }
        }
    }
    return pre_act.unaryExpr([](T v) { return v > 0 ? v : std::expm1(v); });
}

template <typename T>
Mat<T> GatLayer<T>::backward(const Mat<T>& dy) {
    const auto& neighbors = *nbr;
    Mat<T> dout = dy.cwiseProduct(pre_act.unaryExpr([](T v) { return v > 0 ? T(1) : std::exp(v); }));
    Mat<T> dz = Mat<T>::Zero(z.rows(), z.cols());
    std::vector<T> ds_src(nodes), ds_dst(nodes);
    std::vector<T> dal;
    for (int g = 0; g < graphs; ++g) {
        const int r0 = g * nodes;
        for (int k = 0; k < heads; ++k) {
            const auto& al = alpha[static_cast<size_t>(g) * heads + k];
            const auto& sc = score[static_cast<size_t>(g) * heads + k];
            std::fill(ds_src.begin(), ds_src.end(), T(0));
            std::fill(ds_dst.begin(), ds_dst.end(), T(0));
            for (int i = 0; i < nodes; ++i) {
                const auto& nb = neighbors[i];
                const int e0 = edge_offset[i];
                Eigen::Matrix<T, 1, Eigen::Dynamic> doi =
                    concat ? Eigen::Matrix<T, 1, Eigen::Dynamic>(dout.row(r0 + i).segment(k * f, f))
                           : Eigen::Matrix<T, 1, Eigen::Dynamic>(dout.row(r0 + i) / static_cast<T>(heads));
                dal.assign(nb.size(), T(0));
                T wsum = 0;
                for (size_t q = 0; q < nb.size(); ++q) {
                    const int j = nb[q];
                    dal[q] = doi.dot(z.row(r0 + j).segment(k * f, f));
                    dz.row(r0 + j).segment(k * f, f) += al[e0 + q] * doi;
                    wsum += al[e0 + q] * dal[q];
                }
                for (size_t q = 0; q < nb.size(); ++q) {
                    T de = al[e0 + q] * (dal[q] - wsum);
                    T dpre = sc[e0 + q] > 0 ? de : T(0.2) * de;
                    ds_dst[i] += dpre;
                    ds_src[nb[q]] += dpre;
                }
            }
            for (int i = 0; i < nodes; ++i) {
                auto zi = z.row(r0 + i).segment(k * f, f);
                a_dst->g.row(k) += ds_dst[i] * zi;
                a_src->g.row(k) += ds_src[i] * zi;
                dz.row(r0 + i).segment(k * f, f) += ds_dst[i] * a_dst->w.row(k) + ds_src[i] * a_src->w.row(k);
            }
        }
    }
    W->g.noalias() += h_in.transpose() * dz;
    Mat<T> dh(h_in.rows(), h_in.cols());
    dh.noalias() = dz * W->w.transpose();
    return dh;
}

template <typename T>
std::vector<T> GatLayer<T>::attention(int graph, int head, int node) const {
    const auto& al = alpha[static_cast<size_t>(graph) * heads + head];
    return std::vector<T>(al.begin() + edge_offset[node], al.begin() + edge_offset[node + 1]);
}

template <typename T>
void GatBlock<T>::create(ParamSet<T>& ps, const std::string& name, int d, int heads, bool concat_heads,
                         int ffn_hidden) {
    gat.create(ps, name + ".gat", d, heads, concat_heads ? d / heads : d, concat_heads);
    ln1.create(ps, name + ".ln1", d);
    fc1.create(ps, name + ".fc1", d, ffn_hidden);
    fc2.create(ps, name + ".fc2", ffn_hidden, d);
    ln2.create(ps, name + ".ln2", d);
}

template <typename T>
Mat<T> GatBlock<T>::forward(const Mat<T>& x, int n_graphs, const std::vector<std::vector<int>>& neighbors,
                            const Context& ctx) {
    Mat<T> y = ln1.forward(x + drop1.forward(gat.forward(x, n_graphs, neighbors), ctx));
    return ln2.forward(y + drop2.forward(fc2.forward(act.forward(fc1.forward(y))), ctx));
}

template <typename T>
Mat<T> GatBlock<T>::backward(const Mat<T>& dy) {
    Mat<T> d2 = ln2.backward(dy);
    Mat<T> dy1 = d2 + fc1.backward(act.backward(fc2.backward(drop2.backward(d2))));
    Mat<T> d1 = ln1.backward(dy1);
    return d1 + gat.backward(drop1.backward(d1));
}

#define EVC_NN_INSTANTIATE(T)                                        \
    template class ParamSet<T>;                                      \
    template void init_trunc_normal<T>(Mat<T>&, double, std::mt19937_64&); \
    template struct Linear<T>;                                       \
    template struct LayerNorm<T>;                                    \
    template struct Gelu<T>;                                         \
    template struct Dropout<T>;                                      \
    template struct SelfAttention<T>;                                \
    template struct TransformerBlock<T>;                             \
    template struct GatLayer<T>;                                     \
    template struct GatBlock<T>;

EVC_NN_INSTANTIATE(float)
EVC_NN_INSTANTIATE(double)

}  // namespace evc::nn
