#include "evcorridor/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "evcorridor/checkpoint.hpp"

namespace evc {

void TrainConfig::validate() const {
    if (epochs < 1 || batch < 4) throw std::invalid_argument("epochs >= 1 and batch >= 4 required");
    if (lr <= 0.0 || lr_min < 0.0 || lr_min > lr) throw std::invalid_argument("need 0 <= lr_min <= lr, lr > 0");
    if (warmup_epochs < 0 || patience < 1) throw std::invalid_argument("bad warmup/patience");
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("val fraction must lie in [0, 1)");
}

double lr_at(long step, long total, long warmup, double lr, double lr_min) {
    if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
    const long span = total - 1 - warmup;
    if (span <= 0) return lr;
    double p = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(M_PI * p));
}

AdamW::AdamW(nn::ParamSet<float>& ps, double beta1, double beta2, double eps, double wd)
    : params_(ps.all()), b1_(beta1), b2_(beta2), eps_(eps), wd_(wd) {
    for (auto* p : params_) {
        m_.push_back(nn::Mat<float>::Zero(p->w.rows(), p->w.cols()));
        v_.push_back(nn::Mat<float>::Zero(p->w.rows(), p->w.cols()));
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const float step = static_cast<float>(lr / c1);
    const float rc2 = static_cast<float>(1.0 / std::sqrt(c2));
    const float eps = static_cast<float>(eps_);
    for (size_t i = 0; i < params_.size(); ++i) {
        auto* p = params_[i];
        if (p->decay) p->w *= static_cast<float>(1.0 - lr * wd_);
        m_[i] = b1 * m_[i] + (1.0f - b1) * p->g;
        v_[i] = b2 * v_[i] + (1.0f - b2) * p->g.cwiseProduct(p->g);
        p->w.array() -= step * m_[i].array() / (v_[i].array().sqrt() * rc2 + eps);
    }
}

double clip_grad_norm(nn::ParamSet<float>& ps, double max_norm) {
    double sq = 0.0;
    for (auto* p : ps.all()) sq += p->g.cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float s = static_cast<float>(max_norm / norm);
        for (auto* p : ps.all()) p->g *= s;
    }
    return norm;
}

static std::vector<StepTokens> window_steps(const Trajectory& tr, int end, int C, const RewardWeights& w) {
    std::vector<StepTokens> steps;
    for (int t = std::max(0, end - C + 1); t <= end; ++t) steps.push_back(trajectory_step(tr, t, w));
    return steps;
}

TokenBatch make_batch(const std::vector<Trajectory>& trajs, const std::vector<WindowRef>& refs,
                      const ModelConfig& cfg, const Network& net, const RewardWeights& w) {
    TokenBatch bt;
    bool first = true;
    for (const auto& r : refs) {
        const Trajectory& tr = trajs.at(r.traj);
        if (r.end < 0 || r.end >= tr.length()) throw std::out_of_range("window end outside the episode");
        CorridorFrame fr = make_frame(net, cfg.k_slots, tr.route_nodes, tr.ev_phase);
        if (first) {
            begin_batch(bt, cfg, fr, cfg.context);
            first = false;
        }
        append_window(bt, cfg, fr, window_steps(tr, r.end, cfg.context, w), cfg.context);
    }
    return bt;
}

EvalStats evaluate_windows(Model<float>& model, const std::vector<Trajectory>& trajs,
                           const std::vector<int>& indices, const Network& net, const RewardWeights& w,
                           int batch) {
    // Non-overlapping windows ending at T-1, T-1-C, ... so every step is scored once.
    const int C = model.config().context;
    std::vector<WindowRef> refs;
    for (int i : indices)
        for (int e = trajs[i].length() - 1; e >= 0; e -= C) refs.push_back({i, e});
    nn::Context ctx;
    double ce = 0.0;
    long count = 0, correct = 0;
    for (size_t s = 0; s < refs.size(); s += batch) {
        std::vector<WindowRef> chunk(refs.begin() + s, refs.begin() + std::min(refs.size(), s + batch));
        TokenBatch bt = make_batch(trajs, chunk, model.config(), net, w);
        LossStats ls = model.loss(bt, ctx, false);
        ce += ls.total * ls.count;
        count += ls.count;
        correct += ls.correct;
    }
    EvalStats out;
    if (count > 0) {
        out.loss = ce / count;
        out.accuracy = static_cast<double>(correct) / count;
    }
    return out;
}

void split_indices(int n, double val_fraction, uint64_t seed, std::vector<int>& train, std::vector<int>& val) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed ^ 0x5EEDULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int nv = static_cast<int>(std::round(val_fraction * n));
    val.assign(idx.begin(), idx.begin() + nv);
    train.assign(idx.begin() + nv, idx.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
}

TrainResult train(Model<float>& model, const Dataset& ds, const TrainConfig& tc,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    tc.validate();
    if (ds.trajectories.empty()) throw std::invalid_argument("empty dataset");
    const auto& trajs = ds.trajectories;
    const Network net = build_grid(ds.scenario.grid);
    const RewardWeights& w = ds.scenario.weights;
    const ModelConfig& cfg = model.config();
    for (const auto& tr : trajs)
        if (tr.K() > cfg.k_slots || tr.num_nodes != net.num_nodes())
            throw std::invalid_argument("dataset does not match the model's corridor size");

    std::vector<int> tr_idx, val_idx;
    split_indices(static_cast<int>(trajs.size()), tc.val_fraction, tc.seed, tr_idx, val_idx);
    if (tr_idx.empty()) throw std::invalid_argument("no training episodes after the validation split");
    StratifiedSampler sampler(trajs, tr_idx, tc.batch, tc.seed);

    const long spe = tc.steps_per_epoch > 0 ? tc.steps_per_epoch
                                            : (static_cast<long>(tr_idx.size()) + tc.batch - 1) / tc.batch;
    const long total = spe * tc.epochs;
    const long warm = spe * tc.warmup_epochs;

    auto& ps = model.params();
    AdamW opt(ps, tc.beta1, tc.beta2, tc.eps, tc.weight_decay);
    std::mt19937_64 drop_rng(tc.seed + 7);
    nn::Context ctx{true, cfg.dropout, &drop_rng};

    if (!tc.checkpoint_dir.empty()) std::filesystem::create_directories(tc.checkpoint_dir);

    TrainResult res;
    std::vector<nn::Mat<float>> best;
    int bad = 0;
    long step = 0;
    for (int ep = 0; ep < tc.epochs; ++ep) {
        EpochLog log;
        log.epoch = ep;
        double loss_sum = 0.0;
        long correct = 0, count = 0;
        for (long s = 0; s < spe; ++s, ++step) {
            const double lr = lr_at(step, total, warm, tc.lr, tc.lr_min);
            if (s == 0) log.lr = lr;
            ps.zero_grad();
            TokenBatch bt = make_batch(trajs, sampler.next(), cfg, net, w);
            LossStats ls = model.loss(bt, ctx, true);
            if (!std::isfinite(ls.total)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << ep << " step " << s << " (lr " << lr << ")";
                throw std::runtime_error(os.str());
            }
            clip_grad_norm(ps, tc.clip);
            opt.step(lr);
            loss_sum += ls.total;
            correct += ls.correct;
            count += ls.count;
            res.step_loss.push_back(ls.total);
        }
        log.train_loss = loss_sum / spe;
        log.train_acc = count > 0 ? static_cast<double>(correct) / count : 0.0;
        log.val_loss = val_idx.empty() ? log.train_loss : evaluate_windows(model, trajs, val_idx, net, w).loss;
        res.history.push_back(log);

        const bool improved = res.best_epoch < 0 || log.val_loss < res.best_val;
        if (improved) {
            res.best_epoch = ep;
            res.best_val = log.val_loss;
            best.clear();
            for (auto* p : ps.all()) best.push_back(p->w);
            bad = 0;
        } else {
            ++bad;
        }
        if (!tc.checkpoint_dir.empty()) {
            CheckpointMeta meta{ep, log.val_loss};
            save_checkpoint(tc.checkpoint_dir + "/last.ckpt", model, meta, &opt);
            if (improved) save_checkpoint(tc.checkpoint_dir + "/best.ckpt", model, meta);
        }
        if (on_epoch) on_epoch(log);
        if (bad >= tc.patience) {
            res.early_stopped = true;
            break;
        }
    }
    auto all = ps.all();
    for (size_t i = 0; i < all.size(); ++i) all[i]->w = best[i];
    return res;
}

}  // namespace evc
