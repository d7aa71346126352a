#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evcorridor/dataset.hpp"
#include "evcorridor/featurize.hpp"
#include "evcorridor/model.hpp"

namespace evc {

struct TrainConfig {
    int epochs = 30;
    int batch = 64;
    double lr = 1e-4;
    double lr_min = 1e-6;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_epochs = 5;
    double clip = 1.0;
    int patience = 10;
    double val_fraction = 0.1;
    uint64_t seed = 0;
    std::string checkpoint_dir;  // empty: no files
    int steps_per_epoch = 0;     // 0: ceil(train episodes / batch)

    void validate() const;
};

// Linear warmup from 0 to lr over warmup_steps, then cosine to lr_min at total_steps - 1.
double lr_at(long step, long total_steps, long warmup_steps, double lr, double lr_min);

class AdamW {
public:
    AdamW(nn::ParamSet<float>& ps, double beta1, double beta2, double eps, double weight_decay);
    void step(double lr);
    long steps() const { return t_; }
    std::vector<nn::Mat<float>>& m() { return m_; }
    std::vector<nn::Mat<float>>& v() { return v_; }
    const std::vector<nn::Mat<float>>& m() const { return m_; }
    const std::vector<nn::Mat<float>>& v() const { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    std::vector<nn::Param<float>*> params_;
    std::vector<nn::Mat<float>> m_, v_;
    double b1_, b2_, eps_, wd_;
    long t_ = 0;
};

// Rescales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(nn::ParamSet<float>& ps, double max_norm);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> history;
    std::vector<double> step_loss;
    int best_epoch = -1;
    double best_val = 0.0;
    bool early_stopped = false;
};

// Batch of training windows; the frame of each trajectory is rebuilt from net.
TokenBatch make_batch(const std::vector<Trajectory>& trajs, const std::vector<WindowRef>& refs,
                      const ModelConfig& cfg, const Network& net, const RewardWeights& w);

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Loss and per-head accuracy with dropout off, over every window end of each listed trajectory.
EvalStats evaluate_windows(Model<float>& model, const std::vector<Trajectory>& trajs,
                           const std::vector<int>& indices, const Network& net, const RewardWeights& w,
                           int batch = 64);

void split_indices(int n, double val_fraction, uint64_t seed, std::vector<int>& train, std::vector<int>& val);

TrainResult train(Model<float>& model, const Dataset& ds, const TrainConfig& tc,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace evc
