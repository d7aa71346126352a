// Command-line front end: generate-dataset, train, evaluate, sweep, bench, serve.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"

#include "evcorridor/checkpoint.hpp"
#include "evcorridor/config.hpp"
#include "evcorridor/controllers.hpp"
#include "evcorridor/dataset.hpp"
#include "evcorridor/evalkit.hpp"
#include "evcorridor/rollout.hpp"
#include "evcorridor/serialize.hpp"
#include "evcorridor/serve.hpp"
#include "evcorridor/stats.hpp"
#include "evcorridor/train.hpp"
#include "evcorridor/ws_server.hpp"

using namespace evc;
using nlohmann::json;

namespace {

struct ScenarioFlags {
    int grid_size = 4;
    std::string config;
    double demand = -1.0;

    void add(CLI::App* app) {
        app->add_option("--grid-size", grid_size, "Rows and columns of the square grid")->check(CLI::Range(2, 32));
        app->add_option("--config", config, "key = value grid config file (overrides --grid-size)")
            ->check(CLI::ExistingFile);
        app->add_option("--demand", demand, "Entry demand, veh/s per boundary entry")->check(CLI::Range(0.0, 1.0));
    }

    Scenario build() const {
        Scenario sc;
        sc.grid.rows = sc.grid.cols = grid_size;
        if (!config.empty()) {
            GridConfig base;
            base.spec = sc.grid;
            sc.grid = grid_config_from(load_key_values(config), base).spec;
        }
        if (demand >= 0.0) sc.grid.entry_demand = demand;
        sc.grid.validate();
        sc.id = "grid" + std::to_string(sc.grid.rows) + "x" + std::to_string(sc.grid.cols);
        return sc;
    }
};

struct ModelFlags {
    std::string type = "dt";
    int hidden = 128;
    int layers = -1;
    int heads = 4;
    int context = -1;
    float dropout = 0.1f;
    bool no_causal = false;

    void add(CLI::App* app) {
        app->add_option("--model-type", type, "dt, madt or cdt")->check(CLI::IsMember({"dt", "madt", "cdt"}));
        app->add_option("--hidden-dim", hidden, "Hidden size d")->check(CLI::PositiveNumber);
        app->add_option("--num-layers", layers, "Transformer layers (default 4, MADT 3)")->check(CLI::PositiveNumber);
        app->add_option("--num-heads", heads, "Attention heads")->check(CLI::PositiveNumber);
        app->add_option("--context-length", context, "Context C (default 30, MADT 20)")->check(CLI::PositiveNumber);
        app->add_option("--dropout", dropout, "Dropout during training")->check(CLI::Range(0.0, 0.9));
        app->add_flag("--no-causal-mask", no_causal, "Ablation: full attention during training and rollout");
    }

    ModelConfig build(const Scenario& sc) const {
        Variant v = parse_variant(type);
        ModelConfig c = v == Variant::MADT ? ModelConfig::madt_defaults()
                        : v == Variant::CDT ? ModelConfig::cdt_defaults()
                                            : ModelConfig::dt_defaults();
        c.d = hidden;
        c.heads = heads;
        if (layers > 0) c.layers = layers;
        if (context > 0) c.context = context;
        c.dropout = dropout;
        c.causal = !no_causal;
        c.k_slots = sc.grid.rows + sc.grid.cols - 1;
        c.num_nodes = sc.grid.rows * sc.grid.cols;
        c.t_max = sc.t_max;
        c.validate();
        return c;
    }
};

struct TrainFlags {
    TrainConfig tc;
    bool stratified = true;
    std::string loss_history;

    void add(CLI::App* app) {
        app->add_option("--lr", tc.lr, "Peak learning rate")->check(CLI::PositiveNumber);
        app->add_option("--weight-decay", tc.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
        app->add_option("--batch-size", tc.batch, "Windows per batch (multiple of 4)")->check(CLI::Range(4, 4096));
        app->add_option("--epochs", tc.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
        app->add_option("--warmup-epochs", tc.warmup_epochs, "Linear warmup epochs")->check(CLI::NonNegativeNumber);
        app->add_option("--grad-clip", tc.clip, "Global gradient-norm clip")->check(CLI::PositiveNumber);
        app->add_option("--patience", tc.patience, "Early-stopping patience in epochs")->check(CLI::PositiveNumber);
        app->add_option("--val-split", tc.val_fraction, "Held-out fraction")->check(CLI::Range(0.0, 0.9));
        app->add_option("--steps-per-epoch", tc.steps_per_epoch, "Override batches per epoch");
        app->add_flag("--stratified-sampling", stratified,
                      "Quartile-stratified batches; always on, accepted for command compatibility");
        app->add_option("--loss-history", loss_history, "Write per-epoch losses as JSON lines");
    }
};

std::vector<uint64_t> default_seeds() { return {0, 1, 2, 3, 4}; }

std::unique_ptr<Model<float>> load_model(const std::string& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
    CheckpointMeta meta;
    auto m = load_checkpoint(path, &meta);
    std::cerr << "loaded " << variant_name(m->config().variant) << " checkpoint " << path << " (epoch " << meta.epoch
              << ", " << m->param_count() << " parameters)\n";
    return m;
}

void check_model_scenario(const Model<float>& m, const Scenario& sc) {
    const auto& c = m.config();
    if (c.k_slots != sc.grid.rows + sc.grid.cols - 1 || c.num_nodes != sc.grid.rows * sc.grid.cols)
        throw std::runtime_error("checkpoint was trained for a different grid size");
}

json summary_json(const Summary& s) {
    return json{{"episodes", s.episodes},
                {"arrivals", s.arrivals},
                {"ett_mean_s", s.ett_mean},
                {"ett_std_s", s.ett_std},
                {"acd_mean_s_per_veh", s.acd_mean},
                {"acd_std_s_per_veh", s.acd_std},
                {"acd_episodes", s.acd_count},
                {"ev_stops_mean", s.stops_mean},
                {"throughput_mean_veh", s.throughput_mean},
                {"return_mean", s.return_mean},
                {"delay_gini_mean", s.delay_gini_mean}};
}

void print_summary(const std::string& label, const Summary& s) {
    std::cout << std::fixed << std::setprecision(2) << label << ": episodes " << s.episodes << ", arrived "
              << s.arrivals << ", ETT " << s.ett_mean << " +- " << s.ett_std << " s, ACD " << s.acd_mean << " +- "
              << s.acd_std << " s/veh, stops " << s.stops_mean << ", throughput " << s.throughput_mean << " veh\n";
    std::cout.unsetf(std::ios::fixed);
}

int cmd_generate(const ScenarioFlags& sf, MixSpec mix, double noisy_ratio, const std::string& out) {
    if (std::fabs(mix.expert + mix.random + noisy_ratio - 1.0) > 1e-9)
        throw std::runtime_error("--expert-ratio, --random-ratio and --noisy-ratio must sum to 1");
    mix.noisy = noisy_ratio;
    Scenario sc = sf.build();
    auto t0 = std::chrono::steady_clock::now();
    Dataset ds = collect(mix, sc, [](int done, int total) {
        if (done % 500 == 0 || done == total) std::cerr << "\r" << done << "/" << total << " episodes" << std::flush;
    });
    std::cerr << "\n";
    if (auto dir = std::filesystem::path(out).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    save_dataset(ds, out);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& st = ds.stats;
    std::cout << "wrote " << out << ": " << st.episodes << " episodes in " << std::setprecision(3) << secs << " s\n";
    for (const auto& [name, p] : st.per_policy)
        std::cout << "  " << name << ": " << p.count << " episodes, mean return " << p.return_mean << ", mean ETT "
                  << p.ett_mean << " s\n";
    std::cout << "  length " << st.length_mean << " +- " << st.length_std << ", return " << st.return_mean << " +- "
              << st.return_std << ", coverage " << st.coverage << "\n";
    return 0;
}

TrainResult train_and_save(const Dataset& ds, const ModelFlags& mf, TrainFlags tf, uint64_t seed,
                           const std::string& out, std::unique_ptr<Model<float>>* keep = nullptr) {
    ModelConfig cfg = mf.build(ds.scenario);
    tf.tc.seed = seed;
    auto model = std::make_unique<Model<float>>(cfg, seed);
    std::cerr << variant_name(cfg.variant) << ": " << model->param_count() << " parameters, " << ds.trajectories.size()
              << " episodes\n";
    std::ofstream hist;
    if (!tf.loss_history.empty()) hist.open(tf.loss_history);
    TrainResult res = train(*model, ds, tf.tc, [&](const EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " lr " << e.lr << " train " << e.train_loss << " val " << e.val_loss
                  << " acc " << e.train_acc << "\n";
        if (hist) hist << json{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss}, {"train_acc", e.train_acc}}.dump()
                       << std::endl;
    });
    if (!out.empty()) {
        if (auto dir = std::filesystem::path(out).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
        save_checkpoint(out, *model, CheckpointMeta{res.best_epoch, res.best_val});
        std::cout << "wrote " << out << " (best epoch " << res.best_epoch << ", val loss " << res.best_val
                  << (res.early_stopped ? ", early stop" : "") << ")\n";
    }
    if (keep) *keep = std::move(model);
    return res;
}

struct EvalFlags {
    std::string model;
    std::string policy;
    std::string model_type;  // accepted for command compatibility
    int episodes = 20;
    std::vector<uint64_t> seeds = default_seeds();
    double target_return = 0.0;
    double cost_target = 0.0;
    bool has_cost = false;
    std::string output;

    // The sweep command gets --model-type from its training flags instead.
    void add(CLI::App* app, bool with_model_type = true) {
        auto* m = app->add_option("--model", model, "Checkpoint to evaluate");
        auto* p = app->add_option("--policy", policy, "Baseline instead of a model: ft-evp, greedy, max-pressure, random, noisy")
                      ->check(CLI::IsMember({"ft-evp", "greedy", "max-pressure", "random", "noisy"}));
        m->excludes(p);
        if (with_model_type)
            app->add_option("--model-type", model_type, "Ignored; the checkpoint header names the variant");
        app->add_option("--num-episodes", episodes, "Episodes per seed")->check(CLI::PositiveNumber);
        app->add_option("--seeds", seeds, "Seed groups")->expected(1, -1);
        app->add_option("--target-return", target_return, "G*, target return in excess of the arrival baseline");
        app->add_option("--cost-target", cost_target, "C*, CDT cost budget in reward units")
            ->each([this](const std::string&) { has_cost = true; });
        app->add_option("--output", output, "Summary and per-episode records as JSON");
    }
};

int cmd_evaluate(const ScenarioFlags& sf, const EvalFlags& ef) {
    if (ef.model.empty() && ef.policy.empty()) throw std::runtime_error("evaluate needs --model or --policy");
    Scenario sc = sf.build();
    std::unique_ptr<Model<float>> model;
    EpisodeRunner runner;
    std::string label;
    Targets tg{ef.target_return, ef.has_cost ? std::optional<double>(ef.cost_target) : std::nullopt};
    if (!ef.model.empty()) {
        model = load_model(ef.model);
        check_model_scenario(*model, sc);
        runner = model_runner(*model, tg);
        label = variant_name(model->config().variant) + " G*=" + std::to_string(ef.target_return);
    } else {
        runner = policy_runner(parse_policy(ef.policy));
        label = ef.policy;
    }
    auto recs = run_episodes(sc, runner, ef.seeds, ef.episodes);
    Summary s = summarize(recs);
    print_summary(label, s);
    if (!ef.output.empty()) {
        json j{{"label", label}, {"scenario", scenario_to_json(sc)}, {"seeds", ef.seeds},
               {"episodes_per_seed", ef.episodes}, {"target_return", ef.target_return}, {"summary", summary_json(s)}};
        if (tg.c_star) j["cost_target"] = *tg.c_star;
        json eps = json::array();
        for (const auto& r : recs)
            eps.push_back({{"seed_group", r.seed_group}, {"seed", r.seed}, {"ett_s", r.metrics.ett_s},
                           {"arrived", r.metrics.arrived},
                           {"acd_s_per_veh", r.metrics.acd_valid ? json(r.metrics.acd_s_per_veh) : json()},
                           {"ev_stops", r.metrics.ev_stops}, {"throughput", r.metrics.throughput},
                           {"return", r.metrics.episode_return}});
        j["episodes"] = eps;
        if (auto dir = std::filesystem::path(ef.output).parent_path(); !dir.empty())
            std::filesystem::create_directories(dir);
        std::ofstream(ef.output) << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_bench(int steps, const std::string& output) {
    json report = json::array();
    for (int n : {4, 8}) {
        Scenario sc;
        sc.grid.rows = sc.grid.cols = n;
        CorridorEnv env(sc);
        auto pol = make_policy(PolicyKind::FixedTimeEVP);
        uint64_t seed = 0;
        env.reset(seed);
        pol->reset(seed);
        int done_steps = 0;
        auto t0 = std::chrono::steady_clock::now();
        while (done_steps < steps) {
            if (env.done()) {
                env.reset(++seed);
                pol->reset(seed);
            }
            env.step(pol->act(env));
            ++done_steps;
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ModelConfig cfg;
        cfg.k_slots = 2 * n - 1;
        cfg.num_nodes = n * n;
        Model<float> model(cfg, 0);
        env.reset(1);
        DtController ctl(model, sc.weights);
        ctl.begin(env, Targets{});
        int model_steps = 0;
        auto t1 = std::chrono::steady_clock::now();
        while (!env.done() && model_steps < 30) {
            ctl.observe(env.step(ctl.act(env)));
            ++model_steps;
        }
        double ms = 1e3 * std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count() /
                    std::max(1, model_steps);
        const double sps = steps / secs;
        std::cout << n << "x" << n << ": " << env.network().num_cells() << " cells, " << std::fixed
                  << std::setprecision(0) << sps << " env steps/s, " << std::setprecision(2) << ms
                  << " ms/step with DT inference\n";
        std::cout.unsetf(std::ios::fixed);
        report.push_back({{"grid", n}, {"cells", env.network().num_cells()}, {"env_steps_per_s", sps},
                          {"model_ms_per_step", ms}});
    }
    if (!output.empty()) std::ofstream(output) << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EV corridor simulator, offline return-conditioned controllers and evaluation"};
    app.require_subcommand(1);

    // generate-dataset
    auto* gen = app.add_subcommand("generate-dataset", "Record a mixed-quality offline dataset");
    ScenarioFlags gen_sf;
    gen_sf.add(gen);
    MixSpec mix;
    double noisy_ratio = 0.15;
    std::string gen_out;
    gen->add_option("--num-episodes", mix.episodes, "Episodes")->check(CLI::PositiveNumber);
    gen->add_option("--expert-ratio", mix.expert, "Greedy-preemption share")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--random-ratio", mix.random, "Uniform-random share")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--noisy-ratio", noisy_ratio, "Noisy-expert share")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--noisy-eps", mix.noisy_eps, "Noisy-expert resampling probability")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", mix.seed, "Base seed");
    gen->add_option("--output", gen_out, "Dataset file")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train DT, MADT or CDT on a dataset");
    std::string tr_data, tr_out;
    uint64_t tr_seed = 0;
    ModelFlags tr_mf;
    TrainFlags tr_tf;
    tr->add_option("--dataset", tr_data, "Dataset file")->required()->check(CLI::ExistingFile);
    tr_mf.add(tr);
    tr_tf.add(tr);
    tr->add_option("--output", tr_out, "Checkpoint path")->required();
    tr->add_option("--checkpoint-dir", tr_tf.tc.checkpoint_dir, "Per-epoch last/best checkpoints");
    tr->add_option("--seed", tr_seed, "Initialization and sampling seed");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint or a baseline policy");
    ScenarioFlags ev_sf;
    ev_sf.add(ev);
    EvalFlags ef;
    ef.add(ev);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Sweep one axis and tabulate ETT/ACD per value");
    ScenarioFlags sw_sf;
    sw_sf.add(sw);
    EvalFlags sw_ef;
    sw_ef.add(sw, false);
    std::string axis = "target_return", sw_data, sw_out_prefix;
    std::vector<double> values;
    ModelFlags sw_mf;
    TrainFlags sw_tf;
    int sw_train_eps = 1000;
    sw->add_option("--axis", axis, "target_return, demand, dataset_mix, context, depth, hidden, lr, batch")
        ->check(CLI::IsMember({"target_return", "demand", "dataset_mix", "context", "depth", "hidden", "lr", "batch"}));
    sw->add_option("--values", values, "Axis values")->required()->expected(1, -1);
    sw->add_option("--dataset", sw_data, "Training data for context/depth/hidden/lr/batch axes");
    sw->add_option("--train-episodes", sw_train_eps, "Episodes generated per dataset_mix point")
        ->check(CLI::PositiveNumber);
    sw->add_option("--out-prefix", sw_out_prefix, "Write <prefix>_<axis>.txt and <prefix>_<axis>.jsonl");
    sw_mf.add(sw);
    sw_tf.add(sw);

    // bench
    auto* be = app.add_subcommand("bench", "Environment and inference throughput on 4x4 and 8x8");
    int be_steps = 20000;
    std::string be_out;
    be->add_option("--steps", be_steps, "Environment steps per grid")->check(CLI::PositiveNumber);
    be->add_option("--output", be_out, "JSON report");

    // serve
    auto* sv = app.add_subcommand("serve", "Live episode over WebSocket for the dispatch console");
    ScenarioFlags sv_sf;
    sv_sf.add(sv);
    std::string sv_model, sv_policy = "ft-evp", sv_addr = "127.0.0.1";
    int sv_port = 8765;
    if (const char* p = std::getenv("EVC_SERVE_PORT")) sv_port = std::atoi(p);
    ServeConfig scfg;
    sv->add_option("--model", sv_model, "Checkpoint; without it --policy drives the episode");
    sv->add_option("--policy", sv_policy, "Baseline used without --model")
        ->check(CLI::IsMember({"ft-evp", "greedy", "max-pressure", "random", "noisy"}));
    sv->add_option("--address", sv_addr, "Listen address");
    sv->add_option("--port", sv_port, "Listen port (default $EVC_SERVE_PORT or 8765)")->check(CLI::Range(0, 65535));
    sv->add_option("--rate", scfg.rate, "Control steps per second")->check(CLI::PositiveNumber);
    sv->add_option("--seed", scfg.seed, "Episode seed");
    sv->add_option("--target-return", scfg.targets.g_star, "Initial G*");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_generate(gen_sf, mix, noisy_ratio, gen_out);
        if (*tr) {
            Dataset ds = load_dataset(tr_data);
            train_and_save(ds, tr_mf, tr_tf, tr_seed, tr_out);
            return 0;
        }
        if (*ev) return cmd_evaluate(ev_sf, ef);
        if (*sw) {
            SweepSpec spec;
            spec.axis = parse_axis(axis);
            spec.values = values;
            spec.episodes_per_seed = sw_ef.episodes;
            spec.seeds = sw_ef.seeds;
            Scenario base = sw_sf.build();
            std::unique_ptr<Model<float>> fixed_model, point_model;
            if (!sw_ef.model.empty()) {
                fixed_model = load_model(sw_ef.model);
                check_model_scenario(*fixed_model, base);
            }
            std::optional<Dataset> data;
            if (!sw_data.empty()) data = load_dataset(sw_data);
            Targets tg{sw_ef.target_return, sw_ef.has_cost ? std::optional<double>(sw_ef.cost_target) : std::nullopt};

            PointFactory factory = [&](double v, Scenario& sc) -> EpisodeRunner {
                switch (spec.axis) {
                    case SweepAxis::TargetReturn:
                        if (!fixed_model) throw std::runtime_error("target_return sweep needs --model");
                        return model_runner(*fixed_model, Targets{v, tg.c_star});
                    case SweepAxis::Demand:
                        sc.grid.entry_demand = v;
                        if (fixed_model) return model_runner(*fixed_model, tg);
                        return policy_runner(parse_policy(sw_ef.policy.empty() ? "ft-evp" : sw_ef.policy));
                    case SweepAxis::DatasetMix: {
                        MixSpec m;
                        m.episodes = sw_train_eps;
                        m.expert = v;
                        m.random = m.noisy = (1.0 - v) / 2.0;
                        Dataset ds = collect(m, sc);
                        train_and_save(ds, sw_mf, sw_tf, 0, "", &point_model);
                        return model_runner(*point_model, tg);
                    }
                    default: {
                        if (!data) throw std::runtime_error("this axis trains per point and needs --dataset");
                        ModelFlags mf = sw_mf;
                        TrainFlags tf = sw_tf;
                        if (spec.axis == SweepAxis::Context) mf.context = static_cast<int>(v);
                        if (spec.axis == SweepAxis::Depth) mf.layers = static_cast<int>(v);
                        if (spec.axis == SweepAxis::Hidden) mf.hidden = static_cast<int>(v);
                        if (spec.axis == SweepAxis::Lr) tf.tc.lr = v;
                        if (spec.axis == SweepAxis::Batch) tf.tc.batch = static_cast<int>(v);
                        train_and_save(*data, mf, tf, 0, "", &point_model);
                        return model_runner(*point_model, tg);
                    }
                }
            };
            auto pts = run_sweep(spec, base, factory);
            write_sweep_table(std::cout, spec, pts);
            std::vector<double> xs, ett, acdm;
            for (const auto& p : pts)
                if (!p.failed) {
                    xs.push_back(p.value);
                    ett.push_back(p.summary.ett_mean);
                    acdm.push_back(p.summary.acd_mean);
                }
            if (xs.size() >= 2)
                std::cout << "spearman(value, ETT) = " << spearman(xs, ett) << ", spearman(value, ACD) = "
                          << spearman(xs, acdm) << "\n";
            if (!sw_out_prefix.empty()) {
                const std::string stem = sw_out_prefix + "_" + axis_name(spec.axis);
                std::ofstream t(stem + ".txt");
                write_sweep_table(t, spec, pts);
                std::ofstream r(stem + ".jsonl");
                write_sweep_records(r, spec, pts);
            }
            return 0;
        }
        if (*be) return cmd_bench(be_steps, be_out);
        if (*sv) {
            scfg.scenario = sv_sf.build();
            scfg.fallback = parse_policy(sv_policy);
            std::unique_ptr<Model<float>> model;
            if (!sv_model.empty()) {
                model = load_model(sv_model);
                check_model_scenario(*model, scfg.scenario);
            }
            ServeSession session(scfg, model.get());
            WsServer server(session, sv_addr, static_cast<uint16_t>(sv_port));
            server.stop_on_signals();
            std::cout << "serving on ws://" << sv_addr << ":" << server.port() << std::endl;
            server.run();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
