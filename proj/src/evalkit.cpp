#include "evcorridor/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

#include "json.hpp"

#include "evcorridor/dataset.hpp"
#include "evcorridor/stats.hpp"

namespace evc {

std::optional<double> acd(double delay_total, double throughput) {
    if (!(throughput > 0.0)) return std::nullopt;
    return delay_total / throughput;
}

double replay_delay(const std::vector<StepRecord>& trace, double dt) {
    double total = 0.0;
    for (const auto& r : trace) {
        for (size_t c = 0; c < r.density.size(); ++c) {
            // Count held during the update: post-update count minus this step's net inflow.
            const double n = r.density[c] - r.inflow[c] + r.outflow[c];
            if (n <= 0.0) continue;
            const double v_over_vf = r.outflow[c] / n;  // realized speed, normalized units
            total += n * (1.0 - v_over_vf) * dt;
        }
    }
    return total;
}

EpisodeRunner policy_runner(PolicyKind kind, double eps) {
    auto pol = std::shared_ptr<Policy>(make_policy(kind, eps));
    return [pol](CorridorEnv& env, uint64_t seed) {
        env.reset(seed);
        pol->reset(seed);
        while (!env.done()) env.step(pol->act(env));
        return env.metrics();
    };
}

EpisodeRunner model_runner(Model<float>& model, const Targets& targets) {
    return [&model, targets](CorridorEnv& env, uint64_t seed) {
        RolloutOptions opt;
        opt.targets = targets;
        return rollout(model, env, seed, opt).metrics;
    };
}

std::vector<EpisodeRecord> run_episodes(const Scenario& sc, const EpisodeRunner& runner,
                                        const std::vector<uint64_t>& seeds, int episodes_per_seed) {
    CorridorEnv env(sc);
    std::vector<EpisodeRecord> out;
    for (uint64_t s : seeds)
        for (int e = 0; e < episodes_per_seed; ++e) {
            EpisodeRecord r;
            r.seed_group = s;
            r.seed = episode_seed(s, static_cast<uint64_t>(e));
            r.metrics = runner(env, r.seed);
            out.push_back(std::move(r));
        }
    return out;
}

std::vector<double> ett_values(const std::vector<EpisodeRecord>& recs) {
    std::vector<double> v;
    for (const auto& r : recs) v.push_back(r.metrics.ett_s);
    return v;
}

std::vector<double> acd_values(const std::vector<EpisodeRecord>& recs) {
    std::vector<double> v;
    for (const auto& r : recs)
        if (r.metrics.acd_valid) v.push_back(r.metrics.acd_s_per_veh);
    return v;
}

Summary summarize(const std::vector<EpisodeRecord>& recs) {
    Summary s;
    s.episodes = static_cast<int>(recs.size());
    if (recs.empty()) return s;
    auto ett = ett_values(recs), a = acd_values(recs);
    s.ett_mean = mean(ett);
    s.ett_std = stddev(ett);
    s.acd_mean = mean(a);
    s.acd_std = stddev(a);
    s.acd_count = static_cast<int>(a.size());
    std::vector<double> stops, thr, ret, gin;
    for (const auto& r : recs) {
        s.arrivals += r.metrics.arrived;
        stops.push_back(r.metrics.ev_stops);
        thr.push_back(r.metrics.throughput);
        ret.push_back(r.metrics.episode_return);
        gin.push_back(gini(r.metrics.intersection_delay_s));
    }
    s.stops_mean = mean(stops);
    s.throughput_mean = mean(thr);
    s.return_mean = mean(ret);
    s.delay_gini_mean = mean(gin);
    return s;
}

static const char* kAxisNames[] = {"target_return", "demand", "dataset_mix", "context", "depth", "hidden", "lr", "batch"};

std::string axis_name(SweepAxis a) { return kAxisNames[static_cast<int>(a)]; }

SweepAxis parse_axis(const std::string& s) {
    for (int i = 0; i < 8; ++i)
        if (s == kAxisNames[i]) return static_cast<SweepAxis>(i);
    throw std::invalid_argument("unknown sweep axis: " + s);
}

void SweepSpec::validate() const {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    if (episodes_per_seed < 1 || seeds.empty()) throw std::invalid_argument("sweep needs episodes and seeds");
}

std::vector<SweepPoint> run_sweep(const SweepSpec& spec, const Scenario& base, const PointFactory& factory) {
    spec.validate();
    std::vector<SweepPoint> out;
    for (double v : spec.values) {
        SweepPoint p;
        p.value = v;
        try {
            Scenario sc = base;
            EpisodeRunner runner = factory(v, sc);
            p.records = run_episodes(sc, runner, spec.seeds, spec.episodes_per_seed);
            p.summary = summarize(p.records);
        } catch (const std::exception& e) {
            p.failed = true;
            p.error = e.what();
        }
        out.push_back(std::move(p));
    }
    return out;
}

void write_sweep_table(std::ostream& out, const SweepSpec& spec, const std::vector<SweepPoint>& pts) {
    out << std::left << std::setw(14) << axis_name(spec.axis) << std::right << std::setw(6) << "n" << std::setw(9)
        << "arrived" << std::setw(10) << "ETT" << std::setw(9) << "ETT_sd" << std::setw(9) << "ACD" << std::setw(9)
        << "ACD_sd" << std::setw(8) << "stops" << std::setw(10) << "return" << "\n";
    out << std::fixed;
    for (const auto& p : pts) {
        out << std::left << std::setw(14) << std::setprecision(6) << p.value << std::right;
        if (p.failed) {
            out << "  failed: " << p.error << "\n";
            continue;
        }
        const auto& s = p.summary;
        out << std::setw(6) << s.episodes << std::setw(9) << s.arrivals << std::setprecision(2) << std::setw(10)
            << s.ett_mean << std::setw(9) << s.ett_std << std::setw(9) << s.acd_mean << std::setw(9) << s.acd_std
            << std::setw(8) << s.stops_mean << std::setw(10) << s.return_mean << "\n";
    }
    out.unsetf(std::ios::fixed);
}

void write_sweep_records(std::ostream& out, const SweepSpec& spec, const std::vector<SweepPoint>& pts) {
    for (const auto& p : pts) {
        if (p.failed) {
            nlohmann::json j{{"axis", axis_name(spec.axis)}, {"value", p.value}, {"failed", true}, {"error", p.error}};
            out << j.dump() << "\n";
            continue;
        }
        for (const auto& r : p.records) {
            const auto& m = r.metrics;
            nlohmann::json j{{"axis", axis_name(spec.axis)},
                             {"value", p.value},
                             {"seed_group", r.seed_group},
                             {"seed", r.seed},
                             {"ett_s", m.ett_s},
                             {"arrived", m.arrived},
                             {"acd_s_per_veh", m.acd_valid ? nlohmann::json(m.acd_s_per_veh) : nlohmann::json()},
                             {"throughput", m.throughput},
                             {"ev_stops", m.ev_stops},
                             {"return", m.episode_return},
                             {"clipped_entries", m.clipped_entries},
                             {"intersection_delay_s", m.intersection_delay_s}};
            out << j.dump() << "\n";
        }
    }
}

ZoneDecomposition per_intersection_decomposition(const EvRoute& route, const std::vector<StepRecord>& trace,
                                                 double dt, int zone_cells) {
    ZoneDecomposition z;
    const int K = route.K();
    const double half = zone_cells * route.cell_length;
    for (int i = 0; i < K; ++i) {
        z.zone_lo.push_back(std::max(0.0, route.node_pos[i] - half));
        z.zone_hi.push_back(std::min(route.length, route.node_pos[i] + half));
    }
    z.zone_time_s.assign(K, 0.0);
    auto zone_of = [&](double p) {
        for (int i = 0; i < K; ++i)
            if (p >= z.zone_lo[i] && (p < z.zone_hi[i] || (i == K - 1 && p <= z.zone_hi[i]))) return i;
        return -1;
    };
    double p0 = 0.0;
    for (const auto& r : trace) {
        const double p1 = r.ev_pos;
        z.total_s += dt;
        double inside = 0.0;
        if (std::fabs(p1 - p0) < 1e-12) {
            int i = zone_of(p0);
            if (i >= 0) {
                z.zone_time_s[i] += dt;
                inside = dt;
            }
        } else {
            const double lo = std::min(p0, p1), hi = std::max(p0, p1);
            for (int i = 0; i < K; ++i) {
                const double ov = std::min(hi, z.zone_hi[i]) - std::max(lo, z.zone_lo[i]);
                if (ov > 0.0) {
                    // Overlapping zones would double count; the caller keeps zone_cells small.
                    const double t = dt * ov / (hi - lo);
                    z.zone_time_s[i] += t;
                    inside += t;
                }
            }
        }
        z.between_s += std::max(0.0, dt - inside);
        p0 = p1;
    }
    return z;
}

std::vector<SpacetimeRow> spacetime_export(const EvRoute& route, const std::vector<StepRecord>& trace, double dt) {
    std::vector<SpacetimeRow> rows;
    for (const auto& r : trace) {
        SpacetimeRow row;
        row.t = r.t;
        row.time_s = (r.t + 1) * dt;
        row.pos_m = r.ev_pos;
        row.speed = r.ev_speed;
        for (int i = 0; i < route.K(); ++i) {
            const uint8_t ph = r.phases[route.nodes[i]];
            row.phases.push_back(ph);
            row.ev_green.push_back(ph == route.ev_phase[i] ? 1 : 0);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_spacetime_csv(std::ostream& out, const std::vector<SpacetimeRow>& rows) {
    out << "t,time_s,pos_m,speed_mps,phases,ev_green\n";
    for (const auto& r : rows) {
        out << r.t << "," << r.time_s << "," << r.pos_m << "," << r.speed << ",";
        for (size_t i = 0; i < r.phases.size(); ++i) out << (i ? ";" : "") << int(r.phases[i]);
        out << ",";
        for (size_t i = 0; i < r.ev_green.size(); ++i) out << (i ? ";" : "") << int(r.ev_green[i]);
        out << "\n";
    }
}

}  // namespace evc
