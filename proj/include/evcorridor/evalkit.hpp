#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evcorridor/controllers.hpp"
#include "evcorridor/env.hpp"
#include "evcorridor/model.hpp"
#include "evcorridor/rollout.hpp"

namespace evc {

// Total background delay over throughput; empty when nothing left the network.
std::optional<double> acd(double delay_total_veh_s, double throughput_veh);

// Recomputes the delay integral sum n_i (1 - v_i / v_f) dt from a recorded trace.
double replay_delay(const std::vector<StepRecord>& trace, double dt);

using EpisodeRunner = std::function<EpisodeMetrics(CorridorEnv&, uint64_t seed)>;

EpisodeRunner policy_runner(PolicyKind kind, double eps = 0.3);
EpisodeRunner model_runner(Model<float>& model, const Targets& targets);

struct EpisodeRecord {
    uint64_t seed_group = 0;
    uint64_t seed = 0;
    EpisodeMetrics metrics;
};

// Episode e of seed group s runs on episode_seed(s, e), so every runner sees the same episodes.
std::vector<EpisodeRecord> run_episodes(const Scenario& sc, const EpisodeRunner& runner,
                                        const std::vector<uint64_t>& seeds, int episodes_per_seed);

struct Summary {
    int episodes = 0;
    int arrivals = 0;
    double ett_mean = 0.0, ett_std = 0.0;
    double acd_mean = 0.0, acd_std = 0.0;
    int acd_count = 0;
    double stops_mean = 0.0;
    double throughput_mean = 0.0;
    double return_mean = 0.0;
    double delay_gini_mean = 0.0;
};

Summary summarize(const std::vector<EpisodeRecord>& recs);
std::vector<double> ett_values(const std::vector<EpisodeRecord>& recs);
std::vector<double> acd_values(const std::vector<EpisodeRecord>& recs);

enum class SweepAxis { TargetReturn, Demand, DatasetMix, Context, Depth, Hidden, Lr, Batch };

std::string axis_name(SweepAxis a);
SweepAxis parse_axis(const std::string& s);

struct SweepSpec {
    SweepAxis axis = SweepAxis::TargetReturn;
    std::vector<double> values;
    int episodes_per_seed = 20;
    std::vector<uint64_t> seeds{0, 1, 2, 3, 4};

    void validate() const;
};

struct SweepPoint {
    double value = 0.0;
    bool failed = false;
    std::string error;
    Summary summary;
    std::vector<EpisodeRecord> records;
};

// Builds the scenario and runner for one axis value; may train a model. Throwing marks
// the point failed and the sweep moves on.
using PointFactory = std::function<EpisodeRunner(double value, Scenario& sc)>;

std::vector<SweepPoint> run_sweep(const SweepSpec& spec, const Scenario& base, const PointFactory& factory);

void write_sweep_table(std::ostream& out, const SweepSpec& spec, const std::vector<SweepPoint>& pts);
void write_sweep_records(std::ostream& out, const SweepSpec& spec, const std::vector<SweepPoint>& pts);

struct ZoneDecomposition {
    std::vector<double> zone_lo, zone_hi;  // m along the route
    std::vector<double> zone_time_s;       // EV time inside each node's control zone
    double between_s = 0.0;                // time outside every zone
    double total_s = 0.0;
};

// Control zone of a route node: zone_cells cells up- and downstream of its stop line.
// Positions between trace samples are linearly interpolated.
ZoneDecomposition per_intersection_decomposition(const EvRoute& route, const std::vector<StepRecord>& trace,
                                                 double dt, int zone_cells = 2);

struct SpacetimeRow {
    int t = 0;
    double time_s = 0.0;
    double pos_m = 0.0;
    double speed = 0.0;
    std::vector<uint8_t> phases;    // per route node
    std::vector<uint8_t> ev_green;  // per route node, 1 when the phase lets the EV through
};

std::vector<SpacetimeRow> spacetime_export(const EvRoute& route, const std::vector<StepRecord>& trace, double dt);
void write_spacetime_csv(std::ostream& out, const std::vector<SpacetimeRow>& rows);

}  // namespace evc
