#include "evcorridor/serialize.hpp"

namespace evc {

nlohmann::json scenario_to_json(const Scenario& sc) {
    const auto& g = sc.grid;
    nlohmann::json j;
    j["id"] = sc.id;
    j["rows"] = g.rows;
    j["cols"] = g.cols;
    j["link_length_m"] = g.link_length;
    j["v_f"] = g.v_f;
    j["w"] = g.w;
    j["k_jam"] = g.k_jam;
    j["dt_s"] = g.dt;
    j["demand_veh_s"] = g.entry_demand;
    j["ratio_through"] = g.ratio_through;
    j["ratio_left"] = g.ratio_left;
    j["ratio_right"] = g.ratio_right;
    j["warmup_steps"] = sc.warmup_steps;
    j["t_max"] = sc.t_max;
    j["horizon_cells"] = sc.horizon_cells;
    j["min_manhattan"] = sc.min_manhattan;
    j["ft_phase_steps"] = sc.ft_phase_steps;
    j["background"] = sc.background == BackgroundControl::MaxPressure ? "max-pressure" : "fixed-time";
    j["alpha"] = sc.weights.alpha;
    j["beta"] = sc.weights.beta;
    j["lambda"] = sc.weights.lambda;
    j["fixed_route"] = sc.fixed_route;
    return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario sc;
    auto& g = sc.grid;
    sc.id = j.value("id", sc.id);
    g.rows = j.value("rows", g.rows);
    g.cols = j.value("cols", g.cols);
    g.link_length = j.value("link_length_m", g.link_length);
    g.v_f = j.value("v_f", g.v_f);
    g.w = j.value("w", g.w);
    g.k_jam = j.value("k_jam", g.k_jam);
    g.dt = j.value("dt_s", g.dt);
    g.entry_demand = j.value("demand_veh_s", g.entry_demand);
    g.ratio_through = j.value("ratio_through", g.ratio_through);
    g.ratio_left = j.value("ratio_left", g.ratio_left);
    g.ratio_right = j.value("ratio_right", g.ratio_right);
    sc.warmup_steps = j.value("warmup_steps", sc.warmup_steps);
    sc.t_max = j.value("t_max", sc.t_max);
    sc.horizon_cells = j.value("horizon_cells", sc.horizon_cells);
    sc.min_manhattan = j.value("min_manhattan", sc.min_manhattan);
    sc.ft_phase_steps = j.value("ft_phase_steps", sc.ft_phase_steps);
    sc.background = j.value("background", std::string("fixed-time")) == "max-pressure"
                        ? BackgroundControl::MaxPressure
                        : BackgroundControl::FixedTime;
    sc.weights.alpha = j.value("alpha", sc.weights.alpha);
    sc.weights.beta = j.value("beta", sc.weights.beta);
    sc.weights.lambda = j.value("lambda", sc.weights.lambda);
    if (j.contains("fixed_route")) sc.fixed_route = j["fixed_route"].get<std::vector<int>>();
    g.validate();
    return sc;
}

}  // namespace evc
