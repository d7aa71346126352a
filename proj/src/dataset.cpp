#include "evcorridor/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "evcorridor/serialize.hpp"

namespace evc {

namespace {
constexpr const char* kMagic = "EVCDATA";
}

std::vector<double> compute_rtg(const std::vector<double>& rewards) {
    std::vector<double> out(rewards.size());
    double acc = 0.0;
    for (size_t i = rewards.size(); i-- > 0;) {
        acc += rewards[i];
        out[i] = acc;
    }
    return out;
}

std::vector<double> compute_ctg(const std::vector<double>& costs) { return compute_rtg(costs); }

void MixSpec::validate() const {
    if (expert < 0 || random < 0 || noisy < 0) throw std::invalid_argument("mix fractions must be non-negative");
    if (std::abs(expert + random + noisy - 1.0) > 1e-6) throw std::invalid_argument("mix fractions must sum to 1");
    if (episodes < 1) throw std::invalid_argument("episode count must be positive");
    if (noisy_eps < 0 || noisy_eps > 1) throw std::invalid_argument("noisy epsilon must lie in [0, 1]");
}

std::array<int, 3> MixSpec::counts() const {
    int e = static_cast<int>(std::lround(episodes * expert));
    int r = static_cast<int>(std::lround(episodes * random));
    e = std::min(e, episodes);
    r = std::min(r, episodes - e);
    return {e, r, episodes - e - r};
}

uint64_t episode_seed(uint64_t base, uint64_t index) {
    // splitmix64 finalizer over (base, index)
    uint64_t z = base * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Trajectory record_episode(CorridorEnv& env, Policy& policy, uint64_t seed) {
    Trajectory tr;
    env.reset(seed);
    policy.reset(seed);
    tr.policy = policy.kind();
    tr.seed = seed;
    tr.scenario_id = env.scenario().id;
    tr.num_nodes = env.network().num_nodes();
    tr.k_slots = env.k_slots();
    tr.route_nodes.assign(env.route().nodes.begin(), env.route().nodes.end());
    tr.ev_phase = env.route().ev_phase;
    while (!env.done()) {
        auto obs = env.node_observation();
        tr.node_obs.insert(tr.node_obs.end(), obs.begin(), obs.end());
        tr.ev_remaining.push_back(env.ev_remaining_m());
        auto ideal = env.local_ideal();
        tr.local_ideal.insert(tr.local_ideal.end(), ideal.begin(), ideal.end());
        ActionVec a = policy.act(env);
        StepResult r = env.step(a);
        tr.actions.insert(tr.actions.end(), a.begin(), a.end());
        tr.rewards.push_back(r.reward);
        tr.costs.push_back(r.cost);
        tr.local_rewards.insert(tr.local_rewards.end(), r.info.local_rewards.begin(),
                                r.info.local_rewards.end());
    }
    tr.rtg = compute_rtg(tr.rewards);
    tr.ctg = compute_ctg(tr.costs);
    auto m = env.metrics();
    tr.episode_return = tr.rtg.front();
    tr.ett_s = m.ett_s;
    tr.acd = m.acd_s_per_veh;
    tr.arrived = m.arrived;
    tr.ev_stops = m.ev_stops;
    tr.throughput = m.throughput;
    return tr;
}

Dataset collect(const MixSpec& mix, const Scenario& scenario, const std::function<void(int, int)>& progress) {
    mix.validate();
    Dataset ds;
    ds.scenario = scenario;
    ds.mix = mix;
    auto counts = mix.counts();
    std::vector<PolicyKind> plan;
    plan.insert(plan.end(), counts[0], PolicyKind::GreedyPreempt);
    plan.insert(plan.end(), counts[1], PolicyKind::UniformRandom);
    plan.insert(plan.end(), counts[2], PolicyKind::NoisyExpert);
    Rng shuffle_rng(episode_seed(mix.seed, 0xFFFFFFFFULL));
    std::shuffle(plan.begin(), plan.end(), shuffle_rng);

    CorridorEnv env(scenario);
    auto expert = make_policy(PolicyKind::GreedyPreempt);
    auto random = make_policy(PolicyKind::UniformRandom);
    auto noisy = make_policy(PolicyKind::NoisyExpert, mix.noisy_eps);
    ds.trajectories.reserve(plan.size());
    for (size_t i = 0; i < plan.size(); ++i) {
        Policy& p = plan[i] == PolicyKind::GreedyPreempt ? *expert
                    : plan[i] == PolicyKind::UniformRandom ? *random
                                                            : *noisy;
        ds.trajectories.push_back(record_episode(env, p, episode_seed(mix.seed, i)));
        if (progress) progress(static_cast<int>(i) + 1, static_cast<int>(plan.size()));
    }
    ds.stats = dataset_stats(ds.trajectories);
    return ds;
}

DatasetStats dataset_stats(const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw std::invalid_argument("statistics of an empty dataset");
    DatasetStats s;
    s.episodes = static_cast<int>(trajs.size());
    const double n = static_cast<double>(trajs.size());
    double lsum = 0, rsum = 0;
    s.length_min = s.return_min = 1e300;
    s.length_max = s.return_max = -1e300;
    for (const auto& t : trajs) {
        lsum += t.length();
        rsum += t.episode_return;
        s.length_min = std::min<double>(s.length_min, t.length());
        s.length_max = std::max<double>(s.length_max, t.length());
        s.return_min = std::min(s.return_min, t.episode_return);
        s.return_max = std::max(s.return_max, t.episode_return);
        auto& pp = s.per_policy[policy_name(t.policy)];
        pp.count += 1;
        pp.return_mean += t.episode_return;
        pp.length_mean += t.length();
        pp.ett_mean += t.ett_s;
    }
    s.length_mean = lsum / n;
    s.return_mean = rsum / n;
    double lv = 0, rv = 0;
    for (const auto& t : trajs) {
        lv += (t.length() - s.length_mean) * (t.length() - s.length_mean);
        rv += (t.episode_return - s.return_mean) * (t.episode_return - s.return_mean);
    }
    s.length_std = std::sqrt(lv / n);
    s.return_std = std::sqrt(rv / n);
    for (auto& [name, pp] : s.per_policy) {
        pp.return_mean /= pp.count;
        pp.length_mean /= pp.count;
        pp.ett_mean /= pp.count;
    }

    const int kslots = trajs.front().k_slots;
    const int dims = kslots * kNodeFeatures;
    Rng rng(12345);
    std::uniform_int_distribution<int> pick(0, dims - 1);
    double cov = 0.0;
    for (int d = 0; d < 5; ++d) {
        int dim = pick(rng);
        int slot = dim / kNodeFeatures, feat = dim % kNodeFeatures;
        std::array<bool, 10> seen{};
        for (const auto& t : trajs) {
            if (slot >= t.K()) continue;
            int node = t.route_nodes[slot];
            for (int k = 0; k < t.length(); ++k) {
                float v = t.node_obs[(static_cast<size_t>(k) * t.num_nodes + node) * kNodeFeatures + feat];
                int b = std::clamp(static_cast<int>(v * 10.0f), 0, 9);
                seen[b] = true;
            }
        }
        cov += std::count(seen.begin(), seen.end(), true) / 10.0;
    }
    s.coverage = cov / 5.0;
    return s;
}

static nlohmann::json stats_to_json(const DatasetStats& s) {
    nlohmann::json j;
    j["episodes"] = s.episodes;
    j["length"] = {{"mean", s.length_mean}, {"std", s.length_std}, {"min", s.length_min}, {"max", s.length_max}};
    j["return"] = {{"mean", s.return_mean}, {"std", s.return_std}, {"min", s.return_min}, {"max", s.return_max}};
    j["coverage"] = s.coverage;
    for (const auto& [name, pp] : s.per_policy)
        j["per_policy"][name] = {{"count", pp.count},
                                 {"return_mean", pp.return_mean},
                                 {"length_mean", pp.length_mean},
                                 {"ett_mean", pp.ett_mean}};
    return j;
}

static std::string encode(const Trajectory& t) {
    ByteWriter w;
    w.put<uint8_t>(static_cast<uint8_t>(t.policy));
    w.put<uint64_t>(t.seed);
    w.put_str(t.scenario_id);
    w.put<int32_t>(t.num_nodes);
    w.put<int32_t>(t.k_slots);
    w.put<int32_t>(t.K());
    w.put_vec(t.route_nodes);
    w.put_vec(t.ev_phase);
    w.put<int32_t>(t.length());
    w.put_vec(t.node_obs);
    w.put_vec(t.actions);
    w.put_vec(t.rewards);
    w.put_vec(t.costs);
    w.put_vec(t.ev_remaining);
    w.put_vec(t.local_rewards);
    w.put_vec(t.local_ideal);
    w.put_vec(t.rtg);
    w.put_vec(t.ctg);
    w.put<double>(t.episode_return);
    w.put<double>(t.ett_s);
    w.put<double>(t.acd);
    w.put<uint8_t>(t.arrived ? 1 : 0);
    w.put<int32_t>(t.ev_stops);
    w.put<double>(t.throughput);
    return w.bytes();
}

static Trajectory decode(const std::string& bytes) {
    ByteReader r(bytes.data(), bytes.size());
    Trajectory t;
    t.policy = static_cast<PolicyKind>(r.get<uint8_t>());
    t.seed = r.get<uint64_t>();
    t.scenario_id = r.get_str();
    t.num_nodes = r.get<int32_t>();
    t.k_slots = r.get<int32_t>();
    const auto K = static_cast<size_t>(r.get<int32_t>());
    t.route_nodes = r.get_vec<int32_t>(K);
    t.ev_phase = r.get_vec<uint8_t>(K);
    const auto T = static_cast<size_t>(r.get<int32_t>());
    t.node_obs = r.get_vec<float>(T * t.num_nodes * kNodeFeatures);
    t.actions = r.get_vec<uint8_t>(T * K);
    t.rewards = r.get_vec<double>(T);
    t.costs = r.get_vec<double>(T);
    t.ev_remaining = r.get_vec<double>(T);
    t.local_rewards = r.get_vec<double>(T * K);
    t.local_ideal = r.get_vec<double>(T * K);
    t.rtg = r.get_vec<double>(T);
    t.ctg = r.get_vec<double>(T);
    t.episode_return = r.get<double>();
    t.ett_s = r.get<double>();
    t.acd = r.get<double>();
    t.arrived = r.get<uint8_t>() != 0;
    t.ev_stops = r.get<int32_t>();
    t.throughput = r.get<double>();
    if (!r.done()) throw std::runtime_error("trailing bytes in trajectory record");
    return t;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    nlohmann::json h;
    h["format"] = kMagic;
    h["version"] = ds.version;
    h["scenario"] = scenario_to_json(ds.scenario);
    h["mix"] = {{"expert", ds.mix.expert}, {"random", ds.mix.random}, {"noisy", ds.mix.noisy},
                {"episodes", ds.mix.episodes}, {"seed", ds.mix.seed}, {"noisy_eps", ds.mix.noisy_eps}};
    std::map<std::string, int> per;
    for (const auto& t : ds.trajectories) per[policy_name(t.policy)] += 1;
    h["counts"] = {{"records", ds.trajectories.size()}, {"per_policy", per}};
    h["stats"] = stats_to_json(ds.stats);

    const std::string tmp = path + ".partial";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path);
        f << kMagic << ' ' << ds.version << '\n' << h.dump() << '\n';
        for (const auto& t : ds.trajectories) {
            std::string rec = encode(t);
            uint64_t len = rec.size();
            f.write(reinterpret_cast<const char*>(&len), sizeof(len));
            f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
        }
        if (!f) {
            f.close();
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed for " + path);
        }
    }
    std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset " + path);
    std::string magic_line, header_line;
    std::getline(f, magic_line);
    if (magic_line.rfind(kMagic, 0) != 0) throw std::runtime_error(path + " is not a trajectory dataset");
    std::getline(f, header_line);
    auto h = nlohmann::json::parse(header_line);
    Dataset ds;
    ds.version = h.at("version").get<int>();
    if (ds.version != 1) throw std::runtime_error("unsupported dataset version " + std::to_string(ds.version));
    ds.scenario = scenario_from_json(h.at("scenario"));
    const auto& m = h.at("mix");
    ds.mix.expert = m.at("expert");
    ds.mix.random = m.at("random");
    ds.mix.noisy = m.at("noisy");
    ds.mix.episodes = m.at("episodes");
    ds.mix.seed = m.at("seed");
    ds.mix.noisy_eps = m.at("noisy_eps");
    const size_t records = h.at("counts").at("records").get<size_t>();
    ds.trajectories.reserve(records);
    for (size_t i = 0; i < records; ++i) {
        uint64_t len = 0;
        if (!f.read(reinterpret_cast<char*>(&len), sizeof(len)))
            throw std::runtime_error("dataset truncated: header lists " + std::to_string(records) +
                                     " records, found " + std::to_string(i));
        std::string rec(len, '\0');
        if (!f.read(rec.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("dataset truncated");
        ds.trajectories.push_back(decode(rec));
    }
    if (f.peek() != std::char_traits<char>::eof()) throw std::runtime_error("dataset has more records than its header");
    ds.stats = dataset_stats(ds.trajectories);
    return ds;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of empty set");
    std::sort(values.begin(), values.end());
    double pos = q * (values.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(pos));
    size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - lo;
    return values[lo] + (values[hi] - values[lo]) * frac;
}

StratifiedSampler::StratifiedSampler(const std::vector<Trajectory>& trajs, std::vector<int> indices,
                                     int batch_size, uint64_t seed)
    : trajs_(trajs), batch_(batch_size), rng_(seed) {
    if (batch_size <= 0 || batch_size % 4 != 0) throw std::invalid_argument("batch size must be a positive multiple of 4");
    if (static_cast<int>(indices.size()) < batch_size) throw std::invalid_argument("dataset smaller than one batch");
    std::vector<double> rets;
    for (int i : indices) rets.push_back(trajs[i].episode_return);
    bounds_ = {percentile(rets, 0.25), percentile(rets, 0.50), percentile(rets, 0.75)};
    for (int i : indices) quart_[quartile_of(trajs[i].episode_return)].push_back(i);
}

int StratifiedSampler::quartile_of(double ret) const {
    if (ret <= bounds_[0]) return 0;
    if (ret <= bounds_[1]) return 1;
    if (ret <= bounds_[2]) return 2;
    return 3;
}

std::vector<WindowRef> StratifiedSampler::next() {
    std::vector<WindowRef> out;
    out.reserve(batch_);
    const int per = batch_ / 4;
    std::vector<int> all;
    for (const auto& q : quart_) all.insert(all.end(), q.begin(), q.end());
    for (int qi = 0; qi < 4; ++qi) {
        // Heavy ties can leave a quartile short; fall back to the whole pool.
        std::vector<int> pool = quart_[qi].empty() ? all : quart_[qi];
        std::vector<int> chosen;
        if (static_cast<int>(pool.size()) >= per) {
            for (int k = 0; k < per; ++k) {
                std::uniform_int_distribution<int> u(k, static_cast<int>(pool.size()) - 1);
                std::swap(pool[k], pool[u(rng_)]);
                chosen.push_back(pool[k]);
            }
        } else {
            std::uniform_int_distribution<int> u(0, static_cast<int>(pool.size()) - 1);
            for (int k = 0; k < per; ++k) chosen.push_back(pool[u(rng_)]);
        }
        for (int ti : chosen) {
            std::uniform_int_distribution<int> t(0, trajs_[ti].length() - 1);
            out.push_back({ti, t(rng_)});
        }
    }
    return out;
}

}  // namespace evc
