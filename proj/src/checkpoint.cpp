#include "evcorridor/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evcorridor/serialize.hpp"
#include "evcorridor/train.hpp"

namespace evc {

using nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"d", c.d},
                {"layers", c.layers},
                {"heads", c.heads},
                {"context", c.context},
                {"k_slots", c.k_slots},
                {"phases", c.phases},
                {"t_max", c.t_max},
                {"node_features", c.node_features},
                {"num_nodes", c.num_nodes},
                {"ffn_hidden", c.ffn_hidden},
                {"gat_layers", c.gat_layers},
                {"gat_heads", c.gat_heads},
                {"gat_ffn_hidden", c.gat_ffn_hidden},
                {"dropout", c.dropout},
                {"causal", c.causal},
                {"rtg_scale", c.rtg_scale},
                {"cost_scale", c.cost_scale},
                {"mu", c.mu}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.d = j.at("d");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.context = j.at("context");
    c.k_slots = j.at("k_slots");
    c.phases = j.at("phases");
    c.t_max = j.at("t_max");
    c.node_features = j.at("node_features");
    c.num_nodes = j.at("num_nodes");
    c.ffn_hidden = j.at("ffn_hidden");
    c.gat_layers = j.at("gat_layers");
    c.gat_heads = j.at("gat_heads");
    c.gat_ffn_hidden = j.at("gat_ffn_hidden");
    c.dropout = j.at("dropout");
    c.causal = j.at("causal");
    c.rtg_scale = j.at("rtg_scale");
    c.cost_scale = j.at("cost_scale");
    c.mu = j.at("mu");
    c.validate();
    return c;
}

static void put_mat(ByteWriter& w, const nn::Mat<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put<float>(m.data()[i]);
}

void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta,
                     const AdamW* opt) {
    json manifest = json::array();
    ByteWriter w;
    uint64_t off = 0;
    for (const auto* p : model.params().all()) {
        const uint64_t bytes = static_cast<uint64_t>(p->w.size()) * sizeof(float);
        manifest.push_back({{"name", p->name}, {"rows", p->w.rows()}, {"cols", p->w.cols()}, {"offset", off}, {"bytes", bytes}});
        off += bytes;
        put_mat(w, p->w);
    }
    json h{{"format", "evcorridor-checkpoint"},
           {"version", 1},
           {"config", model_config_to_json(model.config())},
           {"epoch", meta.epoch},
           {"val_loss", meta.val_loss},
           {"param_count", model.param_count()},
           {"manifest", manifest},
           {"weights_bytes", off},
           {"optimizer", opt != nullptr}};
    if (opt) {
        h["optimizer_steps"] = opt->steps();
        for (const auto& m : opt->m()) put_mat(w, m);
        for (const auto& v : opt->v()) put_mat(w, v);
    }
    const std::string tmp = path + ".partial";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write checkpoint " + path);
        f << "EVCCKPT 1\n" << h.dump() << "\n";
        f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!f) throw std::runtime_error("write failed for checkpoint " + path);
    }
    std::filesystem::rename(tmp, path);
}

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path, CheckpointMeta* meta, AdamW* opt) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    std::string magic, header;
    std::getline(f, magic);
    if (magic != "EVCCKPT 1") throw std::runtime_error(path + " is not a checkpoint");
    std::getline(f, header);
    json h = json::parse(header);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    auto model = std::make_unique<Model<float>>(model_config_from_json(h.at("config")), 0);
    auto all = model->params().all();
    const auto& man = h.at("manifest");
    if (man.size() != all.size()) throw std::runtime_error("checkpoint manifest does not match the model");
    const uint64_t wbytes = h.at("weights_bytes");
    if (blob.size() < wbytes) throw std::runtime_error("checkpoint truncated");
    for (size_t i = 0; i < all.size(); ++i) {
        auto* p = all[i];
        const auto& e = man[i];
        if (e.at("name") != p->name || e.at("rows") != p->w.rows() || e.at("cols") != p->w.cols())
            throw std::runtime_error("checkpoint tensor mismatch at " + p->name);
        const uint64_t o = e.at("offset");
        std::memcpy(p->w.data(), blob.data() + o, static_cast<size_t>(p->w.size()) * sizeof(float));
    }
    if (meta) {
        meta->epoch = h.at("epoch");
        meta->val_loss = h.at("val_loss");
    }
    if (opt && h.at("optimizer").get<bool>()) {
        size_t pos = wbytes;
        auto read_into = [&](nn::Mat<float>& m) {
            const size_t n = static_cast<size_t>(m.size()) * sizeof(float);
            if (pos + n > blob.size()) throw std::runtime_error("checkpoint optimizer state truncated");
            std::memcpy(m.data(), blob.data() + pos, n);
            pos += n;
        };
        for (auto& m : opt->m()) read_into(m);
        for (auto& v : opt->v()) read_into(v);
        opt->set_steps(h.at("optimizer_steps"));
    }
    return model;
}

}  // namespace evc
