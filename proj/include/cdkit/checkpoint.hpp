#pragma once

#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "cdkit/model.hpp"
#include "cdkit/optim.hpp"

namespace cdkit {

inline constexpr const char* kCheckpointMagic = "CDKIT-CKPT-V1\n";

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : c.stages)
        stages.push_back({{"channels", s.channels},
                          {"depth", s.depth},
                          {"heads", s.heads},
                          {"reduction", s.reduction}});
    return {{"preset", c.preset},
            {"stages", stages},
            {"ffn_expansion", c.ffn_expansion},
            {"decoder", {{"embed_dim", c.decoder.embed_dim}, {"num_classes", c.decoder.num_classes}}},
            {"input_h", c.input_h},
            {"input_w", c.input_w}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.preset = j.at("preset").get<std::string>();
    const auto& stages = j.at("stages");
    if (stages.size() != 4) throw std::invalid_argument("config: expected 4 stages");
    for (std::size_t i = 0; i < 4; ++i) {
        c.stages[i].channels = stages[i].at("channels").get<std::int64_t>();
        c.stages[i].depth = stages[i].at("depth").get<std::int64_t>();
        c.stages[i].heads = stages[i].at("heads").get<std::int64_t>();
        c.stages[i].reduction = stages[i].at("reduction").get<std::int64_t>();
    }
    c.ffn_expansion = j.at("ffn_expansion").get<std::int64_t>();
    c.decoder.embed_dim = j.at("decoder").at("embed_dim").get<std::int64_t>();
    c.decoder.num_classes = j.at("decoder").at("num_classes").get<std::int64_t>();
    c.input_h = j.at("input_h").get<std::int64_t>();
    c.input_w = j.at("input_w").get<std::int64_t>();
    return c;
}

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<T, float>) return "float32";
    else return "float64";
}

inline nlohmann::json read_manifest(std::ifstream& in, const std::string& path) {
    std::string magic(std::strlen(kCheckpointMagic), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kCheckpointMagic)
        throw std::runtime_error("checkpoint " + path + ": bad magic, not a checkpoint file");
    std::uint64_t len = 0;
    unsigned char lenbuf[8];
    in.read(reinterpret_cast<char*>(lenbuf), 8);
    for (int i = 7; i >= 0; --i) len = (len << 8) | lenbuf[i];
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated manifest");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint " + path + ": corrupt manifest: " + e.what());
    }
}

}  // namespace detail

struct CheckpointInfo {
    std::string dtype;
    ModelConfig config;
    std::int64_t epoch = 0;
    bool has_optimizer = false;
};

inline CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint " + path + ": cannot open");
    auto manifest = detail::read_manifest(in, path);
    CheckpointInfo info;
    info.dtype = manifest.at("dtype").get<std::string>();
    info.config = config_from_json(manifest.at("config"));
    info.epoch = manifest.at("epoch").get<std::int64_t>();
    info.has_optimizer = manifest.at("optimizer").at("present").get<bool>();
    return info;
}

/// Writes magic, a JSON manifest (entry name/kind/shape/byte-offset table),
/// then one raw little-endian buffer holding parameters, batch-norm buffers,
/// and, if given, AdamW moments. Round trips are bitwise.
template <typename T>
void save_checkpoint(const std::string& path, const ChangeFormer<T>& model, const AdamWState<T>* opt,
                     std::int64_t epoch) {
    auto params = model.parameters();
    auto buffers = model.buffers();
    if (opt && !opt->m.empty() && opt->m.size() != params.size())
        throw std::invalid_argument("checkpoint: optimizer state does not match parameter list");

    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    std::vector<const std::vector<T>*> blobs;
    auto push = [&](const std::string& name, const std::string& kind, const Shape& shape,
                    const std::vector<T>& data) {
        entries.push_back({{"name", name}, {"kind", kind}, {"shape", shape}, {"offset", offset}});
        blobs.push_back(&data);
        offset += data.size() * sizeof(T);
    };
    for (const auto& p : params) push(p.name, "param", p.tensor->shape, p.tensor->data);
    for (const auto& b : buffers) push(b.name, "buffer", b.tensor->shape, b.tensor->data);
    const bool with_opt = opt && !opt->m.empty();
    if (with_opt)
        for (std::size_t i = 0; i < params.size(); ++i) {
            push(params[i].name, "adam_m", params[i].tensor->shape, opt->m[i]);
            push(params[i].name, "adam_v", params[i].tensor->shape, opt->v[i]);
        }

    nlohmann::json manifest = {{"dtype", detail::dtype_name<T>()},
                               {"epoch", epoch},
                               {"config", config_to_json(model.cfg)},
                               {"optimizer", {{"present", with_opt}, {"step", with_opt ? opt->step : 0}}},
                               {"entries", entries}};
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint " + path + ": cannot open for writing");
    out.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
    unsigned char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>((text.size() >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lenbuf), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* blob : blobs)
        out.write(reinterpret_cast<const char*>(blob->data()),
                  static_cast<std::streamsize>(blob->size() * sizeof(T)));
    if (!out) throw std::runtime_error("checkpoint " + path + ": write failed");
}

/// Restores parameters, buffers, optimizer moments, and the epoch counter.
/// The checkpoint's config and dtype must match the model exactly.
template <typename T>
void load_checkpoint(const std::string& path, const ChangeFormer<T>& model, AdamWState<T>* opt,
                     std::int64_t* epoch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint " + path + ": cannot open");
    auto manifest = detail::read_manifest(in, path);

    const auto dtype = manifest.at("dtype").get<std::string>();
    if (dtype != detail::dtype_name<T>())
        throw std::runtime_error("checkpoint " + path + ": dtype " + dtype + " does not match model dtype " +
                                 detail::dtype_name<T>());

    auto params = model.parameters();
    auto buffers = model.buffers();
    std::unordered_map<std::string, TensorPtr<T>> by_name;
    for (const auto& p : params) by_name["param/" + p.name] = p.tensor;
    for (const auto& b : buffers) by_name["buffer/" + b.name] = b.tensor;

    std::unordered_map<std::string, std::size_t> param_index;
    for (std::size_t i = 0; i < params.size(); ++i) param_index[params[i].name] = i;

    const auto& entries = manifest.at("entries");
    // Config / shape compatibility first, naming the first offending tensor.
    for (const auto& e : entries) {
        const auto name = e.at("name").get<std::string>();
        const auto kind = e.at("kind").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        if (kind == "param" || kind == "buffer") {
            auto it = by_name.find(kind + "/" + name);
            if (it == by_name.end())
                throw std::runtime_error("checkpoint " + path + ": unknown tensor " + name);
            if (it->second->shape != shape)
                throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + name + ", file has " +
                                         shape_str(shape) + " but model expects " +
                                         shape_str(it->second->shape));
        }
    }
    const auto file_cfg = config_from_json(manifest.at("config"));
    if (!(file_cfg == model.cfg))
        throw std::runtime_error("checkpoint " + path + ": model config mismatch");

    const bool with_opt = manifest.at("optimizer").at("present").get<bool>();
    if (opt) {
        opt->m.assign(params.size(), {});
        opt->v.assign(params.size(), {});
        opt->step = with_opt ? manifest.at("optimizer").at("step").get<std::int64_t>() : 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            opt->m[i].assign(params[i].tensor->data.size(), T(0));
            opt->v[i].assign(params[i].tensor->data.size(), T(0));
        }
    }

    const std::streampos data_start = in.tellg();
    for (const auto& e : entries) {
        const auto name = e.at("name").get<std::string>();
        const auto kind = e.at("kind").get<std::string>();
        const auto offset = e.at("offset").get<std::uint64_t>();
        std::vector<T>* dst = nullptr;
        if (kind == "param" || kind == "buffer") {
            dst = &by_name.at(kind + "/" + name)->data;
        } else if (kind == "adam_m" || kind == "adam_v") {
            if (!opt || !with_opt) continue;
            auto it = param_index.find(name);
            if (it == param_index.end())
                throw std::runtime_error("checkpoint " + path + ": optimizer entry for unknown parameter " +
                                         name);
            dst = kind == "adam_m" ? &opt->m[it->second] : &opt->v[it->second];
        } else {
            throw std::runtime_error("checkpoint " + path + ": unknown entry kind " + kind);
        }
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(dst->data()),
                static_cast<std::streamsize>(dst->size() * sizeof(T)));
        if (!in) throw std::runtime_error("checkpoint " + path + ": truncated data for " + name);
    }
    if (epoch) *epoch = manifest.at("epoch").get<std::int64_t>();
}

}  // namespace cdkit
