#include "mpr/nn/params.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "mpr/common/io.hpp"

namespace mpr::nn {

using nlohmann::json;

TensorPtr ParameterSet::add(const std::string& name, TensorPtr t) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    t->requires_grad = true;
    params_.emplace(name, t);
    return t;
}

TensorPtr ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

void ParameterSet::zero_grad() {
    for (auto& [name, t] : params_) t->zero_grad();
}

void ParameterSet::load_values(const ParameterSet& src) {
    if (src.params_.size() != params_.size())
        throw std::runtime_error("parameter count mismatch while loading values");
    for (auto& [name, t] : params_) {
        auto it = src.params_.find(name);
        if (it == src.params_.end())
            throw std::runtime_error("missing parameter in checkpoint: " + name);
        if (it->second->shape != t->shape)
            throw std::runtime_error("parameter shape mismatch for " + name);
        t->data = it->second->data;
    }
}

std::int64_t ParameterSet::value_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t->numel();
    return n;
}

TensorPtr kaiming_normal(std::vector<int> shape, int fan_in, Rng& rng) {
    auto t = Tensor::create(std::move(shape));
    const Real std = std::sqrt(Real(2) / fan_in);
    for (auto& v : t->data) v = rng.normal() * std;
    return t;
}

TensorPtr uniform_init(std::vector<int> shape, Real lo, Real hi, Rng& rng) {
    auto t = Tensor::create(std::move(shape));
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

TensorPtr zeros_init(std::vector<int> shape) { return Tensor::create(std::move(shape)); }

TensorPtr full_init(std::vector<int> shape, Real value) {
    auto t = Tensor::create(std::move(shape));
    for (auto& v : t->data) v = value;
    return t;
}

void save_checkpoint(const std::string& prefix, const ParameterSet& params,
                     const std::string& extra_config_json) {
    json manifest;
    manifest["format"] = "mpr-checkpoint-v1";
    manifest["blob"] = prefix.substr(prefix.find_last_of('/') + 1) + ".bin";
    if (!extra_config_json.empty()) manifest["config"] = json::parse(extra_config_json);

    std::vector<float> blob;
    json tensors = json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : params.all()) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t->shape;
        entry["dtype"] = "f32";
        entry["byte_offset"] = offset;
        tensors.push_back(entry);
        for (Real v : t->data) blob.push_back(static_cast<float>(v));
        offset += t->numel() * 4;
    }
    manifest["tensors"] = tensors;

    io::write_f32_blob(prefix + ".bin", blob);
    io::write_text_file(prefix + ".json", manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
    json manifest;
    try {
        manifest = json::parse(io::read_text_file(prefix + ".json"));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed checkpoint manifest " + prefix + ".json: " + e.what());
    }
    if (manifest.value("format", "") != "mpr-checkpoint-v1")
        throw std::runtime_error("unsupported checkpoint format in " + prefix + ".json");

    const auto blob = io::read_f32_blob(prefix + ".bin");
    LoadedCheckpoint out;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name");
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const std::int64_t offset = entry.at("byte_offset").get<std::int64_t>() / 4;
        const std::int64_t count = shape_numel(shape);
        if (offset + count > static_cast<std::int64_t>(blob.size()))
            throw std::runtime_error("checkpoint blob too small for tensor " + name);
        auto t = Tensor::create(shape);
        for (std::int64_t i = 0; i < count; ++i)
            t->data[static_cast<std::size_t>(i)] = blob[static_cast<std::size_t>(offset + i)];
        out.params.add(name, t);
    }
    if (manifest.contains("config")) out.config_json = manifest["config"].dump();
    return out;
}

}  // namespace mpr::nn
