#include "terragen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace terragen {

namespace {

using nlohmann::json;

void put_le64(std::string& buf, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_le32(std::string& buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le64(const char* p) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

float get_le32(const char* p) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& dtype) {
    if (dtype != "f64" && dtype != "f32") throw std::invalid_argument("save_checkpoint: dtype must be f32 or f64");
    size_t elem = dtype == "f64" ? 8 : 4;
    json manifest = json::array();
    std::string payload;
    int64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        manifest.push_back({{"name", name}, {"shape", t.shape}, {"dtype", dtype}, {"offset", offset}});
        payload.reserve(payload.size() + static_cast<size_t>(t.numel()) * elem);
        for (double v : t.data) {
            if (dtype == "f64") {
                put_le64(payload, v);
            } else {
                put_le32(payload, static_cast<float>(v));
            }
        }
        offset += t.numel() * static_cast<int64_t>(elem);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << kCheckpointMagic << "\n";
    f << json{{"params", manifest}}.dump() << "\n";
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic, manifest_line;
    if (!std::getline(f, magic) || magic != kCheckpointMagic) {
        throw std::runtime_error("load_checkpoint: " + path + " is not a " + kCheckpointMagic + " file");
    }
    if (!std::getline(f, manifest_line)) throw std::runtime_error("load_checkpoint: missing manifest in " + path);
    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    json manifest = json::parse(manifest_line);
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& entry : manifest.at("params")) {
        std::string name = entry.at("name");
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        std::string dtype = entry.at("dtype");
        int64_t offset = entry.at("offset");
        size_t elem = dtype == "f64" ? 8 : 4;
        if (dtype != "f64" && dtype != "f32") {
            throw std::runtime_error("load_checkpoint: unsupported dtype " + dtype + " for " + name);
        }
        Tensor t = Tensor::zeros(shape);
        size_t need = static_cast<size_t>(offset) + static_cast<size_t>(t.numel()) * elem;
        if (need > payload.size()) throw std::runtime_error("load_checkpoint: truncated payload for " + name);
        const char* p = payload.data() + offset;
        for (int64_t i = 0; i < t.numel(); ++i) {
            t.data[static_cast<size_t>(i)] = dtype == "f64" ? get_le64(p + i * 8)
                                                            : static_cast<double>(get_le32(p + i * 4));
        }
        out.push_back({name, std::move(t)});
    }
    return out;
}

void save_params(const std::string& path, const ParamStore& params, const std::string& dtype) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.reserve(params.size());
    for (const auto& [name, v] : params.items()) tensors.push_back({name, v->value});
    save_checkpoint(path, tensors, dtype);
}

void load_params(const std::string& path, ParamStore& params) {
    auto tensors = load_checkpoint(path);
    size_t loaded = 0;
    for (auto& [name, t] : tensors) {
        if (!params.has(name)) continue;  // checkpoints may carry extra state
        Var p = params.get(name);
        if (p->value.shape != t.shape) {
            throw std::runtime_error("load_params: shape mismatch for " + name + ": expected " +
                                     shape_str(p->value.shape) + ", file has " + shape_str(t.shape));
        }
        p->value = std::move(t);
        ++loaded;
    }
    if (loaded != params.size()) {
        throw std::runtime_error("load_params: checkpoint " + path + " is missing parameters (" +
                                 std::to_string(loaded) + "/" + std::to_string(params.size()) + " found)");
    }
}

}  // namespace terragen
