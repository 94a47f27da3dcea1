#include "uwassess/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "uwassess/common.hpp"

namespace uwassess {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'U', 'W', 'C', 'K', '0', '0', '0', '1'};

void append_u64_le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64_le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

uint64_t double_bits(double d) {
    uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    return v;
}

double bits_double(uint64_t v) {
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
}

}  // namespace

void Checkpoint::set_meta_u64(const std::string& key, uint64_t v) { meta[key] = std::to_string(v); }

uint64_t Checkpoint::meta_u64(const std::string& key) const {
    const std::string& s = meta_str(key);
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("checkpoint metadata " + key + " is not an unsigned integer: \"" + s + "\"");
    }
}

const std::string& Checkpoint::meta_str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ConfigError("checkpoint metadata missing key " + key);
    return it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    json dir;
    dir["meta"] = ck.meta;
    json tensors = json::array();
    for (const auto& [name, t] : ck.tensors) {
        if (!t.defined()) throw InvariantViolation("checkpoint tensor " + name + " is undefined");
        tensors.push_back({{"name", name}, {"shape", t.shape()}});
    }
    dir["tensors"] = std::move(tensors);
    std::string header = dir.dump();

    std::string blob;
    blob.reserve(16 + header.size());
    blob.append(kMagic, sizeof kMagic);
    append_u64_le(blob, header.size());
    blob += header;
    for (const auto& [name, t] : ck.tensors) {
        (void)name;
        const double* d = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) append_u64_le(blob, double_bits(d[i]));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw PipelineError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw ConfigError("not a checkpoint file: " + path);
    uint64_t header_len = read_u64_le(p + 8);
    if (16 + header_len > bytes.size()) throw ConfigError("checkpoint header truncated: " + path);

    json dir = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len),
                           nullptr, false);
    if (dir.is_discarded() || !dir.is_object()) throw ConfigError("checkpoint header corrupt: " + path);

    Checkpoint ck;
    for (const auto& item : dir.at("meta").items()) ck.meta[item.key()] = item.value().get<std::string>();

    size_t offset = 16 + header_len;
    for (const auto& entry : dir.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        auto shape = entry.at("shape").get<std::vector<int64_t>>();
        Tensor t = Tensor::zeros(shape);
        size_t need = static_cast<size_t>(t.numel()) * 8;
        if (offset + need > bytes.size()) throw ConfigError("checkpoint data truncated: " + path);
        double* d = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) d[i] = bits_double(read_u64_le(p + offset + 8 * i));
        offset += need;
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    if (offset != bytes.size()) throw ConfigError("checkpoint has trailing bytes: " + path);
    return ck;
}

void put_params(Checkpoint& ck, const std::string& prefix, const ParamStore& params) {
    for (const auto& [name, param] : params.all()) ck.tensors[prefix + name] = param.value.clone();
}

void take_params(const Checkpoint& ck, const std::string& prefix, ParamStore& params) {
    for (auto& [name, param] : params.all()) {
        auto it = ck.tensors.find(prefix + name);
        if (it == ck.tensors.end()) throw ConfigError("checkpoint is missing tensor " + prefix + name);
        if (!param.value.same_shape(it->second))
            throw ConfigError("checkpoint tensor " + prefix + name + " has shape " + it->second.shape_str() +
                              ", model expects " + param.value.shape_str());
        std::memcpy(param.value.data(), it->second.data(), static_cast<size_t>(param.value.numel()) * sizeof(double));
    }
}

}  // namespace uwassess
