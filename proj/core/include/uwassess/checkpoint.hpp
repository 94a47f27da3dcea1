#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "uwassess/graph.hpp"
#include "uwassess/tensor.hpp"

namespace uwassess {

// A paused run in one file: named f64 blobs plus flat string metadata
// (iteration counters, rng stream state, config hash).
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> tensors;

    void set_meta_u64(const std::string& key, uint64_t v);
    uint64_t meta_u64(const std::string& key) const;        // missing or non-numeric throws
    const std::string& meta_str(const std::string& key) const;
    bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
};

// Binary container: magic, JSON directory, then raw little-endian doubles in
// directory order. Byte-identical for identical contents.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Stash parameter values under prefix+name (values are copied, grads ignored).
void put_params(Checkpoint& ck, const std::string& prefix, const ParamStore& params);

// Restore every parameter of `params` from prefix+name. A missing entry or a
// shape mismatch means the checkpoint belongs to a different config and throws.
void take_params(const Checkpoint& ck, const std::string& prefix, ParamStore& params);

}  // namespace uwassess
