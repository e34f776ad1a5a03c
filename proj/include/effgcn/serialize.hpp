#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "effgcn/common.hpp"
#include "effgcn/tensor.hpp"

namespace effgcn {

// Tensor container, little-endian:
//   magic "SKTN" | version u32 = 1 | dtype u8 (0 = f32, 1 = f64) |
//   ndim u8 | dims u32[ndim] | row-major payload
//
// Checkpoint, little-endian:
//   magic "SKCK" | version u32 = 1 |
//   repeated { name length u32 | name bytes | tensor in container format }

using AnyArray = std::variant<Array<float>, Array<double>>;

void save_sktn(const std::string& path, const Array<float>& a);
void save_sktn(const std::string& path, const Array<double>& a);

AnyArray load_sktn(const std::string& path);

/// Loads and converts to the requested scalar type.
template <typename S>
Array<S> load_sktn_as(const std::string& path) {
    auto any = load_sktn(path);
    if (auto* p = std::get_if<Array<S>>(&any)) return std::move(*p);
    if constexpr (std::is_same_v<S, float>)
        return std::get<Array<double>>(any).template cast<float>();
    else
        return std::get<Array<float>>(any).template cast<double>();
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, AnyArray>>& entries);

std::vector<std::pair<std::string, AnyArray>> load_checkpoint(const std::string& path);

template <typename S>
void save_checkpoint_typed(const std::string& path,
                           const std::vector<std::pair<std::string, Array<S>>>& entries) {
    std::vector<std::pair<std::string, AnyArray>> any;
    any.reserve(entries.size());
    for (const auto& [name, arr] : entries) any.emplace_back(name, arr);
    save_checkpoint(path, any);
}

template <typename S>
std::map<std::string, Array<S>> load_checkpoint_as(const std::string& path) {
    std::map<std::string, Array<S>> out;
    for (auto& [name, any] : load_checkpoint(path)) {
        if (auto* p = std::get_if<Array<S>>(&any))
            out.emplace(name, std::move(*p));
        else if constexpr (std::is_same_v<S, float>)
            out.emplace(name, std::get<Array<double>>(any).template cast<float>());
        else
            out.emplace(name, std::get<Array<float>>(any).template cast<double>());
    }
    return out;
}

/// JSON sidecar stored next to a sequence tensor as <name>.meta.json.
struct SequenceMeta {
    std::optional<int> label;
    int valid_frames = 0;
};

SequenceMeta load_meta_json(const std::string& path);
void save_meta_json(const SequenceMeta& meta, const std::string& path);

}  // namespace effgcn
