// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

#include "headkv/common.hpp"

namespace headkv {

/// Identifies one attention head as (layer, head) within an L x H model.
struct HeadId {
    std::size_t layer = 0;
    std::size_t head = 0;

    auto operator<=>(const HeadId&) const = default;

    std::string str() const {
        return "L" + std::to_string(layer) + "H" + std::to_string(head);
    }
};

/// Dense per-head storage addressed by HeadId; layout is layer-major.
template <typename T>
struct HeadGrid {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::vector<T> data;

    HeadGrid() = default;
    HeadGrid(std::size_t l, std::size_t h) : layers(l), heads(h), data(l * h) {}
    HeadGrid(std::size_t l, std::size_t h, const T& fill)
        : layers(l), heads(h), data(l * h, fill) {}

    std::size_t size() const { return layers * heads; }
    bool same_shape(std::size_t l, std::size_t h) const { return layers == l && heads == h; }

    T& at(std::size_t layer, std::size_t head) { return data[layer * heads + head]; }
    const T& at(std::size_t layer, std::size_t head) const { return data[layer * heads + head]; }
    T& at(HeadId id) { return at(id.layer, id.head); }
    const T& at(HeadId id) const { return at(id.layer, id.head); }

    HeadId id_of(std::size_t flat) const { return {flat / heads, flat % heads}; }
};

}  // namespace headkv
