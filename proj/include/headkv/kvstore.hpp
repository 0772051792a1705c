// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "headkv/head_id.hpp"
#include "headkv/numkit.hpp"

namespace headkv {

/// Key/value rows retained for a single attention head. Row order matches the
/// original token order and `positions` keeps the original coordinates, so an
/// evicted cache can still address position embeddings and be diffed against
/// the full one. Reported memory is in entries; bytes = entries * 2 * d_head * 8.
struct HeadCache {
    Matrix keys;    // s x d_head
    Matrix values;  // s x d_head
    std::vector<std::size_t> positions;  // strictly increasing, length s

    std::size_t size() const { return positions.size(); }
    std::size_t d_head() const { return keys.cols; }

    static HeadCache empty(std::size_t d_head) {
        HeadCache c;
        c.keys = Matrix(0, d_head);
        c.values = Matrix(0, d_head);
        return c;
    }
};

/// Appends one KV row at `position`; positions must stay strictly increasing.
inline void append(HeadCache& cache, const std::vector<double>& key_row,
                   const std::vector<double>& value_row, std::size_t position) {
    require(key_row.size() == cache.d_head() && value_row.size() == cache.d_head(),
            "append: row width must equal d_head");
    require(cache.positions.empty() || position > cache.positions.back(),
            "append: position must exceed the last cached position");
    cache.keys.data.insert(cache.keys.data.end(), key_row.begin(), key_row.end());
    cache.keys.rows += 1;
    cache.values.data.insert(cache.values.data.end(), value_row.begin(), value_row.end());
    cache.values.rows += 1;
    cache.positions.push_back(position);
}

/// Keeps only the rows named by `retained` (indices into the current rows,
/// strictly increasing). Row order and original positions are preserved.
inline HeadCache evict_to(const HeadCache& cache, const std::vector<std::size_t>& retained) {
    HeadCache out = HeadCache::empty(cache.d_head());
    out.keys = Matrix(retained.size(), cache.d_head());
    out.values = Matrix(retained.size(), cache.d_head());
    out.positions.reserve(retained.size());
    std::size_t prev = 0;
    bool first = true;
    for (std::size_t i = 0; i < retained.size(); ++i) {
        const std::size_t r = retained[i];
        require(r < cache.size(), "evict_to: retained index out of range");
        require(first || r > prev, "evict_to: retained indices must be strictly increasing");
        first = false;
        prev = r;
        for (std::size_t c = 0; c < cache.d_head(); ++c) {
            out.keys.at(i, c) = cache.keys.at(r, c);
            out.values.at(i, c) = cache.values.at(r, c);
        }
        out.positions.push_back(cache.positions[r]);
    }
    return out;
}

/// Entry-count accounting for a set of per-head caches against the full
/// (uncompressed) context length.
struct CacheReport {
    HeadGrid<std::size_t> per_head_entries;
    std::size_t total_entries = 0;
    std::size_t full_entries = 0;
    double compression_ratio = 0.0;
};

inline CacheReport memory_report(const HeadGrid<HeadCache>& caches, std::size_t full_n) {
    CacheReport rep;
    rep.per_head_entries = HeadGrid<std::size_t>(caches.layers, caches.heads, 0);
    for (std::size_t i = 0; i < caches.size(); ++i) {
        const std::size_t s = caches.data[i].size();
        require(s <= full_n, "memory_report: cache larger than the full context");
        rep.per_head_entries.data[i] = s;
        rep.total_entries += s;
    }
    rep.full_entries = full_n * caches.size();
    rep.compression_ratio =
        rep.full_entries == 0 ? 0.0
                              : static_cast<double>(rep.total_entries) /
                                    static_cast<double>(rep.full_entries);
    return rep;
}

}  // namespace headkv
