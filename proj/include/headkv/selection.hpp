// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "headkv/allocation.hpp"
#include "headkv/head_id.hpp"
#include "headkv/kvstore.hpp"
#include "headkv/numkit.hpp"

namespace headkv {

/// Attention-pooled selection settings. `alpha` is the local query window,
/// `kernel` the 1-D pooling width (odd, edge-clamped), `max_mode` picks max
/// over mean pooling.
struct PoolingConfig {
    std::size_t alpha = 8;
    std::size_t kernel = 7;
    bool max_mode = true;

    void validate() const {
        require(alpha >= 1, "PoolingConfig: alpha must be at least 1");
        require(kernel >= 1 && kernel % 2 == 1, "PoolingConfig: kernel must be odd and >= 1");
    }
};

/// Observation scores over positions [0, n - alpha): the attention that the
/// last alpha query rows pay to each earlier position, summed per position
/// and then pooled with an edge-clamped window. `attn` must hold at least
/// alpha query rows of width n.
inline std::vector<double> pooled_scores(const Matrix& attn, const PoolingConfig& cfg) {
    cfg.validate();
    const std::size_t n = attn.cols;
    require(n > cfg.alpha, "pooled_scores: context must be longer than alpha");
    require(attn.rows >= cfg.alpha, "pooled_scores: need at least alpha query rows");

    const std::size_t scored = n - cfg.alpha;
    std::vector<double> raw(scored, 0.0);
    for (std::size_t r = attn.rows - cfg.alpha; r < attn.rows; ++r) {
        const double* row = attn.row(r);
        for (std::size_t j = 0; j < scored; ++j) {
            raw[j] += row[j];
        }
    }
    if (cfg.kernel == 1) return raw;

    const std::size_t half = cfg.kernel / 2;
    std::vector<double> out(scored, 0.0);
    for (std::size_t j = 0; j < scored; ++j) {
        const std::size_t lo = j >= half ? j - half : 0;
        const std::size_t hi = std::min(scored - 1, j + half);
        if (cfg.max_mode) {
            double m = raw[lo];
            for (std::size_t k = lo + 1; k <= hi; ++k) m = std::max(m, raw[k]);
            out[j] = m;
        } else {
            double s = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) s += raw[k];
            out[j] = s / static_cast<double>(hi - lo + 1);
        }
    }
    return out;
}

/// Top `budget` positions of [0, n - alpha) by score (ties to the lower
/// index) plus the always-protected final alpha positions, ascending.
/// Exactly budget + alpha indices.
inline std::vector<std::size_t> select_retained(const std::vector<double>& scores,
                                                std::size_t budget, std::size_t alpha,
                                                std::size_t n) {
    require(alpha <= n, "select_retained: alpha exceeds the context length");
    require(scores.size() == n - alpha, "select_retained: scores must cover [0, n - alpha)");
    require(budget + alpha <= n, "select_retained: budget + alpha exceeds the context length");

    std::vector<std::size_t> retained = top_k_indices(scores, budget);
    retained.reserve(budget + alpha);
    for (std::size_t j = n - alpha; j < n; ++j) {
        retained.push_back(j);
    }
    std::sort(retained.begin(), retained.end());
    return retained;
}

struct CompressResult {
    HeadGrid<HeadCache> caches;
    HeadGrid<std::vector<std::size_t>> retained;
    CacheReport report;
};

/// Applies the per-head plan to full prefill caches: pool each head's window
/// attention, keep its top-budget positions plus the protected window, evict
/// the rest. The plan must already be clamped to this sequence and share the
/// pooling window size.
inline CompressResult compress(const HeadGrid<HeadCache>& full_caches,
                               const HeadGrid<Matrix>& prefill_attention,
                               const BudgetPlan& plan, const PoolingConfig& cfg) {
    cfg.validate();
    require(plan.alpha == static_cast<std::int64_t>(cfg.alpha),
            "compress: plan and pooling window sizes disagree");
    require(full_caches.same_shape(prefill_attention.layers, prefill_attention.heads) &&
                full_caches.same_shape(plan.per_head.layers, plan.per_head.heads),
            "compress: shape mismatch between caches, attention and plan");

    CompressResult result;
    result.caches = HeadGrid<HeadCache>(full_caches.layers, full_caches.heads);
    result.retained =
        HeadGrid<std::vector<std::size_t>>(full_caches.layers, full_caches.heads);
    std::size_t full_n = 0;
    for (std::size_t i = 0; i < full_caches.size(); ++i) {
        const HeadCache& cache = full_caches.data[i];
        const std::size_t n = cache.size();
        full_n = std::max(full_n, n);
        const std::int64_t budget = plan.per_head.data[i];
        require(budget >= 0 && budget + plan.alpha <= static_cast<std::int64_t>(n),
                "compress: plan not clamped to this sequence");
        const std::vector<double> scores = pooled_scores(prefill_attention.data[i], cfg);
        result.retained.data[i] = select_retained(
            scores, static_cast<std::size_t>(budget), cfg.alpha, n);
        result.caches.data[i] = evict_to(cache, result.retained.data[i]);
    }
    result.report = memory_report(result.caches, full_n);
    return result;
}

}  // namespace headkv
