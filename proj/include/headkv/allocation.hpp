// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "headkv/head_id.hpp"
#include "headkv/importance.hpp"
#include "headkv/numkit.hpp"

namespace headkv {

enum class Policy { headkv, uniform, pyramid, ada };

inline std::string policy_name(Policy p) {
    switch (p) {
        case Policy::headkv: return "headkv";
        case Policy::uniform: return "uniform";
        case Policy::pyramid: return "pyramid";
        case Policy::ada: return "ada";
    }
    return "?";
}

inline Policy policy_from_name(const std::string& name) {
    if (name == "headkv") return Policy::headkv;
    if (name == "uniform") return Policy::uniform;
    if (name == "pyramid") return Policy::pyramid;
    if (name == "ada") return Policy::ada;
    throw ConfigError("unknown policy: " + name +
                      " (expected headkv, uniform, pyramid or ada)");
}

struct AllocationConfig {
    std::int64_t b = 128;    // base budget per head, in cache entries
    double beta = 1.2;       // budget-pool control, must exceed 1
    std::int64_t alpha = 8;  // protected local-window size, retained on top of b
    Policy policy = Policy::headkv;

    void validate() const {
        require(b >= 1, "AllocationConfig: b must be at least 1");
        require(beta > 1.0, "AllocationConfig: beta must exceed 1");
        require(alpha >= 0, "AllocationConfig: alpha must be non-negative");
    }
};

/// Integer per-head retained-entry budgets. `weights` records the normalized
/// importance weights the plan was derived from; per-sequence clamping uses
/// them to redistribute capped excess.
struct BudgetPlan {
    HeadGrid<std::int64_t> per_head;
    std::int64_t alpha = 0;
    std::int64_t total = 0;
    HeadGrid<double> weights;
};

namespace detail {

/// Largest-remainder (Hamilton) integerization: floors every target, then
/// hands the missing units to the largest fractional remainders, ties broken
/// by the lower index. The result sums to `total` exactly.
inline std::vector<std::int64_t> largest_remainder(const std::vector<double>& targets,
                                                   std::int64_t total) {
    const std::size_t n = targets.size();
    std::vector<std::int64_t> out(n);
    std::vector<double> remainder(n);
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        require(targets[i] >= 0.0 && std::isfinite(targets[i]),
                "largest_remainder: targets must be finite and non-negative");
        out[i] = static_cast<std::int64_t>(std::floor(targets[i]));
        remainder[i] = targets[i] - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::int64_t need = total - assigned;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (need > 0) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
            return a < b;
        });
        for (std::size_t i = 0; i < order.size() && need > 0; ++i) {
            out[order[i]] += 1;
            --need;
        }
    } else if (need < 0) {
        // Only reachable through floating-point drift in the targets.
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (remainder[a] != remainder[b]) return remainder[a] < remainder[b];
            return a < b;
        });
        for (std::size_t i = 0; i < order.size() && need < 0; ++i) {
            if (out[order[i]] > 0) {
                out[order[i]] -= 1;
                ++need;
            }
        }
    }
    require(need == 0, "largest_remainder: could not conserve the total");
    return out;
}

inline HeadGrid<double> uniform_weights(std::size_t layers, std::size_t heads) {
    return HeadGrid<double>(layers, heads, 1.0 / static_cast<double>(layers * heads));
}

}  // namespace detail

/// Shared-budget-pool allocation: every head keeps the basic budget b - b/beta
/// and the pool B = (b/beta)*L*H is redistributed in proportion to the
/// normalized importance scores. Integerized by largest remainder so the plan
/// sums to b*L*H exactly.
inline BudgetPlan allocate_headkv(const ImportanceScores& scores, const AllocationConfig& cfg) {
    cfg.validate();
    const std::size_t layers = scores.normalized.layers;
    const std::size_t heads = scores.normalized.heads;
    require(layers >= 1 && heads >= 1, "allocate_headkv: empty score shape");

    const double b = static_cast<double>(cfg.b);
    const double pool = (b / cfg.beta) * static_cast<double>(layers * heads);
    const double basic = b - b / cfg.beta;
    std::vector<double> targets(layers * heads);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        targets[i] = basic + scores.normalized.data[i] * pool;
    }
    const std::int64_t total = cfg.b * static_cast<std::int64_t>(layers * heads);

    BudgetPlan plan;
    plan.per_head = HeadGrid<std::int64_t>(layers, heads, 0);
    plan.per_head.data = detail::largest_remainder(targets, total);
    plan.alpha = cfg.alpha;
    plan.total = total;
    plan.weights = scores.normalized;
    return plan;
}

/// Every head gets exactly b.
inline BudgetPlan allocate_uniform(const AllocationConfig& cfg, std::size_t layers,
                                   std::size_t heads) {
    cfg.validate();
    BudgetPlan plan;
    plan.per_head = HeadGrid<std::int64_t>(layers, heads, cfg.b);
    plan.alpha = cfg.alpha;
    plan.total = cfg.b * static_cast<std::int64_t>(layers * heads);
    plan.weights = detail::uniform_weights(layers, heads);
    return plan;
}

/// Linear per-layer ramp from 3b/2 (layer 0) down to b/2 (last layer), equal
/// within a layer; the layer mean is b so totals stay comparable across
/// policies. Largest-remainder rounding to b*L*H.
inline BudgetPlan allocate_pyramid(const AllocationConfig& cfg, std::size_t layers,
                                   std::size_t heads) {
    cfg.validate();
    require(layers >= 2, "allocate_pyramid: need at least two layers");
    const double b = static_cast<double>(cfg.b);
    const double b_min = b / 2.0;
    const double b_max = 2.0 * b - b_min;
    std::vector<double> targets(layers * heads);
    for (std::size_t l = 0; l < layers; ++l) {
        const double layer_budget =
            b_max - static_cast<double>(l) * (b_max - b_min) / static_cast<double>(layers - 1);
        for (std::size_t h = 0; h < heads; ++h) {
            targets[l * heads + h] = layer_budget;
        }
    }
    const std::int64_t total = cfg.b * static_cast<std::int64_t>(layers * heads);

    BudgetPlan plan;
    plan.per_head = HeadGrid<std::int64_t>(layers, heads, 0);
    plan.per_head.data = detail::largest_remainder(targets, total);
    plan.alpha = cfg.alpha;
    plan.total = total;
    plan.weights = detail::uniform_weights(layers, heads);
    return plan;
}

/// Per-layer adaptive allocation: each layer gets exactly b*H, split within
/// the layer in proportion to each head's concentration, the sum of its
/// top-b pooled observation scores. Uniform split when a layer has no
/// concentration at all.
inline BudgetPlan allocate_ada(const AllocationConfig& cfg,
                               const HeadGrid<std::vector<double>>& pooled_scores,
                               std::size_t layers, std::size_t heads) {
    cfg.validate();
    require(pooled_scores.same_shape(layers, heads), "allocate_ada: missing pooled scores");

    HeadGrid<double> concentration(layers, heads, 0.0);
    for (std::size_t i = 0; i < pooled_scores.size(); ++i) {
        const std::vector<double>& scores = pooled_scores.data[i];
        require(!scores.empty(), "allocate_ada: missing pooled scores");
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.b),
                                                    scores.size());
        for (std::size_t idx : top_k_indices(scores, k)) {
            concentration.data[i] += scores[idx];
        }
    }

    BudgetPlan plan;
    plan.per_head = HeadGrid<std::int64_t>(layers, heads, 0);
    plan.alpha = cfg.alpha;
    const std::int64_t layer_total = cfg.b * static_cast<std::int64_t>(heads);
    for (std::size_t l = 0; l < layers; ++l) {
        double sum = 0.0;
        for (std::size_t h = 0; h < heads; ++h) sum += concentration.at(l, h);
        std::vector<double> targets(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            targets[h] = sum == 0.0
                             ? static_cast<double>(cfg.b)
                             : concentration.at(l, h) / sum * static_cast<double>(layer_total);
        }
        const std::vector<std::int64_t> layer_budgets =
            detail::largest_remainder(targets, layer_total);
        for (std::size_t h = 0; h < heads; ++h) {
            plan.per_head.at(l, h) = layer_budgets[h];
        }
    }
    plan.total = layer_total * static_cast<std::int64_t>(layers);

    double conc_sum = 0.0;
    for (double v : concentration.data) conc_sum += v;
    if (conc_sum == 0.0) {
        plan.weights = detail::uniform_weights(layers, heads);
    } else {
        plan.weights = concentration;
        for (double& v : plan.weights.data) v /= conc_sum;
    }
    return plan;
}

/// Caps every per-head budget at n - alpha and hands the removed excess to
/// the still-uncapped heads in proportion to the plan's weights (equally if
/// those weights are all zero), iterating until nothing exceeds the cap.
/// Residue left when every head is capped is discarded.
inline BudgetPlan clamp_to_sequence(const BudgetPlan& plan, std::size_t n) {
    require(static_cast<std::int64_t>(n) >= plan.alpha,
            "clamp_to_sequence: sequence shorter than the protected window");
    const std::int64_t cap = static_cast<std::int64_t>(n) - plan.alpha;

    BudgetPlan out = plan;
    while (true) {
        std::int64_t excess = 0;
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < out.per_head.size(); ++i) {
            if (out.per_head.data[i] > cap) {
                excess += out.per_head.data[i] - cap;
                out.per_head.data[i] = cap;
            } else if (out.per_head.data[i] < cap) {
                open.push_back(i);
            }
        }
        if (excess == 0) break;
        if (open.empty()) break;  // everything capped: discard the residue

        double wsum = 0.0;
        for (std::size_t i : open) wsum += out.weights.data[i];
        std::vector<double> targets(open.size());
        for (std::size_t j = 0; j < open.size(); ++j) {
            const double share = wsum == 0.0 ? 1.0 / static_cast<double>(open.size())
                                             : out.weights.data[open[j]] / wsum;
            targets[j] = share * static_cast<double>(excess);
        }
        const std::vector<std::int64_t> extra = detail::largest_remainder(targets, excess);
        for (std::size_t j = 0; j < open.size(); ++j) {
            out.per_head.data[open[j]] += extra[j];
        }
    }
    out.total = 0;
    for (std::int64_t v : out.per_head.data) out.total += v;
    return out;
}

struct PlanValidation {
    bool conservation = false;
    bool non_negative = false;
    bool monotone = false;

    bool ok() const { return conservation && non_negative && monotone; }
};

/// Checks a pre-clamp plan: exact conservation of b*L*H, non-negative
/// budgets, and weight-order monotonicity (a strictly larger weight never
/// receives a strictly smaller budget).
inline PlanValidation validate_plan(const BudgetPlan& plan, const AllocationConfig& cfg,
                                    std::size_t layers, std::size_t heads) {
    PlanValidation v;
    std::int64_t sum = 0;
    bool non_neg = true;
    for (std::int64_t b : plan.per_head.data) {
        sum += b;
        non_neg = non_neg && b >= 0;
    }
    v.conservation = plan.per_head.same_shape(layers, heads) &&
                     sum == cfg.b * static_cast<std::int64_t>(layers * heads) &&
                     sum == plan.total;
    v.non_negative = non_neg;

    std::vector<std::size_t> order(plan.per_head.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return plan.weights.data[a] > plan.weights.data[b];
    });
    v.monotone = true;
    std::int64_t prefix_min = std::numeric_limits<std::int64_t>::max();
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::int64_t group_max = std::numeric_limits<std::int64_t>::min();
        std::int64_t group_min = std::numeric_limits<std::int64_t>::max();
        while (j < order.size() &&
               plan.weights.data[order[j]] == plan.weights.data[order[i]]) {
            group_max = std::max(group_max, plan.per_head.data[order[j]]);
            group_min = std::min(group_min, plan.per_head.data[order[j]]);
            ++j;
        }
        if (group_max > prefix_min) {
            v.monotone = false;
            break;
        }
        prefix_min = std::min(prefix_min, group_min);
        i = j;
    }
    return v;
}

}  // namespace headkv
