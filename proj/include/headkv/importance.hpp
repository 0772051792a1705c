// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "headkv/head_id.hpp"
#include "headkv/numkit.hpp"
#include "headkv/toymodel.hpp"

namespace headkv {

enum class Estimator { R, ER, R2 };

inline std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::R: return "R";
        case Estimator::ER: return "ER";
        case Estimator::R2: return "R2";
    }
    return "?";
}

inline Estimator estimator_from_name(const std::string& name) {
    if (name == "R") return Estimator::R;
    if (name == "ER") return Estimator::ER;
    if (name == "R2") return Estimator::R2;
    throw ConfigError("unknown estimator: " + name + " (expected R, ER or R2)");
}

/// Aggregated per-head importance distribution. `raw` is the mean of the
/// per-example scores (each in [0, 1]); `normalized` sums to 1, falling back
/// to uniform when every raw score is zero so allocation stays well-defined.
struct ImportanceScores {
    std::size_t layers = 0;
    std::size_t heads = 0;
    HeadGrid<double> raw;
    HeadGrid<double> normalized;
    Estimator estimator_tag = Estimator::R2;
};

/// Retrieval score: at each of the N decoding steps a head earns 1/N iff its
/// argmax attention position lies inside the needle span AND the token at
/// that position equals the step's emitted token. Argmax ties break toward
/// the lower index. Traces must come from a full (uncompressed) cache so that
/// attention index j addresses input position j; `full_input` is the combined
/// context + question sequence the trace attends over.
inline HeadGrid<double> score_retrieval(const AttentionTrace& trace, const Span& needle_span,
                                        const std::vector<Token>& target,
                                        const std::vector<Token>& full_input) {
    require(!target.empty(), "score_retrieval: empty target");
    require(trace.steps.size() == target.size(),
            "score_retrieval: trace must have exactly length(target) steps");
    const double frac = 1.0 / static_cast<double>(target.size());
    HeadGrid<double> scores(trace.layers, trace.heads, 0.0);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& rec = trace.steps[t];
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const std::vector<double>& attn = rec.attention.data[i];
            const std::size_t pos = argmax_index(attn.data(), attn.size());
            if (needle_span.contains(pos) && pos < full_input.size() &&
                full_input[pos] == rec.emitted) {
                scores.data[i] += frac;
            }
        }
    }
    return scores;
}

/// Retrieval-reasoning score: with N the length of the correct answer span
/// (and of the trace), each step contributes a_i/N for every rank i in 1..N
/// whose position falls inside the span, where a_i is the i-th highest
/// attention value at that step. Rank ties break toward the lower index.
inline HeadGrid<double> score_r2(const AttentionTrace& trace, const Span& correct_span) {
    const std::size_t n_steps = correct_span.size();
    require(n_steps >= 1, "score_r2: empty correct answer span");
    require(trace.steps.size() == n_steps,
            "score_r2: trace must have exactly length(correct_span) steps");
    const double inv_n = 1.0 / static_cast<double>(n_steps);
    HeadGrid<double> scores(trace.layers, trace.heads, 0.0);
    for (const auto& rec : trace.steps) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const std::vector<double>& attn = rec.attention.data[i];
            const std::size_t k = std::min(n_steps, attn.size());
            const std::vector<std::size_t> top = top_k_indices(attn, k);
            double in_span = 0.0;
            for (std::size_t pos : top) {
                if (correct_span.contains(pos)) in_span += attn[pos];
            }
            scores.data[i] += in_span * inv_n;
        }
    }
    return scores;
}

/// The R2 scoring rule applied to plain retrieval examples, with the whole
/// needle span standing in for the correct answer.
inline HeadGrid<double> score_enhanced_retrieval(const AttentionTrace& trace,
                                                 const Span& needle_span) {
    return score_r2(trace, needle_span);
}

/// Unweighted arithmetic mean over examples, then normalization (uniform
/// fallback when the sum is zero).
inline ImportanceScores aggregate(const std::vector<HeadGrid<double>>& per_example,
                                  Estimator tag) {
    require(!per_example.empty(), "aggregate: no per-example scores");
    const std::size_t layers = per_example.front().layers;
    const std::size_t heads = per_example.front().heads;
    ImportanceScores out;
    out.layers = layers;
    out.heads = heads;
    out.estimator_tag = tag;
    out.raw = HeadGrid<double>(layers, heads, 0.0);
    for (const auto& ex : per_example) {
        require(ex.same_shape(layers, heads), "aggregate: inconsistent score shapes");
        for (std::size_t i = 0; i < ex.size(); ++i) {
            out.raw.data[i] += ex.data[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(per_example.size());
    double sum = 0.0;
    for (double& v : out.raw.data) {
        v *= inv;
        sum += v;
    }
    out.normalized = HeadGrid<double>(layers, heads, 0.0);
    if (sum == 0.0) {
        const double u = 1.0 / static_cast<double>(out.raw.size());
        for (double& v : out.normalized.data) v = u;
    } else {
        for (std::size_t i = 0; i < out.raw.size(); ++i) {
            out.normalized.data[i] = out.raw.data[i] / sum;
        }
    }
    return out;
}

struct DistributionStats {
    double zero_fraction_a = 0.0;
    double zero_fraction_b = 0.0;
    double topk_overlap = 0.0;
};

/// Sparsity and agreement statistics between two distributions of the same
/// shape: the fraction of exactly-zero raw scores on each side, and the
/// overlap of their top-k head sets.
inline DistributionStats distribution_stats(const ImportanceScores& a,
                                            const ImportanceScores& b, std::size_t k) {
    require(a.raw.same_shape(b.raw.layers, b.raw.heads),
            "distribution_stats: shape mismatch");
    require(k <= a.raw.size(), "distribution_stats: k exceeds the number of heads");
    DistributionStats st;
    const double inv = 1.0 / static_cast<double>(a.raw.size());
    for (std::size_t i = 0; i < a.raw.size(); ++i) {
        if (a.raw.data[i] == 0.0) st.zero_fraction_a += inv;
        if (b.raw.data[i] == 0.0) st.zero_fraction_b += inv;
    }
    if (k > 0) {
        std::vector<std::size_t> ta = top_k_indices(a.raw.data, k);
        std::vector<std::size_t> tb = top_k_indices(b.raw.data, k);
        std::sort(ta.begin(), ta.end());
        std::sort(tb.begin(), tb.end());
        std::vector<std::size_t> common;
        std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(),
                              std::back_inserter(common));
        st.topk_overlap = static_cast<double>(common.size()) / static_cast<double>(k);
    }
    return st;
}

}  // namespace headkv
