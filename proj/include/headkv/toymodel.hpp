// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "headkv/common.hpp"
#include "headkv/head_id.hpp"
#include "headkv/kvstore.hpp"
#include "headkv/numkit.hpp"
#include "headkv/probes.hpp"

namespace headkv {

// ---------------------------------------------------------------------------
// Attention traces
// ---------------------------------------------------------------------------

/// Per-decoding-step attention record. `attention` holds, for every head, the
/// probability vector of the current query over all cached positions
/// (including the token fed at this step). `emitted` is the model's own
/// argmax prediction at this step, independent of what was fed.
struct AttentionTrace {
    struct StepRecord {
        Token emitted = 0;
        HeadGrid<std::vector<double>> attention;
    };
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::vector<StepRecord> steps;
};

// ---------------------------------------------------------------------------
// Deterministic tiny decoder-only model
// ---------------------------------------------------------------------------

struct ModelSpec {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_model = 0;
    std::size_t d_head = 0;
    std::size_t vocab_size = 0;
    std::uint64_t seed = 0;
    std::size_t max_context = 4096;
};

/// Attention + residual + unembedding; no MLP blocks. Position information is
/// a learned absolute embedding indexed by the ORIGINAL token position, so
/// eviction never shifts positions.
struct Model {
    ModelSpec spec;
    Matrix tok_embed;  // vocab x d_model
    Matrix pos_embed;  // max_context x d_model
    struct Layer {
        std::vector<Matrix> w_q, w_k, w_v;  // per head, d_model x d_head
        Matrix w_o;                         // d_model x d_model
    };
    std::vector<Layer> layers;
    Matrix unembed;  // d_model x vocab
};

namespace detail {

inline void fill_uniform(Matrix& m, SeededRng& rng, double scale) {
    for (double& v : m.data) {
        v = rng.uniform(-scale, scale);
    }
}

}  // namespace detail

/// Weights are drawn from a single stream seeded by spec.seed, in a fixed
/// order (token embedding, position embedding, per layer the per-head
/// W_Q/W_K/W_V then W_O, finally the unembedding), scaled uniform in
/// [-1/sqrt(d_model), 1/sqrt(d_model)]. Same spec, same weights.
inline Model build_toy_model(const ModelSpec& spec) {
    require(spec.n_layers >= 1 && spec.n_heads >= 1, "build_toy_model: need L >= 1 and H >= 1");
    require(spec.d_head >= 1 && spec.vocab_size >= 2, "build_toy_model: degenerate dimensions");
    require(spec.d_model == spec.n_heads * spec.d_head,
            "build_toy_model: d_model must equal n_heads * d_head");
    require(spec.max_context >= 1, "build_toy_model: max_context must be positive");

    Model model;
    model.spec = spec;
    SeededRng rng(spec.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_model));

    model.tok_embed = Matrix(spec.vocab_size, spec.d_model);
    detail::fill_uniform(model.tok_embed, rng, scale);
    model.pos_embed = Matrix(spec.max_context, spec.d_model);
    detail::fill_uniform(model.pos_embed, rng, scale);

    model.layers.resize(spec.n_layers);
    for (auto& layer : model.layers) {
        layer.w_q.resize(spec.n_heads);
        layer.w_k.resize(spec.n_heads);
        layer.w_v.resize(spec.n_heads);
        for (std::size_t h = 0; h < spec.n_heads; ++h) {
            layer.w_q[h] = Matrix(spec.d_model, spec.d_head);
            detail::fill_uniform(layer.w_q[h], rng, scale);
            layer.w_k[h] = Matrix(spec.d_model, spec.d_head);
            detail::fill_uniform(layer.w_k[h], rng, scale);
            layer.w_v[h] = Matrix(spec.d_model, spec.d_head);
            detail::fill_uniform(layer.w_v[h], rng, scale);
        }
        layer.w_o = Matrix(spec.d_model, spec.d_model);
        detail::fill_uniform(layer.w_o, rng, scale);
    }
    model.unembed = Matrix(spec.d_model, spec.vocab_size);
    detail::fill_uniform(model.unembed, rng, scale);
    return model;
}

struct PrefillResult {
    HeadGrid<HeadCache> caches;
    /// Per head: the kept trailing query rows of the causal attention matrix,
    /// each row a length-n probability vector (zeros beyond the causal edge).
    HeadGrid<Matrix> attention;
    std::size_t attn_row_offset = 0;  // global index of the first kept row
    std::vector<double> last_logits;
};

namespace detail {

inline std::vector<double> project_vec(const double* x, const Matrix& w) {
    std::vector<double> out(w.cols, 0.0);
    for (std::size_t k = 0; k < w.rows; ++k) {
        const double xk = x[k];
        const double* wrow = w.row(k);
        for (std::size_t j = 0; j < w.cols; ++j) {
            out[j] += xk * wrow[j];
        }
    }
    return out;
}

}  // namespace detail

/// Runs the model over the whole prompt, returning the per-head KV caches,
/// the causal prefill attention (optionally only the last `keep_attn_rows`
/// query rows to bound memory on long prompts; 0 keeps every row) and the
/// logits at the final position.
inline PrefillResult prefill(const Model& model, const std::vector<Token>& tokens,
                             std::size_t keep_attn_rows = 0) {
    const ModelSpec& spec = model.spec;
    const std::size_t n = tokens.size();
    require(n >= 1 && n <= spec.max_context, "prefill: prompt length out of range");
    for (Token t : tokens) {
        require(t >= 0 && static_cast<std::size_t>(t) < spec.vocab_size,
                "prefill: token id outside the vocabulary");
    }
    const std::size_t keep = (keep_attn_rows == 0) ? n : std::min(keep_attn_rows, n);

    PrefillResult res;
    res.caches = HeadGrid<HeadCache>(spec.n_layers, spec.n_heads);
    res.attention = HeadGrid<Matrix>(spec.n_layers, spec.n_heads);
    res.attn_row_offset = n - keep;

    Matrix x(n, spec.d_model);
    for (std::size_t i = 0; i < n; ++i) {
        const double* te = model.tok_embed.row(static_cast<std::size_t>(tokens[i]));
        const double* pe = model.pos_embed.row(i);
        for (std::size_t c = 0; c < spec.d_model; ++c) {
            x.at(i, c) = te[c] + pe[c];
        }
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(spec.d_head));
    std::vector<double> scores;
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
        const Model::Layer& layer = model.layers[l];
        Matrix concat(n, spec.d_model);
        for (std::size_t h = 0; h < spec.n_heads; ++h) {
            Matrix q = matmul(x, layer.w_q[h]);
            Matrix k = matmul(x, layer.w_k[h]);
            Matrix v = matmul(x, layer.w_v[h]);
            Matrix attn(keep, n);
            for (std::size_t r = 0; r < n; ++r) {
                scores.assign(r + 1, 0.0);
                for (std::size_t j = 0; j <= r; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < spec.d_head; ++c) {
                        dot += q.at(r, c) * k.at(j, c);
                    }
                    scores[j] = dot * inv_sqrt_dh;
                }
                const std::vector<double> probs = softmax(scores);
                if (r >= res.attn_row_offset) {
                    double* arow = attn.row(r - res.attn_row_offset);
                    for (std::size_t j = 0; j <= r; ++j) {
                        arow[j] = probs[j];
                    }
                }
                double* crow = concat.row(r) + h * spec.d_head;
                for (std::size_t j = 0; j <= r; ++j) {
                    const double a = probs[j];
                    const double* vrow = v.row(j);
                    for (std::size_t c = 0; c < spec.d_head; ++c) {
                        crow[c] += a * vrow[c];
                    }
                }
            }
            HeadCache& cache = res.caches.at(l, h);
            cache.keys = std::move(k);
            cache.values = std::move(v);
            cache.positions.resize(n);
            for (std::size_t i = 0; i < n; ++i) cache.positions[i] = i;
            res.attention.at(l, h) = std::move(attn);
        }
        Matrix projected = matmul(concat, layer.w_o);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] += projected.data[i];
        }
    }

    res.last_logits = detail::project_vec(x.row(n - 1), model.unembed);
    return res;
}

namespace detail {

struct DecodeStepOut {
    std::vector<double> logits;
    HeadGrid<std::vector<double>> attention;
};

/// One autoregressive step: appends the fed token's KV to every head cache
/// (at its original position) and attends over all retained rows.
inline DecodeStepOut decode_step(const Model& model, HeadGrid<HeadCache>& caches,
                                 Token token, std::size_t position) {
    const ModelSpec& spec = model.spec;
    require(token >= 0 && static_cast<std::size_t>(token) < spec.vocab_size,
            "decode: token id outside the vocabulary");
    require(position < spec.max_context, "decode: position beyond max_context");

    DecodeStepOut out;
    out.attention = HeadGrid<std::vector<double>>(spec.n_layers, spec.n_heads);

    std::vector<double> x(spec.d_model);
    {
        const double* te = model.tok_embed.row(static_cast<std::size_t>(token));
        const double* pe = model.pos_embed.row(position);
        for (std::size_t c = 0; c < spec.d_model; ++c) {
            x[c] = te[c] + pe[c];
        }
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(spec.d_head));
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
        const Model::Layer& layer = model.layers[l];
        std::vector<double> concat(spec.d_model, 0.0);
        for (std::size_t h = 0; h < spec.n_heads; ++h) {
            const std::vector<double> q = project_vec(x.data(), layer.w_q[h]);
            const std::vector<double> k_new = project_vec(x.data(), layer.w_k[h]);
            const std::vector<double> v_new = project_vec(x.data(), layer.w_v[h]);
            HeadCache& cache = caches.at(l, h);
            append(cache, k_new, v_new, position);

            const std::size_t s = cache.size();
            std::vector<double> scores(s);
            for (std::size_t j = 0; j < s; ++j) {
                double dot = 0.0;
                const double* krow = cache.keys.row(j);
                for (std::size_t c = 0; c < spec.d_head; ++c) {
                    dot += q[c] * krow[c];
                }
                scores[j] = dot * inv_sqrt_dh;
            }
            std::vector<double> probs = softmax(scores);
            double* crow = concat.data() + h * spec.d_head;
            for (std::size_t j = 0; j < s; ++j) {
                const double a = probs[j];
                const double* vrow = cache.values.row(j);
                for (std::size_t c = 0; c < spec.d_head; ++c) {
                    crow[c] += a * vrow[c];
                }
            }
            out.attention.at(l, h) = std::move(probs);
        }
        const std::vector<double> projected = project_vec(concat.data(), layer.w_o);
        for (std::size_t c = 0; c < spec.d_model; ++c) {
            x[c] += projected[c];
        }
    }
    out.logits = project_vec(x.data(), model.unembed);
    return out;
}

inline std::size_t next_position(const HeadGrid<HeadCache>& caches) {
    require(caches.size() > 0 && !caches.data.front().positions.empty(),
            "decode: caches must be non-empty");
    return caches.data.front().positions.back() + 1;
}

}  // namespace detail

/// Feeds the target tokens one by one regardless of the model's own argmax,
/// recording the per-head attention and the model's prediction at each step.
/// Exactly length(target) steps. New tokens are placed at the positions that
/// continue the original (uncompressed) sequence, which the always-retained
/// local window pins down.
inline AttentionTrace decode_teacher_forced(const Model& model, HeadGrid<HeadCache>& caches,
                                            const std::vector<Token>& target) {
    require(!target.empty(), "decode_teacher_forced: empty target");
    const std::size_t start = detail::next_position(caches);
    AttentionTrace trace;
    trace.layers = caches.layers;
    trace.heads = caches.heads;
    trace.steps.reserve(target.size());
    for (std::size_t t = 0; t < target.size(); ++t) {
        detail::DecodeStepOut step = detail::decode_step(model, caches, target[t], start + t);
        AttentionTrace::StepRecord rec;
        rec.emitted = static_cast<Token>(argmax_index(step.logits.data(), step.logits.size()));
        rec.attention = std::move(step.attention);
        trace.steps.push_back(std::move(rec));
    }
    return trace;
}

/// Greedy continuation: feeds `first_input`, then repeatedly feeds back its
/// own argmax. Returns the n_steps generated tokens.
inline std::vector<Token> decode_greedy(const Model& model, HeadGrid<HeadCache>& caches,
                                        Token first_input, std::size_t n_steps) {
    std::vector<Token> out;
    out.reserve(n_steps);
    Token prev = first_input;
    std::size_t pos = detail::next_position(caches);
    for (std::size_t t = 0; t < n_steps; ++t) {
        detail::DecodeStepOut step = detail::decode_step(model, caches, prev, pos + t);
        prev = static_cast<Token>(argmax_index(step.logits.data(), step.logits.size()));
        out.push_back(prev);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Planted oracle
// ---------------------------------------------------------------------------

/// Ground-truth attention generator standing in for a pretrained LLM. Heads
/// listed in `planted` concentrate a known attention mass w on the probed
/// span; every other head follows a fixed recency-anchored noise profile, so
/// estimator behaviour can be validated against construction.
struct PlantedOracleSpec {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::vector<std::pair<HeadId, double>> planted;  // weight w in [0, 1] per entry
    std::uint64_t noise_seed = 0;

    void validate() const {
        require(n_layers >= 1 && n_heads >= 1, "PlantedOracleSpec: empty model shape");
        for (const auto& [id, w] : planted) {
            require(id.layer < n_layers && id.head < n_heads,
                    "PlantedOracleSpec: planted head outside the model shape");
            require(w >= 0.0 && w <= 1.0, "PlantedOracleSpec: plant weight outside [0, 1]");
        }
    }

    double mean_plant_weight() const {
        if (planted.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& [id, w] : planted) sum += w;
        return sum / static_cast<double>(planted.size());
    }

    HeadGrid<double> weight_grid() const {
        HeadGrid<double> grid(n_layers, n_heads, 0.0);
        for (const auto& [id, w] : planted) grid.at(id) = w;
        return grid;
    }

    std::vector<HeadId> planted_ids() const {
        std::vector<HeadId> ids;
        ids.reserve(planted.size());
        for (const auto& [id, w] : planted) ids.push_back(id);
        return ids;
    }
};

/// Plants round(fraction * L * H) heads at the given weight, chosen by a
/// seeded shuffle of the flat head indices.
inline PlantedOracleSpec make_scattered_plant(std::size_t n_layers, std::size_t n_heads,
                                              double fraction, double weight,
                                              std::uint64_t seed,
                                              std::uint64_t noise_seed = 0) {
    require(fraction >= 0.0 && fraction <= 1.0, "make_scattered_plant: fraction outside [0, 1]");
    const std::size_t total = n_layers * n_heads;
    const std::size_t count = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(total)));
    std::vector<std::size_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = i;
    SeededRng rng(seed);
    for (std::size_t i = 0; i < count && i + 1 < total; ++i) {
        const std::size_t j = i + rng.next_below(total - i);
        std::swap(flat[i], flat[j]);
    }
    flat.resize(count);
    std::sort(flat.begin(), flat.end());

    PlantedOracleSpec spec;
    spec.n_layers = n_layers;
    spec.n_heads = n_heads;
    spec.noise_seed = noise_seed;
    for (std::size_t f : flat) {
        spec.planted.emplace_back(HeadId{f / n_heads, f % n_heads}, weight);
    }
    spec.validate();
    return spec;
}

namespace detail {

inline std::uint64_t head_personality(const PlantedOracleSpec& spec, std::size_t layer,
                                      std::size_t head) {
    return mix(0x48454144ULL, spec.noise_seed, layer, head);
}

/// Recency-anchored noise profile for unplanted heads: every position gets
/// 1 + 0.5*u (u uniform in [0,1)), except one anchor in the last
/// min(8, len) positions, which is fixed at 1.75 so the argmax always lands
/// on the head's anchor. Normalized to sum 1; the largest entry stays below
/// 2/len.
inline std::vector<double> noise_attention_row(std::size_t len, std::uint64_t personality,
                                               SeededRng& stream) {
    std::vector<double> row(len);
    double sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
        row[j] = 1.0 + 0.5 * stream.next_double();
        sum += row[j];
    }
    const std::size_t window = std::min<std::size_t>(8, len);
    const std::size_t anchor = len - 1 - (personality % window);
    sum -= row[anchor];
    row[anchor] = 1.75;
    sum += row[anchor];
    for (double& v : row) v /= sum;
    return row;
}

/// Deterministic planted profile for one decoding step: mass w on the span
/// (0.8*w on the step's own span token, the rest uniform over the remaining
/// span tokens) and 1-w uniform over the off-span positions.
inline std::vector<double> planted_attention_row(std::size_t len, const Span& span,
                                                 std::size_t focus, double w) {
    std::vector<double> row(len, 0.0);
    const std::size_t n_span = span.size();
    const std::size_t n_off = len - n_span;
    if (n_span == 1) {
        row[span.begin] = w;
    } else {
        const double rest = 0.2 * w / static_cast<double>(n_span - 1);
        for (std::size_t j = span.begin; j < span.end; ++j) row[j] = rest;
        row[focus] = 0.8 * w;
    }
    if (n_off > 0) {
        const double off = (1.0 - w) / static_cast<double>(n_off);
        for (std::size_t j = 0; j < span.begin; ++j) row[j] = off;
        for (std::size_t j = span.end; j < len; ++j) row[j] = off;
    } else {
        const double extra = (1.0 - w) / static_cast<double>(n_span);
        for (std::size_t j = span.begin; j < span.end; ++j) row[j] += extra;
    }
    return row;
}

/// Planted profile for selection-guiding query rows: mass w spread uniformly
/// over the union of the attended spans, 1-w uniform elsewhere.
inline std::vector<double> planted_window_row(std::size_t len, const std::vector<Span>& spans,
                                              double w) {
    std::size_t n_span = 0;
    for (const Span& s : spans) n_span += s.size();
    std::vector<double> row(len, 0.0);
    if (n_span == 0 || n_span >= len) {
        const double u = 1.0 / static_cast<double>(len);
        for (double& v : row) v = u;
        return row;
    }
    const double on = w / static_cast<double>(n_span);
    const double off = (1.0 - w) / static_cast<double>(len - n_span);
    for (double& v : row) v = off;
    for (const Span& s : spans) {
        for (std::size_t j = s.begin; j < s.end; ++j) row[j] = on;
    }
    return row;
}

}  // namespace detail

/// Simulated decoding trace over an example. The steps cover `target_span`;
/// at step t a planted head with weight w concentrates 0.8*w of its attention
/// on the span's t-th token, spreads 0.2*w over the rest of the span and 1-w
/// over everything else, while unplanted heads follow the recency-anchored
/// noise profile. The emitted token is the span's t-th token iff the mean
/// plant weight is at least 0.5, otherwise a fixed wrong token.
inline AttentionTrace oracle_trace(const PlantedOracleSpec& spec, const NeedleExample& example,
                                   const Span& target_span) {
    spec.validate();
    require(!target_span.empty() && target_span.end <= example.context.size(),
            "oracle_trace: target span outside the example context");
    const std::size_t n_input = example.context.size() + example.question.size();
    const std::size_t n_steps = target_span.size();
    const bool emit_correct = spec.mean_plant_weight() >= 0.5;

    const HeadGrid<double> weights = spec.weight_grid();
    HeadGrid<std::uint8_t> is_planted(spec.n_layers, spec.n_heads, 0);
    for (const auto& [id, w] : spec.planted) is_planted.at(id) = 1;

    const std::uint64_t fp = detail::fnv1a(example.context.data(), example.context.size()) ^
                             detail::fnv1a(example.question.data(), example.question.size());
    HeadGrid<SeededRng> streams(spec.n_layers, spec.n_heads, SeededRng(0));
    for (std::size_t i = 0; i < streams.size(); ++i) {
        const HeadId id = streams.id_of(i);
        streams.data[i] =
            SeededRng(detail::mix(spec.noise_seed, fp, id.layer, id.head, 0x7261CEULL));
    }

    AttentionTrace trace;
    trace.layers = spec.n_layers;
    trace.heads = spec.n_heads;
    trace.steps.reserve(n_steps);
    for (std::size_t t = 0; t < n_steps; ++t) {
        const std::size_t len = n_input + t + 1;
        AttentionTrace::StepRecord rec;
        rec.emitted = emit_correct ? example.context[target_span.begin + t]
                                   : TokenRanges::noise_token;
        rec.attention = HeadGrid<std::vector<double>>(spec.n_layers, spec.n_heads);
        for (std::size_t i = 0; i < rec.attention.size(); ++i) {
            const HeadId id = rec.attention.id_of(i);
            const double w = weights.data[i];
            if (is_planted.data[i] && w > 0.0) {
                rec.attention.data[i] = detail::planted_attention_row(
                    len, target_span, target_span.begin + t, w);
            } else {
                rec.attention.data[i] = detail::noise_attention_row(
                    len, detail::head_personality(spec, id.layer, id.head), streams.data[i]);
            }
        }
        trace.steps.push_back(std::move(rec));
    }
    return trace;
}

/// Selection-guiding attention for the last `alpha` query positions of the
/// combined input, in the same per-head profiles as oracle_trace. Planted
/// heads spread their mass over the union of `attend_spans` (no per-step
/// focus token), unplanted heads use the noise profile whose anchor falls in
/// the protected window.
inline HeadGrid<Matrix> oracle_window_attention(const PlantedOracleSpec& spec,
                                                const std::vector<Token>& full_input,
                                                const std::vector<Span>& attend_spans,
                                                std::size_t alpha) {
    spec.validate();
    const std::size_t n = full_input.size();
    require(alpha >= 1 && alpha < n, "oracle_window_attention: need 1 <= alpha < n");
    for (const Span& s : attend_spans) {
        require(s.end <= n, "oracle_window_attention: span outside the input");
    }

    const HeadGrid<double> weights = spec.weight_grid();
    HeadGrid<std::uint8_t> is_planted(spec.n_layers, spec.n_heads, 0);
    for (const auto& [id, w] : spec.planted) is_planted.at(id) = 1;

    const std::uint64_t fp = detail::fnv1a(full_input.data(), full_input.size());
    HeadGrid<Matrix> out(spec.n_layers, spec.n_heads);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const HeadId id = out.id_of(i);
        Matrix rows(alpha, n);
        if (is_planted.data[i] && weights.data[i] > 0.0) {
            const std::vector<double> row =
                detail::planted_window_row(n, attend_spans, weights.data[i]);
            for (std::size_t r = 0; r < alpha; ++r) {
                std::copy(row.begin(), row.end(), rows.row(r));
            }
        } else {
            SeededRng stream(
                detail::mix(spec.noise_seed, fp, id.layer, id.head, 0x77696EULL));
            const std::uint64_t personality = detail::head_personality(spec, id.layer, id.head);
            for (std::size_t r = 0; r < alpha; ++r) {
                const std::vector<double> row =
                    detail::noise_attention_row(n, personality, stream);
                std::copy(row.begin(), row.end(), rows.row(r));
            }
        }
        out.data[i] = std::move(rows);
    }
    return out;
}

}  // namespace headkv
