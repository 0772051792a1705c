// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <cmath>

#include "headkv/importance.hpp"
#include "headkv/probes.hpp"
#include "headkv/toymodel.hpp"

using namespace headkv;

namespace {

ModelSpec small_spec() {
    ModelSpec spec;
    spec.n_layers = 2;
    spec.n_heads = 2;
    spec.d_model = 8;
    spec.d_head = 4;
    spec.vocab_size = 16;
    spec.seed = 2024;
    spec.max_context = 128;
    return spec;
}

NeedleExample oracle_example(std::size_t hay_len, std::size_t needle_len, double depth,
                             std::uint64_t seed) {
    SeededRng rng(seed);
    const auto hay = gen_haystack(rng, hay_len, 64);
    const auto needle = draw_tokens(rng, needle_len, 16, 32);
    const auto question = draw_tokens(rng, 8, 2, 16);
    return make_retrieval_example(hay, needle, question, depth);
}

}  // namespace

TEST_CASE("same spec builds bit-identical models") {
    const Model a = build_toy_model(small_spec());
    const Model b = build_toy_model(small_spec());
    const std::vector<Token> prompt = {1, 2, 3, 4, 5};
    const auto ra = prefill(a, prompt);
    const auto rb = prefill(b, prompt);
    CHECK(ra.last_logits == rb.last_logits);
}

TEST_CASE("different seeds give different logits") {
    ModelSpec other = small_spec();
    other.seed = 2025;
    const auto ra = prefill(build_toy_model(small_spec()), {1, 2, 3, 4, 5});
    const auto rb = prefill(build_toy_model(other), {1, 2, 3, 4, 5});
    CHECK(ra.last_logits != rb.last_logits);
}

TEST_CASE("prefill attention has the right shape and causal structure") {
    const Model model = build_toy_model(small_spec());
    const std::vector<Token> prompt = {3, 1, 4, 1, 5};
    const auto res = prefill(model, prompt);
    REQUIRE(res.attention.layers == 2);
    REQUIRE(res.attention.heads == 2);
    for (const Matrix& attn : res.attention.data) {
        REQUIRE(attn.rows == 5);
        REQUIRE(attn.cols == 5);
        for (std::size_t r = 0; r < attn.rows; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < attn.cols; ++j) {
                if (j > r) {
                    REQUIRE(attn.at(r, j) == 0.0);
                } else {
                    sum += attn.at(r, j);
                }
            }
            REQUIRE(sum == Approx(1.0).margin(1e-9));
        }
    }
    for (const HeadCache& cache : res.caches.data) {
        REQUIRE(cache.size() == 5);
        REQUIRE(cache.d_head() == 4);
    }
}

TEST_CASE("single-token prompts attend only to themselves") {
    const Model model = build_toy_model(small_spec());
    const auto res = prefill(model, {7});
    for (const Matrix& attn : res.attention.data) {
        REQUIRE(attn.rows == 1);
        REQUIRE(attn.at(0, 0) == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("prefill rejects out-of-vocabulary tokens and bad specs") {
    const Model model = build_toy_model(small_spec());
    CHECK_THROWS_AS(prefill(model, {99}), Error);
    CHECK_THROWS_AS(prefill(model, {}), Error);

    ModelSpec bad = small_spec();
    bad.d_model = 7;
    CHECK_THROWS_AS(build_toy_model(bad), Error);
}

TEST_CASE("golden logits for a fixed seed and prompt") {
    // Recorded from this implementation; guards the weight-draw order and the
    // forward pass against regressions.
    const Model model = build_toy_model(small_spec());
    const auto res = prefill(model, {2, 7, 1, 11, 3});
    REQUIRE(res.last_logits.size() == 16);
    const std::vector<double> golden = {
        0.14427214459851606,   -0.10228398424399315,  0.28197692749639663,
        0.18444483072492857,   -0.21420986591589014,  -0.17596267970900226,
        -0.072930732011626961, -0.14279244192846638,  -0.085100382327723295,
        0.036453517241060274,  -0.064342970362585711, -0.29229948802194955,
        -0.099788911619404966, -0.227168417863396,    -0.23047214637034605,
        0.11403561608251893};
    REQUIRE(golden.size() == 16);
    for (std::size_t i = 0; i < golden.size(); ++i) {
        REQUIRE(res.last_logits[i] == Approx(golden[i]).margin(1e-12));
    }
}

TEST_CASE("teacher-forced decode has one step per target token") {
    const Model model = build_toy_model(small_spec());
    auto res = prefill(model, {1, 2, 3, 4, 5, 6});
    const std::vector<Token> target = {7, 8, 9};
    const AttentionTrace trace = decode_teacher_forced(model, res.caches, target);
    REQUIRE(trace.steps.size() == 3);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        for (const auto& vec : trace.steps[t].attention.data) {
            REQUIRE(vec.size() == 6 + t + 1);
            double sum = 0.0;
            for (double v : vec) sum += v;
            REQUIRE(sum == Approx(1.0).margin(1e-9));
        }
    }
    auto res2 = prefill(model, {1, 2, 3});
    CHECK_THROWS_AS(decode_teacher_forced(model, res2.caches, {}), Error);
}

TEST_CASE("retain-all compression leaves teacher-forced traces unchanged") {
    const Model model = build_toy_model(small_spec());
    const std::vector<Token> prompt = {1, 2, 3, 4, 5, 6, 7, 8};
    const std::vector<Token> target = {9, 10, 11};

    auto full = prefill(model, prompt);
    auto compressed = prefill(model, prompt);
    std::vector<std::size_t> all(prompt.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (auto& cache : compressed.caches.data) {
        cache = evict_to(cache, all);
    }

    const AttentionTrace ta = decode_teacher_forced(model, full.caches, target);
    const AttentionTrace tb = decode_teacher_forced(model, compressed.caches, target);
    REQUIRE(ta.steps.size() == tb.steps.size());
    for (std::size_t t = 0; t < ta.steps.size(); ++t) {
        REQUIRE(ta.steps[t].emitted == tb.steps[t].emitted);
        for (std::size_t i = 0; i < ta.steps[t].attention.size(); ++i) {
            REQUIRE(ta.steps[t].attention.data[i] == tb.steps[t].attention.data[i]);
        }
    }
}

TEST_CASE("greedy decode over a retain-all cache is bit-identical to full") {
    const Model model = build_toy_model(small_spec());
    SeededRng rng(77);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<Token> prompt(24);
        for (auto& t : prompt) t = static_cast<Token>(rng.next_below(16));

        auto full = prefill(model, prompt);
        auto comp = prefill(model, prompt);
        std::vector<std::size_t> all(prompt.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        for (auto& cache : comp.caches.data) cache = evict_to(cache, all);

        const Token first = static_cast<Token>(
            argmax_index(full.last_logits.data(), full.last_logits.size()));
        const auto seq_full = decode_greedy(model, full.caches, first, 8);
        const auto seq_comp = decode_greedy(model, comp.caches, first, 8);
        REQUIRE(seq_full == seq_comp);
    }
}

TEST_CASE("oracle trace places the planted mass as specified") {
    PlantedOracleSpec spec;
    spec.n_layers = 1;
    spec.n_heads = 2;
    spec.planted = {{HeadId{0, 0}, 1.0}};
    spec.noise_seed = 5;

    const NeedleExample ex = oracle_example(64, 4, 0.5, 21);
    const AttentionTrace trace = oracle_trace(spec, ex, ex.needle_span);
    REQUIRE(trace.steps.size() == 4);

    const auto& vec = trace.steps[2].attention.at(0, 0);
    const Span span = ex.needle_span;
    CHECK(vec[span.begin + 2] == Approx(0.8).margin(1e-12));
    for (std::size_t off : {std::size_t{0}, std::size_t{1}, std::size_t{3}}) {
        CHECK(vec[span.begin + off] == Approx(0.2 / 3.0).margin(1e-12));
    }
    double off_span = 0.0;
    for (std::size_t j = 0; j < vec.size(); ++j) {
        if (!span.contains(j)) off_span += vec[j];
    }
    CHECK(off_span == Approx(0.0).margin(1e-12));
}

TEST_CASE("unplanted heads stay within the uniform-noise envelope") {
    PlantedOracleSpec spec;
    spec.n_layers = 1;
    spec.n_heads = 4;
    spec.noise_seed = 9;

    const NeedleExample ex = oracle_example(128, 4, 0.5, 22);
    const AttentionTrace trace = oracle_trace(spec, ex, ex.needle_span);
    for (const auto& rec : trace.steps) {
        for (const auto& vec : rec.attention.data) {
            const double bound = 2.0 / static_cast<double>(vec.size());
            double sum = 0.0;
            for (std::size_t j = 0; j < vec.size(); ++j) {
                sum += vec[j];
                if (!ex.needle_span.contains(j)) {
                    REQUIRE(vec[j] < bound);
                }
            }
            REQUIRE(sum == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("oracle traces are deterministic in the noise seed") {
    PlantedOracleSpec spec;
    spec.n_layers = 2;
    spec.n_heads = 2;
    spec.planted = {{HeadId{0, 1}, 0.7}};
    spec.noise_seed = 1234;

    const NeedleExample ex = oracle_example(96, 3, 0.25, 23);
    const AttentionTrace a = oracle_trace(spec, ex, ex.needle_span);
    const AttentionTrace b = oracle_trace(spec, ex, ex.needle_span);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
        REQUIRE(a.steps[t].emitted == b.steps[t].emitted);
        for (std::size_t i = 0; i < a.steps[t].attention.size(); ++i) {
            REQUIRE(a.steps[t].attention.data[i] == b.steps[t].attention.data[i]);
        }
    }
}

TEST_CASE("retrieval score on oracle traces is non-decreasing in plant weight") {
    const NeedleExample ex = oracle_example(128, 4, 0.5, 24);
    std::vector<Token> full_input = ex.context;
    full_input.insert(full_input.end(), ex.question.begin(), ex.question.end());

    double prev = -1.0;
    for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        PlantedOracleSpec spec;
        spec.n_layers = 1;
        spec.n_heads = 2;
        spec.planted = {{HeadId{0, 0}, w}};
        spec.noise_seed = 31;
        const AttentionTrace trace = oracle_trace(spec, ex, ex.needle_span);
        const HeadGrid<double> s =
            score_retrieval(trace, ex.needle_span, ex.target, full_input);
        REQUIRE(s.at(0, 0) >= prev);
        prev = s.at(0, 0);
    }
    CHECK(prev == 1.0);
}

TEST_CASE("oracle window attention matches the planted profile") {
    PlantedOracleSpec spec;
    spec.n_layers = 1;
    spec.n_heads = 2;
    spec.planted = {{HeadId{0, 0}, 0.9}};
    spec.noise_seed = 3;

    const NeedleExample ex = oracle_example(64, 4, 0.5, 25);
    std::vector<Token> full_input = ex.context;
    full_input.insert(full_input.end(), ex.question.begin(), ex.question.end());
    const auto attn = oracle_window_attention(spec, full_input, {ex.needle_span}, 8);

    const Matrix& planted = attn.at(0, 0);
    REQUIRE(planted.rows == 8);
    REQUIRE(planted.cols == full_input.size());
    const double on = 0.9 / 4.0;
    for (std::size_t j = ex.needle_span.begin; j < ex.needle_span.end; ++j) {
        CHECK(planted.at(0, j) == Approx(on).margin(1e-12));
    }

    const Matrix& noisy = attn.at(0, 1);
    for (std::size_t r = 0; r < noisy.rows; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < noisy.cols; ++j) sum += noisy.at(r, j);
        REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
}
