// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "headkv/common.hpp"
#include "headkv/numkit.hpp"

namespace headkv {

/// The synthetic corpus uses integer tokens with reserved, mutually disjoint
/// vocabulary ranges. Filler never collides with inserted material, so span
/// bookkeeping is exact and no tokenizer is involved.
///
///   [0, 2)        special (0 = wrong-emission token, 1 = fact verb)
///   [2, V/4)      question tokens
///   [V/4, 3V/8)   entities (also general needle content)
///   [3V/8, V/2)   locations (also general needle content)
///   [V/2, V)      filler
struct TokenRanges {
    std::size_t vocab_size = 0;

    static constexpr Token noise_token = 0;
    static constexpr Token fact_verb = 1;

    explicit TokenRanges(std::size_t v) : vocab_size(v) {
        require(v >= 16, "TokenRanges: vocab_size must be at least 16 to reserve sub-ranges");
    }

    Token question_lo() const { return 2; }
    Token question_hi() const { return static_cast<Token>(vocab_size / 4); }
    Token content_lo() const { return static_cast<Token>(vocab_size / 4); }
    Token content_hi() const { return static_cast<Token>(vocab_size / 2); }
    Token entity_lo() const { return content_lo(); }
    Token entity_hi() const { return static_cast<Token>(3 * vocab_size / 8); }
    Token location_lo() const { return entity_hi(); }
    Token location_hi() const { return content_hi(); }
    Token filler_lo() const { return static_cast<Token>(vocab_size / 2); }
    Token filler_hi() const { return static_cast<Token>(vocab_size); }

    bool is_filler(Token t) const { return t >= filler_lo() && t < filler_hi(); }
};

inline std::vector<Token> draw_tokens(SeededRng& rng, std::size_t n, Token lo, Token hi) {
    require(hi > lo, "draw_tokens: empty token range");
    std::vector<Token> out(n);
    for (auto& t : out) {
        t = lo + static_cast<Token>(rng.next_below(static_cast<std::uint64_t>(hi - lo)));
    }
    return out;
}

/// One probe example: a haystack with inserted material, exact span
/// bookkeeping, and the answer the model is expected to produce. For
/// plain retrieval examples `reasoning_span` and `wrong_answer_span` are
/// empty and `correct_answer_span == needle_span`.
struct NeedleExample {
    std::vector<Token> context;
    std::vector<Token> question;
    Span needle_span;
    Span reasoning_span;
    Span wrong_answer_span;
    Span correct_answer_span;
    double depth = 0.0;
    std::vector<Token> target;
};

/// Deterministic filler tokens drawn from the reserved filler sub-vocabulary.
inline std::vector<Token> gen_haystack(SeededRng& rng, std::size_t length,
                                       std::size_t vocab_size) {
    require(length >= 1, "gen_haystack: length must be at least 1");
    const TokenRanges ranges(vocab_size);
    return draw_tokens(rng, length, ranges.filler_lo(), ranges.filler_hi());
}

namespace detail {

inline std::size_t insertion_start(double depth, std::size_t hay_len, std::size_t ins_len) {
    require(depth >= 0.0 && depth <= 1.0, "insertion depth must lie in [0, 1]");
    require(ins_len <= hay_len, "inserted sequence longer than the haystack");
    return static_cast<std::size_t>(
        std::llround(depth * static_cast<double>(hay_len - ins_len)));
}

inline void overwrite(std::vector<Token>& context, std::size_t start,
                      const std::vector<Token>& tokens) {
    std::copy(tokens.begin(), tokens.end(),
              context.begin() + static_cast<std::ptrdiff_t>(start));
}

}  // namespace detail

/// Needle-in-a-haystack retrieval example: the needle overwrites the filler
/// at round(depth * (len - |needle|)) and is itself the answer.
inline NeedleExample make_retrieval_example(const std::vector<Token>& haystack,
                                            const std::vector<Token>& needle,
                                            const std::vector<Token>& question,
                                            double depth) {
    require(!needle.empty(), "make_retrieval_example: needle must be non-empty");
    const std::size_t start = detail::insertion_start(depth, haystack.size(), needle.size());
    NeedleExample ex;
    ex.context = haystack;
    detail::overwrite(ex.context, start, needle);
    ex.question = question;
    ex.needle_span = {start, start + needle.size()};
    ex.correct_answer_span = ex.needle_span;
    ex.depth = depth;
    ex.target = needle;
    return ex;
}

/// Retrieval-reasoning example: the needle is (r, c1, c2) inserted
/// contiguously in that order; the target is c2, never c1.
inline NeedleExample make_r2_example(const std::vector<Token>& haystack,
                                     const std::vector<Token>& reasoning,
                                     const std::vector<Token>& wrong_answer,
                                     const std::vector<Token>& correct_answer,
                                     const std::vector<Token>& question,
                                     double depth) {
    require(!reasoning.empty() && !wrong_answer.empty() && !correct_answer.empty(),
            "make_r2_example: all three needle parts must be non-empty");
    std::vector<Token> needle;
    needle.reserve(reasoning.size() + wrong_answer.size() + correct_answer.size());
    needle.insert(needle.end(), reasoning.begin(), reasoning.end());
    needle.insert(needle.end(), wrong_answer.begin(), wrong_answer.end());
    needle.insert(needle.end(), correct_answer.begin(), correct_answer.end());

    const std::size_t start = detail::insertion_start(depth, haystack.size(), needle.size());
    NeedleExample ex;
    ex.context = haystack;
    detail::overwrite(ex.context, start, needle);
    ex.question = question;
    ex.needle_span = {start, start + needle.size()};
    ex.reasoning_span = {start, start + reasoning.size()};
    ex.wrong_answer_span = {ex.reasoning_span.end, ex.reasoning_span.end + wrong_answer.size()};
    ex.correct_answer_span = {ex.wrong_answer_span.end,
                              ex.wrong_answer_span.end + correct_answer.size()};
    ex.depth = depth;
    ex.target = correct_answer;
    return ex;
}

/// Multi-needle reasoning task: scattered (entity, verb, location) facts; the
/// answer is the location in the last fact mentioning the question entity.
struct ReasoningTask {
    struct Fact {
        Token entity = 0;
        Token location = 0;
        Span span;  // three tokens: entity, verb, location
    };
    std::vector<Fact> facts;
    Token question_entity = 0;
    Token answer = 0;
    std::vector<double> insert_depths;

    /// Spans of the facts that mention the question entity, in context order.
    std::vector<Span> question_fact_spans() const {
        std::vector<Span> spans;
        for (const auto& f : facts) {
            if (f.entity == question_entity) spans.push_back(f.span);
        }
        return spans;
    }

    /// Position of the answer token (location slot of the last question fact).
    std::size_t answer_position() const {
        std::size_t pos = 0;
        for (const auto& f : facts) {
            if (f.entity == question_entity) pos = f.span.begin + 2;
        }
        return pos;
    }
};

inline std::pair<std::vector<Token>, ReasoningTask> make_multi_needle_task(
    SeededRng& rng, std::size_t n_facts, std::size_t context_length,
    std::size_t vocab_size, std::size_t question_mentions = 2) {
    require(n_facts >= 2, "make_multi_needle_task: need at least two facts");
    require(question_mentions >= 2 && question_mentions <= n_facts,
            "make_multi_needle_task: question entity needs at least two mentions");
    const TokenRanges ranges(vocab_size);
    constexpr std::size_t fact_len = 3;
    require(context_length >= n_facts * fact_len,
            "make_multi_needle_task: context too short for all facts");

    std::vector<Token> context = gen_haystack(rng, context_length, vocab_size);

    const Token question_entity =
        ranges.entity_lo() +
        static_cast<Token>(rng.next_below(
            static_cast<std::uint64_t>(ranges.entity_hi() - ranges.entity_lo())));

    // Choose which fact slots mention the question entity (Fisher-Yates prefix).
    std::vector<std::size_t> slots(n_facts);
    for (std::size_t i = 0; i < n_facts; ++i) slots[i] = i;
    for (std::size_t i = 0; i < question_mentions; ++i) {
        const std::size_t j = i + rng.next_below(n_facts - i);
        std::swap(slots[i], slots[j]);
    }
    std::vector<bool> is_question(n_facts, false);
    for (std::size_t i = 0; i < question_mentions; ++i) is_question[slots[i]] = true;

    ReasoningTask task;
    task.question_entity = question_entity;
    task.insert_depths.resize(n_facts);
    for (auto& d : task.insert_depths) d = rng.next_double();
    std::sort(task.insert_depths.begin(), task.insert_depths.end());

    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < n_facts; ++i) {
        ReasoningTask::Fact fact;
        if (is_question[i]) {
            fact.entity = question_entity;
        } else {
            // Any entity other than the question one.
            const Token width = ranges.entity_hi() - ranges.entity_lo();
            require(width >= 2, "make_multi_needle_task: entity range too small");
            Token e = ranges.entity_lo() +
                      static_cast<Token>(rng.next_below(static_cast<std::uint64_t>(width - 1)));
            if (e >= question_entity) e += 1;
            fact.entity = e;
        }
        fact.location =
            ranges.location_lo() +
            static_cast<Token>(rng.next_below(
                static_cast<std::uint64_t>(ranges.location_hi() - ranges.location_lo())));

        std::size_t start =
            detail::insertion_start(task.insert_depths[i], context_length, fact_len);
        start = std::max(start, prev_end);
        require(start + fact_len <= context_length,
                "make_multi_needle_task: context too short for all facts");
        fact.span = {start, start + fact_len};
        context[start] = fact.entity;
        context[start + 1] = TokenRanges::fact_verb;
        context[start + 2] = fact.location;
        prev_end = fact.span.end;

        if (fact.entity == question_entity) task.answer = fact.location;
        task.facts.push_back(fact);
    }
    return {std::move(context), std::move(task)};
}

}  // namespace headkv
