// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <algorithm>

#include "headkv/probes.hpp"

using namespace headkv;

TEST_CASE("gen_haystack is deterministic and uses only filler tokens") {
    SeededRng a(5), b(5);
    const auto hay1 = gen_haystack(a, 100, 64);
    const auto hay2 = gen_haystack(b, 100, 64);
    CHECK(hay1 == hay2);
    CHECK(hay1.size() == 100);

    const TokenRanges ranges(64);
    for (Token t : hay1) {
        REQUIRE(ranges.is_filler(t));
        REQUIRE(t >= ranges.content_hi());
    }
}

TEST_CASE("gen_haystack rejects a vocabulary too small for the sub-ranges") {
    SeededRng rng(1);
    CHECK_THROWS_AS(gen_haystack(rng, 10, 8), Error);
}

TEST_CASE("retrieval insertion lands at the depth formula position") {
    SeededRng rng(3);
    const auto hay = gen_haystack(rng, 100, 64);
    const std::vector<Token> needle = {20, 21, 22, 23};
    const std::vector<Token> question = {2, 3};

    SECTION("depth 0 starts at 0") {
        const auto ex = make_retrieval_example(hay, needle, question, 0.0);
        CHECK(ex.needle_span.begin == 0);
    }
    SECTION("depth 1 ends at the context end") {
        const auto ex = make_retrieval_example(hay, needle, question, 1.0);
        CHECK(ex.needle_span.end == ex.context.size());
    }
    SECTION("depth 0.5 with haystack 100 and needle 4 starts at 48") {
        const auto ex = make_retrieval_example(hay, needle, question, 0.5);
        CHECK(ex.needle_span.begin == 48);
        CHECK(ex.context.size() == 100);
    }
    SECTION("needle longer than the haystack is rejected") {
        const std::vector<Token> big(101, 20);
        CHECK_THROWS_AS(make_retrieval_example(hay, big, question, 0.5), Error);
    }
    SECTION("the needle is readable back from its span and is the target") {
        const auto ex = make_retrieval_example(hay, needle, question, 0.25);
        for (std::size_t i = 0; i < needle.size(); ++i) {
            REQUIRE(ex.context[ex.needle_span.begin + i] == needle[i]);
        }
        CHECK(ex.target == needle);
        CHECK(ex.correct_answer_span == ex.needle_span);
        CHECK(ex.reasoning_span.empty());
        CHECK(ex.wrong_answer_span.empty());
    }
}

TEST_CASE("r2 insertion orders the three parts and targets c2") {
    SeededRng rng(4);
    const auto hay = gen_haystack(rng, 200, 64);
    const std::vector<Token> r = {16, 17, 18};
    const std::vector<Token> c1 = {19, 20};
    const std::vector<Token> c2 = {21, 22};
    const std::vector<Token> question = {2, 3};

    const auto ex = make_r2_example(hay, r, c1, c2, question, 0.5);
    CHECK(ex.reasoning_span.end == ex.wrong_answer_span.begin);
    CHECK(ex.wrong_answer_span.end == ex.correct_answer_span.begin);
    CHECK(ex.reasoning_span.begin < ex.wrong_answer_span.begin);
    CHECK(ex.wrong_answer_span.begin < ex.correct_answer_span.begin);
    CHECK(ex.needle_span.begin == ex.reasoning_span.begin);
    CHECK(ex.needle_span.end == ex.correct_answer_span.end);
    CHECK(ex.target == c2);
    for (std::size_t i = 0; i < c2.size(); ++i) {
        REQUIRE(ex.context[ex.correct_answer_span.begin + i] == c2[i]);
    }
    for (std::size_t i = 0; i < c1.size(); ++i) {
        REQUIRE(ex.context[ex.wrong_answer_span.begin + i] == c1[i]);
    }
}

TEST_CASE("r2 depth sweep yields distinct spans on a 1000-token haystack") {
    SeededRng rng(6);
    const auto hay = gen_haystack(rng, 1000, 64);
    const std::vector<Token> r = {16, 17}, c1 = {18}, c2 = {19, 20};
    std::vector<std::size_t> starts;
    for (double depth : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        starts.push_back(make_r2_example(hay, r, c1, c2, {2}, depth).needle_span.begin);
    }
    std::vector<std::size_t> sorted = starts;
    std::sort(sorted.begin(), sorted.end());
    CHECK(starts == sorted);
    CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("insertion depth maps monotonically to the start position") {
    SeededRng rng(8);
    const auto hay = gen_haystack(rng, 333, 64);
    const std::vector<Token> needle = {16, 17, 18, 19, 20};
    std::size_t prev = 0;
    for (int i = 0; i <= 20; ++i) {
        const double depth = static_cast<double>(i) / 20.0;
        const auto ex = make_retrieval_example(hay, needle, {2}, depth);
        REQUIRE(ex.needle_span.begin >= prev);
        prev = ex.needle_span.begin;
    }
}

TEST_CASE("multi-needle task answers with the last question-entity location") {
    SeededRng rng(10);
    auto [context, task] = make_multi_needle_task(rng, 2, 64, 64, 2);
    REQUIRE(task.facts.size() == 2);
    CHECK(task.facts[0].entity == task.question_entity);
    CHECK(task.facts[1].entity == task.question_entity);
    CHECK(task.answer == task.facts[1].location);
    CHECK(task.answer_position() == task.facts[1].span.begin + 2);
}

TEST_CASE("multi-needle facts are disjoint, ordered and readable back") {
    SeededRng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        auto [context, task] = make_multi_needle_task(rng, 6, 256, 64, 2);
        std::size_t prev_end = 0;
        Token last_q_location = -1;
        std::size_t q_count = 0;
        for (const auto& fact : task.facts) {
            REQUIRE(fact.span.begin >= prev_end);
            prev_end = fact.span.end;
            REQUIRE(context[fact.span.begin] == fact.entity);
            REQUIRE(context[fact.span.begin + 1] == TokenRanges::fact_verb);
            REQUIRE(context[fact.span.begin + 2] == fact.location);
            if (fact.entity == task.question_entity) {
                last_q_location = fact.location;
                ++q_count;
            }
        }
        REQUIRE(q_count >= 2);
        REQUIRE(task.answer == last_q_location);
        REQUIRE(std::is_sorted(task.insert_depths.begin(), task.insert_depths.end()));
    }
}

TEST_CASE("multi-needle task rejects impossible shapes") {
    SeededRng rng(12);
    CHECK_THROWS_AS(make_multi_needle_task(rng, 1, 64, 64, 2), Error);
    CHECK_THROWS_AS(make_multi_needle_task(rng, 4, 4, 64, 2), Error);
}

TEST_CASE("needle tokens never appear in filler regions") {
    SeededRng rng(13);
    const auto hay = gen_haystack(rng, 400, 64);
    const std::vector<Token> needle = {16, 17, 18, 19};
    const auto ex = make_retrieval_example(hay, needle, {2}, 0.4);
    const TokenRanges ranges(64);
    for (std::size_t i = 0; i < ex.context.size(); ++i) {
        if (!ex.needle_span.contains(i)) {
            REQUIRE(ranges.is_filler(ex.context[i]));
        }
    }
}
