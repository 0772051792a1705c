// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "headkv/allocation.hpp"
#include "headkv/importance.hpp"
#include "headkv/kvstore.hpp"
#include "headkv/probes.hpp"
#include "headkv/selection.hpp"
#include "headkv/toymodel.hpp"

namespace headkv {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct GridSpec {
    std::vector<std::size_t> lengths = {128, 256, 512, 1024, 2048};
    std::vector<double> depths = {0.0, 0.25, 0.5, 0.75, 1.0};
};

/// Synthetic-corpus shape knobs shared by estimation and evaluation.
struct CorpusParams {
    std::size_t vocab_size = 64;
    std::size_t needle_len = 24;   // retrieval needle (and its answer)
    std::size_t r2_reason_len = 8;
    std::size_t r2_wrong_len = 8;
    std::size_t r2_correct_len = 8;
    std::size_t question_len = 8;
    std::size_t n_facts = 8;            // reasoning tasks
    std::size_t question_mentions = 2;  // facts mentioning the question entity
};

struct ExperimentConfig {
    bool use_oracle = true;
    PlantedOracleSpec oracle;  // active when use_oracle
    ModelSpec model;           // active otherwise
    Estimator estimator = Estimator::R2;
    AllocationConfig allocation;
    PoolingConfig pooling;
    GridSpec grid;
    CorpusParams corpus;
    std::uint64_t corpus_seed = 1;
    std::size_t n_examples = 32;       // estimation examples per grid cell
    std::size_t n_eval_examples = 8;   // evaluation examples per grid cell
    double success_threshold = 1.0;    // tau
    std::vector<std::int64_t> budget_sweep;  // empty: use allocation.b
    std::vector<double> beta_sweep;          // empty: use allocation.beta

    void validate() const {
        allocation.validate();
        pooling.validate();
        require(static_cast<std::size_t>(allocation.alpha) == pooling.alpha,
                "ExperimentConfig: allocation and pooling must share the same alpha");
        require(!grid.lengths.empty() && !grid.depths.empty(),
                "ExperimentConfig: empty length or depth grid");
        for (double d : grid.depths) {
            require(d >= 0.0 && d <= 1.0, "ExperimentConfig: depths must lie in [0, 1]");
        }
        require(n_examples >= 1 && n_eval_examples >= 1,
                "ExperimentConfig: need at least one example per cell");
        require(success_threshold > 0.0 && success_threshold <= 1.0,
                "ExperimentConfig: success_threshold must lie in (0, 1]");
        require(corpus.vocab_size >= 16, "ExperimentConfig: corpus vocabulary too small");
        require(corpus.question_len >= pooling.alpha,
                "ExperimentConfig: the question must cover the selection window");
        const std::size_t needle =
            std::max(corpus.needle_len,
                     corpus.r2_reason_len + corpus.r2_wrong_len + corpus.r2_correct_len);
        for (std::size_t len : grid.lengths) {
            require(len >= needle + corpus.question_len,
                    "ExperimentConfig: grid length too short for the inserted material");
        }
        if (use_oracle) {
            oracle.validate();
        } else {
            require(model.vocab_size >= corpus.vocab_size,
                    "ExperimentConfig: toy vocabulary smaller than the corpus vocabulary");
            const std::size_t max_len =
                *std::max_element(grid.lengths.begin(), grid.lengths.end());
            require(max_len + corpus.question_len + corpus.needle_len <= model.max_context,
                    "ExperimentConfig: grid exceeds the toy model context");
        }
    }

    std::size_t shape_layers() const { return use_oracle ? oracle.n_layers : model.n_layers; }
    std::size_t shape_heads() const { return use_oracle ? oracle.n_heads : model.n_heads; }
};

/// One result cell; reasoning rows aggregate over depths and carry depth -1.
struct ResultRow {
    std::string method;
    std::int64_t b = 0;
    std::size_t length = 0;
    double depth = 0.0;
    double accuracy = 0.0;
    double retained_fraction = 0.0;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    double mean_accuracy() const {
        if (rows.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& r : rows) sum += r.accuracy;
        return sum / static_cast<double>(rows.size());
    }
};

inline std::string method_label(Policy policy, Estimator estimator) {
    if (policy == Policy::headkv) {
        return "headkv-" + estimator_name(estimator);
    }
    return policy_name(policy);
}

// ---------------------------------------------------------------------------
// Corpus construction (seeded per cell and example, never per method)
// ---------------------------------------------------------------------------

namespace detail {

enum class CorpusKind : std::uint64_t {
    retrieval = 1,   // estimation, estimators R and ER
    r2 = 2,          // estimation, estimator R2
    eval_needle = 3,
    eval_reason = 4,
};

inline std::uint64_t example_seed(const ExperimentConfig& cfg, CorpusKind kind,
                                  std::size_t length, std::size_t depth_idx,
                                  std::size_t example_idx) {
    return mix(cfg.corpus_seed, static_cast<std::uint64_t>(kind), length, depth_idx,
               example_idx);
}

inline NeedleExample build_retrieval_example(const ExperimentConfig& cfg, std::size_t length,
                                             double depth, std::uint64_t seed) {
    SeededRng rng(seed);
    const TokenRanges ranges(cfg.corpus.vocab_size);
    const auto hay = gen_haystack(rng, length, cfg.corpus.vocab_size);
    const auto needle =
        draw_tokens(rng, cfg.corpus.needle_len, ranges.content_lo(), ranges.content_hi());
    const auto question =
        draw_tokens(rng, cfg.corpus.question_len, ranges.question_lo(), ranges.question_hi());
    return make_retrieval_example(hay, needle, question, depth);
}

inline NeedleExample build_r2_example(const ExperimentConfig& cfg, std::size_t length,
                                      double depth, std::uint64_t seed) {
    SeededRng rng(seed);
    const TokenRanges ranges(cfg.corpus.vocab_size);
    const auto hay = gen_haystack(rng, length, cfg.corpus.vocab_size);
    const auto reason =
        draw_tokens(rng, cfg.corpus.r2_reason_len, ranges.content_lo(), ranges.content_hi());
    const auto wrong =
        draw_tokens(rng, cfg.corpus.r2_wrong_len, ranges.content_lo(), ranges.content_hi());
    const auto correct =
        draw_tokens(rng, cfg.corpus.r2_correct_len, ranges.content_lo(), ranges.content_hi());
    const auto question =
        draw_tokens(rng, cfg.corpus.question_len, ranges.question_lo(), ranges.question_hi());
    return make_r2_example(hay, reason, wrong, correct, question, depth);
}

inline std::vector<Token> combined_input(const NeedleExample& ex) {
    std::vector<Token> input = ex.context;
    input.insert(input.end(), ex.question.begin(), ex.question.end());
    return input;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Importance estimation
// ---------------------------------------------------------------------------

/// Builds the probe corpus over the whole grid, traces it (planted oracle or
/// teacher-forced toy model) and aggregates the chosen estimator's scores.
inline ImportanceScores run_estimation(const ExperimentConfig& cfg) {
    cfg.validate();
    const bool use_r2_corpus = cfg.estimator == Estimator::R2;
    const detail::CorpusKind kind =
        use_r2_corpus ? detail::CorpusKind::r2 : detail::CorpusKind::retrieval;

    Model toy;
    if (!cfg.use_oracle) {
        toy = build_toy_model(cfg.model);
    }

    std::vector<HeadGrid<double>> per_example;
    per_example.reserve(cfg.grid.lengths.size() * cfg.grid.depths.size() * cfg.n_examples);
    for (std::size_t length : cfg.grid.lengths) {
        for (std::size_t d = 0; d < cfg.grid.depths.size(); ++d) {
            const double depth = cfg.grid.depths[d];
            for (std::size_t i = 0; i < cfg.n_examples; ++i) {
                const std::uint64_t seed = detail::example_seed(cfg, kind, length, d, i);
                const NeedleExample ex =
                    use_r2_corpus ? detail::build_r2_example(cfg, length, depth, seed)
                                  : detail::build_retrieval_example(cfg, length, depth, seed);
                const Span target_span =
                    use_r2_corpus ? ex.correct_answer_span : ex.needle_span;
                const std::vector<Token> input = detail::combined_input(ex);

                AttentionTrace trace;
                if (cfg.use_oracle) {
                    trace = oracle_trace(cfg.oracle, ex, target_span);
                } else {
                    auto res = prefill(toy, input, 1);
                    trace = decode_teacher_forced(toy, res.caches, ex.target);
                }

                switch (cfg.estimator) {
                    case Estimator::R:
                        per_example.push_back(
                            score_retrieval(trace, ex.needle_span, ex.target, input));
                        break;
                    case Estimator::ER:
                        per_example.push_back(
                            score_enhanced_retrieval(trace, ex.needle_span));
                        break;
                    case Estimator::R2:
                        per_example.push_back(score_r2(trace, ex.correct_answer_span));
                        break;
                }
            }
        }
    }
    return aggregate(per_example, cfg.estimator);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

/// Everything method-independent about one evaluation example: the combined
/// input, the oracle's selection-guiding attention, the pooled scores shared
/// by every policy, and a unit-width cache skeleton for entry accounting.
struct EvalExample {
    std::size_t n = 0;
    std::vector<Span> success_spans;     // spans that must be retained
    std::vector<std::size_t> emit_positions;  // per step, the copied position
    HeadGrid<Matrix> window_attention;
    HeadGrid<std::vector<double>> pooled;
    HeadGrid<HeadCache> full_caches;
};

inline EvalExample prepare_eval_example(const ExperimentConfig& cfg,
                                        const std::vector<Token>& full_input,
                                        const std::vector<Span>& attend_spans,
                                        std::vector<Span> success_spans,
                                        std::vector<std::size_t> emit_positions) {
    EvalExample ev;
    ev.n = full_input.size();
    ev.success_spans = std::move(success_spans);
    ev.emit_positions = std::move(emit_positions);
    ev.window_attention =
        oracle_window_attention(cfg.oracle, full_input, attend_spans, cfg.pooling.alpha);
    ev.pooled = HeadGrid<std::vector<double>>(cfg.oracle.n_layers, cfg.oracle.n_heads);
    for (std::size_t i = 0; i < ev.pooled.size(); ++i) {
        ev.pooled.data[i] = pooled_scores(ev.window_attention.data[i], cfg.pooling);
    }
    ev.full_caches = HeadGrid<HeadCache>(cfg.oracle.n_layers, cfg.oracle.n_heads);
    for (auto& cache : ev.full_caches.data) {
        cache = HeadCache::empty(1);
        cache.keys = Matrix(ev.n, 1);
        cache.values = Matrix(ev.n, 1);
        cache.positions.resize(ev.n);
        for (std::size_t p = 0; p < ev.n; ++p) cache.positions[p] = p;
    }
    return ev;
}

/// Success rule: (a) for every required span, the mean over planted heads of
/// its retained-token fraction reaches tau, and (b) the oracle emits the full
/// target, which at step t requires a mean plant weight of at least 0.5 and
/// the copied position to be retained by a tau-fraction of the planted heads.
struct EvalOutcome {
    bool success = false;
    double retained_fraction = 0.0;  // entry-count ratio from the cache report
};

inline EvalOutcome judge(const ExperimentConfig& cfg, const EvalExample& ev,
                         const CompressResult& res) {
    EvalOutcome out;
    out.retained_fraction = res.report.compression_ratio;

    const std::vector<HeadId> planted = cfg.oracle.planted_ids();
    if (planted.empty()) return out;
    const double n_planted = static_cast<double>(planted.size());

    // Integer membership counts per position over the planted heads, so that
    // full retention compares exactly equal to tau = 1.
    std::vector<std::uint32_t> count(ev.n, 0);
    for (const HeadId& id : planted) {
        for (std::size_t pos : res.retained.at(id)) ++count[pos];
    }

    const double tau = cfg.success_threshold;
    bool spans_ok = true;
    for (const Span& span : ev.success_spans) {
        std::uint64_t total = 0;
        for (std::size_t p = span.begin; p < span.end; ++p) total += count[p];
        const double mean =
            static_cast<double>(total) / (static_cast<double>(span.size()) * n_planted);
        spans_ok = spans_ok && mean >= tau;
    }
    bool emission_ok = cfg.oracle.mean_plant_weight() >= 0.5;
    for (std::size_t p : ev.emit_positions) {
        emission_ok = emission_ok && static_cast<double>(count[p]) / n_planted >= tau;
    }

    out.success = spans_ok && emission_ok;
    return out;
}

struct MethodSpec {
    Policy policy = Policy::uniform;
    Estimator estimator = Estimator::R2;  // meaningful for headkv only
    const ImportanceScores* scores = nullptr;

    std::string label() const { return method_label(policy, estimator); }
};

inline BudgetPlan plan_for(const MethodSpec& method, const AllocationConfig& alloc,
                           const ExperimentConfig& cfg, const EvalExample& ev) {
    BudgetPlan plan;
    switch (method.policy) {
        case Policy::headkv:
            require(method.scores != nullptr, "evaluation: headkv method without scores");
            plan = allocate_headkv(*method.scores, alloc);
            break;
        case Policy::uniform:
            plan = allocate_uniform(alloc, cfg.shape_layers(), cfg.shape_heads());
            break;
        case Policy::pyramid:
            plan = allocate_pyramid(alloc, cfg.shape_layers(), cfg.shape_heads());
            break;
        case Policy::ada:
            plan = allocate_ada(alloc, ev.pooled, cfg.shape_layers(), cfg.shape_heads());
            break;
    }
    return clamp_to_sequence(plan, ev.n);
}

inline EvalExample build_needle_eval(const ExperimentConfig& cfg, std::size_t length,
                                     double depth, std::uint64_t seed) {
    const NeedleExample ex = build_retrieval_example(cfg, length, depth, seed);
    const std::vector<Token> input = combined_input(ex);
    std::vector<std::size_t> emit_positions(ex.needle_span.size());
    for (std::size_t t = 0; t < emit_positions.size(); ++t) {
        emit_positions[t] = ex.needle_span.begin + t;
    }
    return prepare_eval_example(cfg, input, {ex.needle_span}, {ex.needle_span},
                                std::move(emit_positions));
}

inline EvalExample build_reasoning_eval(const ExperimentConfig& cfg, std::size_t length,
                                        std::uint64_t seed) {
    SeededRng rng(seed);
    auto [context, task] = make_multi_needle_task(rng, cfg.corpus.n_facts, length,
                                                  cfg.corpus.vocab_size,
                                                  cfg.corpus.question_mentions);
    const TokenRanges ranges(cfg.corpus.vocab_size);
    std::vector<Token> question = draw_tokens(rng, cfg.corpus.question_len,
                                              ranges.question_lo(), ranges.question_hi());
    question.front() = task.question_entity;

    std::vector<Token> input = std::move(context);
    input.insert(input.end(), question.begin(), question.end());

    std::vector<Span> attend;
    for (const auto& fact : task.facts) attend.push_back(fact.span);
    return prepare_eval_example(cfg, input, attend, task.question_fact_spans(),
                                {task.answer_position()});
}

}  // namespace detail

/// Needle grid: one row per (length, depth) cell; accuracy is the success
/// fraction over the cell's examples and retained_fraction the mean reported
/// entry ratio. Evaluation runs against the planted oracle.
inline ResultTable run_needle_grid(const ExperimentConfig& cfg, const ImportanceScores& scores) {
    cfg.validate();
    if (!cfg.use_oracle) {
        throw ConfigError("needle evaluation requires the planted-oracle model");
    }
    if (cfg.allocation.policy == Policy::headkv) {
        require(scores.raw.same_shape(cfg.shape_layers(), cfg.shape_heads()),
                "run_needle_grid: score shape does not match the model");
    }

    detail::MethodSpec method;
    method.policy = cfg.allocation.policy;
    method.estimator = cfg.estimator;
    method.scores = &scores;

    ResultTable table;
    for (std::size_t length : cfg.grid.lengths) {
        for (std::size_t d = 0; d < cfg.grid.depths.size(); ++d) {
            double successes = 0.0;
            double ratio = 0.0;
            for (std::size_t i = 0; i < cfg.n_eval_examples; ++i) {
                const std::uint64_t seed = detail::example_seed(
                    cfg, detail::CorpusKind::eval_needle, length, d, i);
                const detail::EvalExample ev =
                    detail::build_needle_eval(cfg, length, cfg.grid.depths[d], seed);
                const BudgetPlan plan = detail::plan_for(method, cfg.allocation, cfg, ev);
                const CompressResult res =
                    compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);
                const detail::EvalOutcome outcome = detail::judge(cfg, ev, res);
                successes += outcome.success ? 1.0 : 0.0;
                ratio += outcome.retained_fraction;
            }
            ResultRow row;
            row.method = method.label();
            row.b = cfg.allocation.b;
            row.length = length;
            row.depth = cfg.grid.depths[d];
            row.accuracy = successes / static_cast<double>(cfg.n_eval_examples);
            row.retained_fraction = ratio / static_cast<double>(cfg.n_eval_examples);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

/// Reasoning suite: multi-needle tasks, one aggregated row per length (the
/// depth column carries -1). Success additionally requires every
/// question-entity fact span to be retained at the tau threshold.
inline ResultTable run_reasoning_suite(const ExperimentConfig& cfg,
                                       const ImportanceScores& scores) {
    cfg.validate();
    if (!cfg.use_oracle) {
        throw ConfigError("reasoning evaluation requires the planted-oracle model");
    }

    detail::MethodSpec method;
    method.policy = cfg.allocation.policy;
    method.estimator = cfg.estimator;
    method.scores = &scores;

    ResultTable table;
    for (std::size_t length : cfg.grid.lengths) {
        double successes = 0.0;
        double ratio = 0.0;
        for (std::size_t i = 0; i < cfg.n_eval_examples; ++i) {
            const std::uint64_t seed =
                detail::example_seed(cfg, detail::CorpusKind::eval_reason, length, 0, i);
            const detail::EvalExample ev = detail::build_reasoning_eval(cfg, length, seed);
            const BudgetPlan plan = detail::plan_for(method, cfg.allocation, cfg, ev);
            const CompressResult res =
                compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);
            const detail::EvalOutcome outcome = detail::judge(cfg, ev, res);
            successes += outcome.success ? 1.0 : 0.0;
            ratio += outcome.retained_fraction;
        }
        ResultRow row;
        row.method = method.label();
        row.b = cfg.allocation.b;
        row.length = length;
        row.depth = -1.0;
        row.accuracy = successes / static_cast<double>(cfg.n_eval_examples);
        row.retained_fraction = ratio / static_cast<double>(cfg.n_eval_examples);
        table.rows.push_back(std::move(row));
    }
    return table;
}

struct CompareResult {
    ResultTable table;
    std::vector<std::pair<std::string, CacheReport>> reports;  // per method x budget
};

/// Runs every method (uniform, pyramid, ada, headkv-R, headkv-ER, headkv-R2)
/// over identical corpora and seeds: the needle grid plus the reasoning
/// suite, one row per method, budget and cell. When a beta sweep is given,
/// headkv methods contribute one row set per beta, labelled accordingly.
/// The memory report per method and budget is taken from the first example of
/// the longest needle cell.
inline CompareResult compare_methods(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.use_oracle) {
        throw ConfigError("method comparison requires the planted-oracle model");
    }

    ExperimentConfig est_cfg = cfg;
    est_cfg.estimator = Estimator::R;
    const ImportanceScores scores_r = run_estimation(est_cfg);
    est_cfg.estimator = Estimator::ER;
    const ImportanceScores scores_er = run_estimation(est_cfg);
    est_cfg.estimator = Estimator::R2;
    const ImportanceScores scores_r2 = run_estimation(est_cfg);

    std::vector<detail::MethodSpec> methods;
    methods.push_back({Policy::uniform, Estimator::R2, nullptr});
    methods.push_back({Policy::pyramid, Estimator::R2, nullptr});
    methods.push_back({Policy::ada, Estimator::R2, nullptr});
    methods.push_back({Policy::headkv, Estimator::R, &scores_r});
    methods.push_back({Policy::headkv, Estimator::ER, &scores_er});
    methods.push_back({Policy::headkv, Estimator::R2, &scores_r2});

    const std::vector<std::int64_t> budgets =
        cfg.budget_sweep.empty() ? std::vector<std::int64_t>{cfg.allocation.b}
                                 : cfg.budget_sweep;
    const std::vector<double> betas =
        cfg.beta_sweep.empty() ? std::vector<double>{cfg.allocation.beta} : cfg.beta_sweep;

    struct Variant {
        detail::MethodSpec method;
        AllocationConfig alloc;
        std::string label;
    };
    std::vector<Variant> variants;
    for (const auto& method : methods) {
        for (std::int64_t b : budgets) {
            const bool sweep_beta = method.policy == Policy::headkv && betas.size() > 1;
            for (double beta : betas) {
                AllocationConfig alloc = cfg.allocation;
                alloc.policy = method.policy;
                alloc.b = b;
                alloc.beta = beta;
                std::string label = method.label();
                if (sweep_beta) {
                    label += "@beta=" + std::to_string(beta);
                }
                variants.push_back({method, alloc, std::move(label)});
                if (method.policy != Policy::headkv) break;  // beta is inert
            }
        }
    }

    struct Accum {
        double successes = 0.0;
        double ratio = 0.0;
    };
    // Indexed [variant][cell]; needle cells then reasoning lengths.
    const std::size_t n_needle_cells = cfg.grid.lengths.size() * cfg.grid.depths.size();
    const std::size_t n_cells = n_needle_cells + cfg.grid.lengths.size();
    std::vector<std::vector<Accum>> acc(variants.size(), std::vector<Accum>(n_cells));

    CompareResult result;
    result.reports.reserve(variants.size());
    std::vector<bool> report_taken(variants.size(), false);
    const std::size_t longest =
        *std::max_element(cfg.grid.lengths.begin(), cfg.grid.lengths.end());

    for (std::size_t li = 0; li < cfg.grid.lengths.size(); ++li) {
        const std::size_t length = cfg.grid.lengths[li];
        for (std::size_t d = 0; d < cfg.grid.depths.size(); ++d) {
            for (std::size_t i = 0; i < cfg.n_eval_examples; ++i) {
                const std::uint64_t seed = detail::example_seed(
                    cfg, detail::CorpusKind::eval_needle, length, d, i);
                const detail::EvalExample ev =
                    detail::build_needle_eval(cfg, length, cfg.grid.depths[d], seed);
                for (std::size_t v = 0; v < variants.size(); ++v) {
                    const BudgetPlan plan =
                        detail::plan_for(variants[v].method, variants[v].alloc, cfg, ev);
                    const CompressResult res =
                        compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);
                    const detail::EvalOutcome outcome = detail::judge(cfg, ev, res);
                    Accum& a = acc[v][li * cfg.grid.depths.size() + d];
                    a.successes += outcome.success ? 1.0 : 0.0;
                    a.ratio += outcome.retained_fraction;
                    if (!report_taken[v] && length == longest && d == 0 && i == 0) {
                        report_taken[v] = true;
                        result.reports.emplace_back(
                            variants[v].label + "@b=" + std::to_string(variants[v].alloc.b),
                            res.report);
                    }
                }
            }
        }
        for (std::size_t i = 0; i < cfg.n_eval_examples; ++i) {
            const std::uint64_t seed =
                detail::example_seed(cfg, detail::CorpusKind::eval_reason, length, 0, i);
            const detail::EvalExample ev = detail::build_reasoning_eval(cfg, length, seed);
            for (std::size_t v = 0; v < variants.size(); ++v) {
                const BudgetPlan plan =
                    detail::plan_for(variants[v].method, variants[v].alloc, cfg, ev);
                const CompressResult res =
                    compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);
                const detail::EvalOutcome outcome = detail::judge(cfg, ev, res);
                Accum& a = acc[v][n_needle_cells + li];
                a.successes += outcome.success ? 1.0 : 0.0;
                a.ratio += outcome.retained_fraction;
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(cfg.n_eval_examples);
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::size_t li = 0; li < cfg.grid.lengths.size(); ++li) {
            for (std::size_t d = 0; d < cfg.grid.depths.size(); ++d) {
                const Accum& a = acc[v][li * cfg.grid.depths.size() + d];
                ResultRow row;
                row.method = variants[v].label;
                row.b = variants[v].alloc.b;
                row.length = cfg.grid.lengths[li];
                row.depth = cfg.grid.depths[d];
                row.accuracy = a.successes * inv;
                row.retained_fraction = a.ratio * inv;
                result.table.rows.push_back(std::move(row));
            }
        }
        for (std::size_t li = 0; li < cfg.grid.lengths.size(); ++li) {
            const Accum& a = acc[v][n_needle_cells + li];
            ResultRow row;
            row.method = variants[v].label;
            row.b = variants[v].alloc.b;
            row.length = cfg.grid.lengths[li];
            row.depth = -1.0;
            row.accuracy = a.successes * inv;
            row.retained_fraction = a.ratio * inv;
            result.table.rows.push_back(std::move(row));
        }
    }
    return result;
}

}  // namespace headkv
