// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, wall-clock bounded.
// Usage: acceptance [path-to-cli] [scratch-dir]
// The CLI path and scratch directory are only needed by the reproducibility
// criterion, which shells out to `<cli> compare --seed 7`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "headkv/harness.hpp"
#include "headkv/io.hpp"

using namespace headkv;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

AttentionTrace::StepRecord step_record(Token emitted,
                                       std::vector<std::vector<double>> heads) {
    AttentionTrace::StepRecord rec;
    rec.emitted = emitted;
    rec.attention = HeadGrid<std::vector<double>>(1, heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        rec.attention.at(0, h) = std::move(heads[h]);
    }
    return rec;
}

std::vector<double> peaked(std::size_t n, std::size_t peak) {
    std::vector<double> v(n, 0.1 / static_cast<double>(n - 1));
    v[peak] = 0.9;
    return v;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    const auto ranks = [n](const std::vector<double>& v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> rank(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && v[order[j]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
            for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
            i = j;
        }
        return rank;
    };
    const std::vector<double> rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

ExperimentConfig oracle_config_8x8() {
    ExperimentConfig cfg;
    cfg.use_oracle = true;
    cfg.oracle = make_scattered_plant(8, 8, 0.2, 0.9, 1, 0);
    return cfg;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

void eq1_fixture() {
    const std::vector<Token> input = {5, 6, 7, 8, 9, 10};
    const Span span{2, 4};
    const std::vector<Token> target = {7, 8, 7, 8};

    AttentionTrace trace;
    trace.layers = 1;
    trace.heads = 1;
    trace.steps.push_back(step_record(7, {peaked(7, 2)}));    // qualifies
    trace.steps.push_back(step_record(8, {peaked(8, 3)}));    // qualifies
    trace.steps.push_back(step_record(7, {peaked(9, 0)}));    // argmax off span
    trace.steps.push_back(step_record(9, {peaked(10, 2)}));   // token mismatch
    const double two_of_four = score_retrieval(trace, span, target, input).at(0, 0);
    expect(std::abs(two_of_four - 0.5) <= 1e-12,
           "2 qualifying steps of 4 scored " + fmt(two_of_four) + ", want 0.5");

    AttentionTrace perfect;
    perfect.layers = 1;
    perfect.heads = 1;
    perfect.steps.push_back(step_record(7, {peaked(7, 2)}));
    perfect.steps.push_back(step_record(8, {peaked(8, 3)}));
    perfect.steps.push_back(step_record(7, {peaked(9, 2)}));
    perfect.steps.push_back(step_record(8, {peaked(10, 3)}));
    const double full = score_retrieval(perfect, span, target, input).at(0, 0);
    expect(std::abs(full - 1.0) <= 1e-12, "perfect trace scored " + fmt(full) + ", want 1");
}

void eq2_fixture() {
    const Span span{1, 3};
    AttentionTrace trace;
    trace.layers = 1;
    trace.heads = 1;
    trace.steps.push_back(step_record(0, {{0.3, 0.6, 0.05, 0.05}}));
    trace.steps.push_back(step_record(0, {{0.06, 0.1, 0.8, 0.04}}));
    const double worked = score_r2(trace, span).at(0, 0);
    expect(std::abs(worked - 0.75) <= 1e-12,
           "worked example scored " + fmt(worked) + ", want 0.75");

    AttentionTrace all_in;
    all_in.layers = 1;
    all_in.heads = 1;
    all_in.steps.push_back(step_record(0, {{0.0, 0.7, 0.3, 0.0}}));
    all_in.steps.push_back(step_record(0, {{0.0, 0.2, 0.8, 0.0}}));
    const double full = score_r2(all_in, span).at(0, 0);
    expect(std::abs(full - 1.0) <= 1e-12,
           "all-mass-on-span trace scored " + fmt(full) + ", want 1");
}

void eq4_conservation() {
    SeededRng rng(20260808);
    const std::vector<double> betas = {1.005, 1.01, 1.1, 1.2, 1.5, 2.0, 5.0, 10.0};
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t layers = 1 + rng.next_below(16);
        const std::size_t heads = 1 + rng.next_below(16);
        AllocationConfig cfg;
        cfg.b = 1 + static_cast<std::int64_t>(rng.next_below(1024));
        cfg.beta = betas[rng.next_below(betas.size())];

        std::vector<HeadGrid<double>> raw;
        raw.emplace_back(layers, heads, 0.0);
        for (auto& v : raw.front().data) v = rng.next_double();
        const ImportanceScores scores = aggregate(raw, Estimator::R2);

        const BudgetPlan plan = allocate_headkv(scores, cfg);
        std::int64_t total = 0;
        for (auto v : plan.per_head.data) total += v;
        const std::int64_t want = cfg.b * static_cast<std::int64_t>(layers * heads);
        expect(total == want, "case " + std::to_string(rep) + ": sum " +
                                  std::to_string(total) + " != b*L*H " + std::to_string(want));
    }
}

void allocation_monotonicity_scaling() {
    SeededRng rng(31337);
    const std::vector<double> betas = {1.005, 1.01, 1.1, 1.2, 1.5, 2.0, 5.0, 10.0};
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t layers = 1 + rng.next_below(8);
        const std::size_t heads = 1 + rng.next_below(8);
        AllocationConfig cfg;
        cfg.b = 1 + static_cast<std::int64_t>(rng.next_below(512));
        cfg.beta = betas[rng.next_below(betas.size())];

        std::vector<double> raw(layers * heads);
        for (auto& v : raw) v = rng.next_double();
        std::vector<HeadGrid<double>> grids;
        grids.emplace_back(layers, heads, 0.0);
        grids.front().data = raw;
        const ImportanceScores scores = aggregate(grids, Estimator::R2);
        const BudgetPlan plan = allocate_headkv(scores, cfg);

        for (std::size_t a = 0; a < raw.size(); ++a) {
            for (std::size_t b = 0; b < raw.size(); ++b) {
                if (scores.normalized.data[a] > scores.normalized.data[b]) {
                    expect(plan.per_head.data[a] >= plan.per_head.data[b],
                           "score order violated by budgets in case " + std::to_string(rep));
                }
            }
        }

        for (double c : {0.1, 3.0, 1e6}) {
            std::vector<HeadGrid<double>> scaled;
            scaled.emplace_back(layers, heads, 0.0);
            for (std::size_t i = 0; i < raw.size(); ++i) scaled.front().data[i] = raw[i] * c;
            const BudgetPlan other =
                allocate_headkv(aggregate(scaled, Estimator::R2), cfg);
            expect(other.per_head.data == plan.per_head.data,
                   "plan changed under raw-score scaling by " + fmt(c));
        }
    }
}

void selection_oracle_equivalence() {
    SeededRng rng(777);
    for (std::size_t alpha : {1, 2, 4, 8}) {
        for (std::size_t n = alpha + 1; n <= 32; ++n) {
            for (int rep = 0; rep < 100; ++rep) {
                std::vector<double> scores(n - alpha);
                for (auto& s : scores) s = rng.next_double();
                if (rep % 4 == 0 && scores.size() >= 3) scores[2] = scores[0];

                for (std::size_t budget = 0; budget <= n - alpha; ++budget) {
                    const auto got = select_retained(scores, budget, alpha, n);

                    std::vector<std::pair<double, std::size_t>> pairs;
                    for (std::size_t i = 0; i < scores.size(); ++i) {
                        pairs.emplace_back(-scores[i], i);
                    }
                    std::sort(pairs.begin(), pairs.end());
                    std::set<std::size_t> want;
                    for (std::size_t i = 0; i < budget; ++i) want.insert(pairs[i].second);
                    for (std::size_t j = n - alpha; j < n; ++j) want.insert(j);

                    expect(got.size() == want.size() &&
                               std::equal(got.begin(), got.end(), want.begin()),
                           "selection mismatch at n=" + std::to_string(n) +
                               " alpha=" + std::to_string(alpha) +
                               " budget=" + std::to_string(budget));
                }
            }
        }
    }
}

void lossless_equivalence() {
    ModelSpec spec;
    spec.n_layers = 4;
    spec.n_heads = 4;
    spec.d_model = 64;
    spec.d_head = 16;
    spec.vocab_size = 64;
    spec.seed = 123;
    spec.max_context = 512;
    const Model model = build_toy_model(spec);

    PoolingConfig pool;
    pool.alpha = 8;

    SeededRng rng(888);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 16 + rng.next_below(256 - 16 + 1);
        std::vector<Token> prompt(n);
        for (auto& t : prompt) t = static_cast<Token>(rng.next_below(64));

        auto full = prefill(model, prompt);
        const auto keep = prefill(model, prompt);

        BudgetPlan plan;
        plan.per_head = HeadGrid<std::int64_t>(4, 4, static_cast<std::int64_t>(n - pool.alpha));
        plan.alpha = static_cast<std::int64_t>(pool.alpha);
        plan.weights = HeadGrid<double>(4, 4, 1.0 / 16.0);

        const CompressResult res = compress(keep.caches, keep.attention, plan, pool);
        auto compressed = res.caches;
        expect(res.report.compression_ratio == 1.0,
               "full-budget compression must retain everything");

        const Token first = static_cast<Token>(
            argmax_index(full.last_logits.data(), full.last_logits.size()));
        const auto seq_full = decode_greedy(model, full.caches, first, 32);
        const auto seq_comp = decode_greedy(model, compressed, first, 32);
        expect(seq_full == seq_comp,
               "greedy decode diverged on prompt " + std::to_string(rep) + " (n=" +
                   std::to_string(n) + ")");
    }
}

void planted_head_recovery() {
    ExperimentConfig cfg = oracle_config_8x8();
    cfg.estimator = Estimator::R2;
    cfg.grid.lengths = {512};
    cfg.grid.depths = {0.0, 0.25, 0.5, 0.75, 1.0};
    cfg.n_examples = 32;
    cfg.corpus_seed = 7;
    const ImportanceScores scores = run_estimation(cfg);

    const std::vector<HeadId> planted = cfg.oracle.planted_ids();
    const auto top = top_k_indices(scores.raw.data, planted.size());
    std::set<HeadId> top_set;
    for (std::size_t flat : top) top_set.insert(scores.raw.id_of(flat));
    for (const HeadId& id : planted) {
        expect(top_set.count(id) == 1,
               "planted head " + id.str() + " missing from the top-20% set");
    }

    // Mixed-weight variant: every head planted at a distinct weight.
    ExperimentConfig mixed = cfg;
    mixed.oracle.planted.clear();
    std::vector<double> weights(64);
    for (std::size_t i = 0; i < 64; ++i) {
        weights[i] = static_cast<double>(i + 1) / 64.0;
    }
    SeededRng shuffle(99);
    for (std::size_t i = 63; i > 0; --i) {
        const std::size_t j = shuffle.next_below(i + 1);
        std::swap(weights[i], weights[j]);
    }
    for (std::size_t i = 0; i < 64; ++i) {
        mixed.oracle.planted.emplace_back(HeadId{i / 8, i % 8}, weights[i]);
    }
    const ImportanceScores mixed_scores = run_estimation(mixed);
    const double rho = spearman(weights, mixed_scores.raw.data);
    expect(rho >= 0.9, "Spearman between plant weights and scores is " + fmt(rho));
}

void sparsity_direction() {
    ExperimentConfig cfg = oracle_config_8x8();
    cfg.grid.lengths = {512};
    cfg.grid.depths = {0.0, 0.25, 0.5, 0.75, 1.0};
    cfg.n_examples = 32;
    cfg.corpus_seed = 7;

    cfg.estimator = Estimator::R;
    const ImportanceScores r = run_estimation(cfg);
    cfg.estimator = Estimator::R2;
    const ImportanceScores r2 = run_estimation(cfg);

    const DistributionStats st = distribution_stats(r, r2, cfg.oracle.planted.size());
    expect(st.zero_fraction_a >= st.zero_fraction_b,
           "zero fraction: R " + fmt(st.zero_fraction_a) + " < R2 " +
               fmt(st.zero_fraction_b));
    expect(st.zero_fraction_a >= 0.5,
           "R zero fraction " + fmt(st.zero_fraction_a) + " below 0.5");
}

void end_to_end_ordering() {
    ExperimentConfig cfg = oracle_config_8x8();
    cfg.corpus_seed = 7;
    cfg.allocation.b = 64;
    cfg.n_examples = 8;
    cfg.n_eval_examples = 4;

    const CompareResult res = compare_methods(cfg);
    std::map<std::string, std::pair<double, std::size_t>> needle, reason;
    for (const auto& row : res.table.rows) {
        auto& agg = row.depth < 0 ? reason[row.method] : needle[row.method];
        agg.first += row.accuracy;
        agg.second += 1;
    }
    const auto mean = [](const std::pair<double, std::size_t>& p) {
        return p.first / static_cast<double>(p.second);
    };
    for (auto* suite : {&needle, &reason}) {
        const std::string tag = suite == &needle ? "needle" : "reasoning";
        const double r2 = mean((*suite)["headkv-R2"]);
        const double r = mean((*suite)["headkv-R"]);
        const double uni = mean((*suite)["uniform"]);
        const double pyr = mean((*suite)["pyramid"]);
        const double ada = mean((*suite)["ada"]);
        expect(r2 >= r, tag + ": headkv-R2 " + fmt(r2) + " < headkv-R " + fmt(r));
        expect(r >= uni, tag + ": headkv-R " + fmt(r) + " < uniform " + fmt(uni));
        expect(r2 >= pyr, tag + ": headkv-R2 " + fmt(r2) + " < pyramid " + fmt(pyr));
        expect(r2 >= ada, tag + ": headkv-R2 " + fmt(r2) + " < ada " + fmt(ada));
    }
}

void memory_accounting() {
    ExperimentConfig cfg = oracle_config_8x8();
    cfg.grid.lengths = {2048};
    cfg.grid.depths = {0.5};
    cfg.allocation.b = 64;
    cfg.estimator = Estimator::R2;
    cfg.n_examples = 4;
    cfg.validate();

    const std::uint64_t seed =
        detail::example_seed(cfg, detail::CorpusKind::eval_needle, 2048, 0, 0);
    const detail::EvalExample ev = detail::build_needle_eval(cfg, 2048, 0.5, seed);
    const ImportanceScores scores = run_estimation(cfg);

    std::vector<detail::MethodSpec> methods = {
        {Policy::uniform, Estimator::R2, nullptr},
        {Policy::pyramid, Estimator::R2, nullptr},
        {Policy::ada, Estimator::R2, nullptr},
        {Policy::headkv, Estimator::R2, &scores},
    };
    const std::int64_t want_total =
        (cfg.allocation.b + cfg.allocation.alpha) * 64;  // (b + alpha) * L * H
    for (const auto& method : methods) {
        const BudgetPlan plan = detail::plan_for(method, cfg.allocation, cfg, ev);
        const CompressResult res =
            compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);
        expect(static_cast<std::int64_t>(res.report.total_entries) == want_total,
               method.label() + ": total " + std::to_string(res.report.total_entries) +
                   " != (b+alpha)*L*H " + std::to_string(want_total));
        for (std::size_t i = 0; i < res.report.per_head_entries.size(); ++i) {
            const std::int64_t want_head = plan.per_head.data[i] + plan.alpha;
            expect(static_cast<std::int64_t>(res.report.per_head_entries.data[i]) ==
                       want_head,
                   method.label() + ": head entry count mismatch");
        }
        const double want_ratio =
            static_cast<double>(cfg.allocation.b + cfg.allocation.alpha) /
            static_cast<double>(ev.n);
        expect(std::abs(res.report.compression_ratio - want_ratio) <= 1e-12,
               method.label() + ": ratio " + fmt(res.report.compression_ratio) +
                   " != (b+alpha)/n " + fmt(want_ratio));
    }
}

std::string g_cli_path;
std::string g_scratch_dir;

void reproducibility() {
    expect(!g_cli_path.empty(), "no CLI path given on the command line");
    const fs::path scratch = g_scratch_dir.empty() ? fs::path("acceptance_scratch")
                                                   : fs::path(g_scratch_dir);
    fs::create_directories(scratch);

    const fs::path out1 = scratch / "rep1";
    const fs::path out2 = scratch / "rep2";
    for (const fs::path& out : {out1, out2}) {
        std::ostringstream cmd;
        cmd << '"' << g_cli_path << '"' << " compare --seed 7 --out " << '"' << out.string()
            << '"';
        const int rc = std::system(cmd.str().c_str());
        expect(rc == 0, "CLI run failed with status " + std::to_string(rc));
    }
    const std::string a = read_text_file(out1 / "results.csv");
    const std::string b = read_text_file(out2 / "results.csv");
    expect(!a.empty(), "results.csv is empty");
    expect(a == b, "results.csv differs between the two runs");
}

struct Criterion {
    std::string name;
    double limit_seconds;
    std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli_path = argv[1];
    if (argc > 2) g_scratch_dir = argv[2];

    const std::vector<Criterion> criteria = {
        {"eq1-fixture", 1.0, eq1_fixture},
        {"eq2-fixture", 1.0, eq2_fixture},
        {"eq4-conservation", 5.0, eq4_conservation},
        {"allocation-monotonicity-scaling", 5.0, allocation_monotonicity_scaling},
        {"selection-oracle-equivalence", 10.0, selection_oracle_equivalence},
        {"lossless-equivalence", 30.0, lossless_equivalence},
        {"planted-head-recovery", 30.0, planted_head_recovery},
        {"sparsity-direction", 30.0, sparsity_direction},
        {"end-to-end-ordering", 120.0, end_to_end_ordering},
        {"memory-accounting", 5.0, memory_accounting},
        {"reproducibility", 120.0, reproducibility},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty() && elapsed > criterion.limit_seconds) {
            error = "exceeded the " + format_double(criterion.limit_seconds) +
                    " s runtime budget";
        }
        if (error.empty()) {
            std::printf("PASS %-34s (%.2f s)\n", criterion.name.c_str(), elapsed);
        } else {
            std::printf("FAIL %-34s (%.2f s): %s\n", criterion.name.c_str(), elapsed,
                        error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    } else {
        std::printf("%d acceptance criteria FAILED\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
