// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for head-level KV cache compression experiments:
// importance estimation, budget allocation, cache compression and the
// needle/reasoning evaluation grids. All outputs are UTF-8 with LF endings.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "headkv/io.hpp"

namespace fs = std::filesystem;
using namespace headkv;

namespace {

struct CliState {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::string policy;
    std::int64_t budget = 0;
    double beta = 0.0;
    std::int64_t alpha = -1;
    std::string estimator;

    CLI::App* app = nullptr;

    ExperimentConfig load() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) {
            cfg = load_config_file(config_path);
        } else {
            cfg = config_from_json(json::object());
        }
        if (app->count("--seed") > 0) cfg.corpus_seed = seed;
        if (app->count("--policy") > 0) cfg.allocation.policy = policy_from_name(policy);
        if (app->count("--budget") > 0) cfg.allocation.b = budget;
        if (app->count("--beta") > 0) cfg.allocation.beta = beta;
        if (app->count("--alpha") > 0) {
            cfg.allocation.alpha = alpha;
            cfg.pooling.alpha = static_cast<std::size_t>(alpha);
        }
        if (app->count("--estimator") > 0) cfg.estimator = estimator_from_name(estimator);
        try {
            cfg.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        return cfg;
    }
};

ImportanceScores estimate_scores(const ExperimentConfig& cfg) {
    return run_estimation(cfg);
}

void write_scores(const CliState& cli, const ImportanceScores& scores) {
    write_text_file(fs::path(cli.out_dir) / "scores.json", scores_to_json(scores).dump(2) + "\n");
    write_text_file(fs::path(cli.out_dir) / "scores_heatmap.csv", scores_heatmap_csv(scores));
}

void write_plan(const CliState& cli, const BudgetPlan& plan) {
    write_text_file(fs::path(cli.out_dir) / "plan.json", plan_to_json(plan).dump(2) + "\n");
    write_text_file(fs::path(cli.out_dir) / "plan_heatmap.csv", plan_heatmap_csv(plan));
}

/// The method-independent part of a single end-to-end run: the first example
/// of the grid's first cell.
detail::EvalExample first_eval_example(const ExperimentConfig& cfg) {
    if (!cfg.use_oracle) {
        throw ConfigError("cache compression runs require the planted-oracle model");
    }
    const std::uint64_t seed = detail::example_seed(
        cfg, detail::CorpusKind::eval_needle, cfg.grid.lengths.front(), 0, 0);
    return detail::build_needle_eval(cfg, cfg.grid.lengths.front(), cfg.grid.depths.front(),
                                     seed);
}

BudgetPlan plan_for_config(const ExperimentConfig& cfg, const CliState& cli,
                           bool write_score_files) {
    switch (cfg.allocation.policy) {
        case Policy::headkv: {
            const ImportanceScores scores = estimate_scores(cfg);
            if (write_score_files) write_scores(cli, scores);
            return allocate_headkv(scores, cfg.allocation);
        }
        case Policy::uniform:
            return allocate_uniform(cfg.allocation, cfg.shape_layers(), cfg.shape_heads());
        case Policy::pyramid:
            return allocate_pyramid(cfg.allocation, cfg.shape_layers(), cfg.shape_heads());
        case Policy::ada: {
            const detail::EvalExample ev = first_eval_example(cfg);
            return allocate_ada(cfg.allocation, ev.pooled, cfg.shape_layers(),
                                cfg.shape_heads());
        }
    }
    throw ConfigError("unknown allocation policy");
}

int cmd_estimate(const CliState& cli) {
    const ExperimentConfig cfg = cli.load();
    write_scores(cli, estimate_scores(cfg));
    std::printf("estimate: wrote scores.json and scores_heatmap.csv to %s\n",
                cli.out_dir.c_str());
    return 0;
}

int cmd_allocate(const CliState& cli) {
    const ExperimentConfig cfg = cli.load();
    const BudgetPlan plan = plan_for_config(cfg, cli, true);
    write_plan(cli, plan);
    std::printf("allocate: %s plan, total %lld entries (+%lld window per head)\n",
                policy_name(cfg.allocation.policy).c_str(),
                static_cast<long long>(plan.total), static_cast<long long>(plan.alpha));
    return 0;
}

int cmd_compress(const CliState& cli, bool dump_retained) {
    const ExperimentConfig cfg = cli.load();
    const detail::EvalExample ev = first_eval_example(cfg);
    BudgetPlan plan = plan_for_config(cfg, cli, false);
    plan = clamp_to_sequence(plan, ev.n);
    const CompressResult res = compress(ev.full_caches, ev.window_attention, plan, cfg.pooling);

    write_text_file(fs::path(cli.out_dir) / "memory.csv", memory_csv(res.report));
    write_text_file(fs::path(cli.out_dir) / "report.json",
                    report_to_json(res.report).dump(2) + "\n");
    if (dump_retained) {
        write_plan(cli, plan);
        write_text_file(fs::path(cli.out_dir) / "retained.json",
                        retained_to_json(res.retained).dump() + "\n");
        const std::uint64_t seed = detail::example_seed(
            cfg, detail::CorpusKind::eval_needle, cfg.grid.lengths.front(), 0, 0);
        const NeedleExample ex = detail::build_retrieval_example(
            cfg, cfg.grid.lengths.front(), cfg.grid.depths.front(), seed);
        write_text_file(fs::path(cli.out_dir) / "example.jsonl", corpus_jsonl({ex}));
    }
    std::printf("%s: %zu of %zu entries retained (ratio %s)\n",
                dump_retained ? "compress" : "report", res.report.total_entries,
                res.report.full_entries, format_double(res.report.compression_ratio).c_str());
    return 0;
}

int cmd_eval(const CliState& cli, bool reasoning) {
    const ExperimentConfig cfg = cli.load();
    ImportanceScores scores;
    if (cfg.allocation.policy == Policy::headkv) {
        scores = estimate_scores(cfg);
    }
    const ResultTable table =
        reasoning ? run_reasoning_suite(cfg, scores) : run_needle_grid(cfg, scores);
    write_text_file(fs::path(cli.out_dir) / "results.csv", results_csv(table));
    std::printf("%s: %zu rows, mean accuracy %s\n", reasoning ? "eval-reason" : "eval-needle",
                table.rows.size(), format_double(table.mean_accuracy()).c_str());
    return 0;
}

int cmd_compare(const CliState& cli) {
    const ExperimentConfig cfg = cli.load();
    const CompareResult res = compare_methods(cfg);
    write_text_file(fs::path(cli.out_dir) / "results.csv", results_csv(res.table));

    json reports = json::array();
    for (const auto& [label, report] : res.reports) {
        reports.push_back(json{{"method", label}, {"report", report_to_json(report)}});
    }
    write_text_file(fs::path(cli.out_dir) / "memory_reports.json", reports.dump(2) + "\n");

    const std::string wanted = method_label(cfg.allocation.policy, cfg.estimator);
    const CacheReport* chosen = res.reports.empty() ? nullptr : &res.reports.front().second;
    for (const auto& [label, report] : res.reports) {
        if (label.rfind(wanted, 0) == 0) {
            chosen = &report;
            break;
        }
    }
    if (chosen != nullptr) {
        write_text_file(fs::path(cli.out_dir) / "memory.csv", memory_csv(*chosen));
    }
    std::printf("compare: %zu rows across %zu method variants\n", res.table.rows.size(),
                res.reports.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"head-level KV cache compression experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    CliState cli;
    cli.app = &app;
    app.add_option("--config", cli.config_path, "JSON experiment config");
    app.add_option("--out", cli.out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", cli.seed, "corpus seed override");
    app.add_option("--policy", cli.policy, "allocation policy: headkv|uniform|pyramid|ada");
    app.add_option("--budget", cli.budget, "base per-head budget b");
    app.add_option("--beta", cli.beta, "budget-pool control (> 1)");
    app.add_option("--alpha", cli.alpha, "protected local-window size");
    app.add_option("--estimator", cli.estimator, "importance estimator: R|ER|R2");

    CLI::App* estimate = app.add_subcommand("estimate", "estimate per-head importance scores");
    CLI::App* allocate = app.add_subcommand("allocate", "turn scores into a budget plan");
    CLI::App* compress_cmd =
        app.add_subcommand("compress", "compress one example and dump retained indices");
    CLI::App* eval_needle = app.add_subcommand("eval-needle", "run the needle grid");
    CLI::App* eval_reason = app.add_subcommand("eval-reason", "run the reasoning suite");
    CLI::App* compare = app.add_subcommand("compare", "compare all methods on paired corpora");
    CLI::App* report = app.add_subcommand("report", "memory accounting for one run");

    try {
        app.parse(argc, argv);
        if (estimate->parsed()) return cmd_estimate(cli);
        if (allocate->parsed()) return cmd_allocate(cli);
        if (compress_cmd->parsed()) return cmd_compress(cli, true);
        if (eval_needle->parsed()) return cmd_eval(cli, false);
        if (eval_reason->parsed()) return cmd_eval(cli, true);
        if (compare->parsed()) return cmd_compare(cli);
        if (report->parsed()) return cmd_compress(cli, false);
        std::cerr << "no command given\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
