// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "headkv/harness.hpp"

namespace headkv {

/// Shortest round-trip decimal form, locale-independent ('.' separator).
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for writing: " + path.string());
    out << content;
    require(out.good(), "write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open for reading: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

template <typename T, typename Fmt>
std::string grid_csv(const HeadGrid<T>& grid, Fmt fmt) {
    std::string out;
    for (std::size_t l = 0; l < grid.layers; ++l) {
        for (std::size_t h = 0; h < grid.heads; ++h) {
            if (h > 0) out += ',';
            out += fmt(grid.at(l, h));
        }
        out += '\n';
    }
    return out;
}

/// L rows x H columns of normalized scores.
inline std::string scores_heatmap_csv(const ImportanceScores& scores) {
    return grid_csv(scores.normalized, [](double v) { return format_double(v); });
}

/// L rows x H columns of integer budgets.
inline std::string plan_heatmap_csv(const BudgetPlan& plan) {
    return grid_csv(plan.per_head,
                    [](std::int64_t v) { return std::to_string(v); });
}

/// One row per head: headId,entries.
inline std::string memory_csv(const CacheReport& report) {
    std::string out = "headId,entries\n";
    for (std::size_t l = 0; l < report.per_head_entries.layers; ++l) {
        for (std::size_t h = 0; h < report.per_head_entries.heads; ++h) {
            out += HeadId{l, h}.str();
            out += ',';
            out += std::to_string(report.per_head_entries.at(l, h));
            out += '\n';
        }
    }
    return out;
}

inline std::string results_csv(const ResultTable& table) {
    std::string out = "method,b,length,depth,accuracy,retained_fraction\n";
    for (const ResultRow& row : table.rows) {
        out += row.method;
        out += ',';
        out += std::to_string(row.b);
        out += ',';
        out += std::to_string(row.length);
        out += ',';
        out += format_double(row.depth);
        out += ',';
        out += format_double(row.accuracy);
        out += ',';
        out += format_double(row.retained_fraction);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

using json = nlohmann::json;

template <typename T>
json grid_to_json(const HeadGrid<T>& grid) {
    json rows = json::array();
    for (std::size_t l = 0; l < grid.layers; ++l) {
        json row = json::array();
        for (std::size_t h = 0; h < grid.heads; ++h) {
            row.push_back(grid.at(l, h));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json scores_to_json(const ImportanceScores& scores) {
    return json{{"shape", {{"layers", scores.layers}, {"heads", scores.heads}}},
                {"estimator", estimator_name(scores.estimator_tag)},
                {"raw", grid_to_json(scores.raw)},
                {"normalized", grid_to_json(scores.normalized)}};
}

inline ImportanceScores scores_from_json(const json& j) {
    ImportanceScores scores;
    scores.layers = j.at("shape").at("layers").get<std::size_t>();
    scores.heads = j.at("shape").at("heads").get<std::size_t>();
    scores.estimator_tag = estimator_from_name(j.at("estimator").get<std::string>());
    scores.raw = HeadGrid<double>(scores.layers, scores.heads, 0.0);
    scores.normalized = HeadGrid<double>(scores.layers, scores.heads, 0.0);
    for (std::size_t l = 0; l < scores.layers; ++l) {
        for (std::size_t h = 0; h < scores.heads; ++h) {
            scores.raw.at(l, h) = j.at("raw").at(l).at(h).get<double>();
            scores.normalized.at(l, h) = j.at("normalized").at(l).at(h).get<double>();
        }
    }
    return scores;
}

inline json plan_to_json(const BudgetPlan& plan) {
    std::int64_t with_window = plan.total;
    with_window += plan.alpha * static_cast<std::int64_t>(plan.per_head.size());
    return json{{"alpha", plan.alpha},
                {"total", plan.total},
                {"total_with_window", with_window},
                {"per_head", grid_to_json(plan.per_head)}};
}

inline json report_to_json(const CacheReport& report) {
    return json{{"per_head_entries", grid_to_json(report.per_head_entries)},
                {"total_entries", report.total_entries},
                {"full_entries", report.full_entries},
                {"compression_ratio", report.compression_ratio}};
}

inline json retained_to_json(const HeadGrid<std::vector<std::size_t>>& retained) {
    json heads = json::array();
    for (std::size_t l = 0; l < retained.layers; ++l) {
        for (std::size_t h = 0; h < retained.heads; ++h) {
            heads.push_back(json{{"head", HeadId{l, h}.str()},
                                 {"positions", retained.at(l, h)}});
        }
    }
    return heads;
}

inline json span_to_json(const Span& span) {
    return json::array({span.begin, span.end});
}

inline json example_to_json(const NeedleExample& ex) {
    return json{{"context", ex.context},
                {"question", ex.question},
                {"needle_span", span_to_json(ex.needle_span)},
                {"reasoning_span", span_to_json(ex.reasoning_span)},
                {"wrong_answer_span", span_to_json(ex.wrong_answer_span)},
                {"correct_answer_span", span_to_json(ex.correct_answer_span)},
                {"depth", ex.depth},
                {"target", ex.target}};
}

/// One example per line (JSON lines).
inline std::string corpus_jsonl(const std::vector<NeedleExample>& examples) {
    std::string out;
    for (const NeedleExample& ex : examples) {
        out += example_to_json(ex).dump();
        out += '\n';
    }
    return out;
}

inline json model_spec_to_json(const ModelSpec& spec) {
    return json{{"kind", "toy"},
                {"n_layers", spec.n_layers},
                {"n_heads", spec.n_heads},
                {"d_model", spec.d_model},
                {"d_head", spec.d_head},
                {"vocab_size", spec.vocab_size},
                {"seed", spec.seed},
                {"max_context", spec.max_context}};
}

inline ModelSpec model_spec_from_json(const json& j) {
    ModelSpec spec;
    spec.n_layers = j.at("n_layers").get<std::size_t>();
    spec.n_heads = j.at("n_heads").get<std::size_t>();
    spec.d_model = j.at("d_model").get<std::size_t>();
    spec.d_head = j.at("d_head").get<std::size_t>();
    spec.vocab_size = j.at("vocab_size").get<std::size_t>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.max_context = j.value("max_context", std::size_t{4096});
    return spec;
}

inline json oracle_spec_to_json(const PlantedOracleSpec& spec) {
    json planted = json::array();
    for (const auto& [id, w] : spec.planted) {
        planted.push_back(json{{"layer", id.layer}, {"head", id.head}, {"w", w}});
    }
    return json{{"kind", "oracle"},
                {"n_layers", spec.n_layers},
                {"n_heads", spec.n_heads},
                {"noise_seed", spec.noise_seed},
                {"planted", std::move(planted)}};
}

inline PlantedOracleSpec oracle_spec_from_json(const json& j) {
    const std::size_t layers = j.at("n_layers").get<std::size_t>();
    const std::size_t heads = j.at("n_heads").get<std::size_t>();
    const std::uint64_t noise_seed = j.value("noise_seed", std::uint64_t{0});
    if (j.contains("planted")) {
        PlantedOracleSpec spec;
        spec.n_layers = layers;
        spec.n_heads = heads;
        spec.noise_seed = noise_seed;
        for (const auto& entry : j.at("planted")) {
            spec.planted.emplace_back(
                HeadId{entry.at("layer").get<std::size_t>(),
                       entry.at("head").get<std::size_t>()},
                entry.at("w").get<double>());
        }
        std::sort(spec.planted.begin(), spec.planted.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        spec.validate();
        return spec;
    }
    const double fraction = j.value("planted_fraction", 0.2);
    const double weight = j.value("planted_weight", 0.9);
    const std::uint64_t plant_seed = j.value("plant_seed", std::uint64_t{1});
    return make_scattered_plant(layers, heads, fraction, weight, plant_seed, noise_seed);
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = cfg.use_oracle ? oracle_spec_to_json(cfg.oracle)
                                : model_spec_to_json(cfg.model);
    j["estimator"] = estimator_name(cfg.estimator);
    j["allocation"] = json{{"b", cfg.allocation.b},
                           {"beta", cfg.allocation.beta},
                           {"alpha", cfg.allocation.alpha},
                           {"policy", policy_name(cfg.allocation.policy)}};
    j["pooling"] = json{{"alpha", cfg.pooling.alpha},
                        {"kernel", cfg.pooling.kernel},
                        {"mode", cfg.pooling.max_mode ? "max" : "mean"}};
    j["grid"] = json{{"lengths", cfg.grid.lengths}, {"depths", cfg.grid.depths}};
    j["corpus"] = json{{"vocab_size", cfg.corpus.vocab_size},
                       {"needle_len", cfg.corpus.needle_len},
                       {"r2_reason_len", cfg.corpus.r2_reason_len},
                       {"r2_wrong_len", cfg.corpus.r2_wrong_len},
                       {"r2_correct_len", cfg.corpus.r2_correct_len},
                       {"question_len", cfg.corpus.question_len},
                       {"n_facts", cfg.corpus.n_facts},
                       {"question_mentions", cfg.corpus.question_mentions}};
    j["corpus_seed"] = cfg.corpus_seed;
    j["n_examples"] = cfg.n_examples;
    j["n_eval_examples"] = cfg.n_eval_examples;
    j["success_threshold"] = cfg.success_threshold;
    if (!cfg.budget_sweep.empty()) j["budget_sweep"] = cfg.budget_sweep;
    if (!cfg.beta_sweep.empty()) j["beta_sweep"] = cfg.beta_sweep;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    try {
        if (j.contains("model")) {
            const json& m = j.at("model");
            const std::string kind = m.value("kind", "oracle");
            if (kind == "oracle") {
                cfg.use_oracle = true;
                cfg.oracle = oracle_spec_from_json(m);
            } else if (kind == "toy") {
                cfg.use_oracle = false;
                cfg.model = model_spec_from_json(m);
            } else {
                throw ConfigError("unknown model kind: " + kind);
            }
        } else {
            cfg.use_oracle = true;
            cfg.oracle = make_scattered_plant(8, 8, 0.2, 0.9, 1, 0);
        }
        if (j.contains("estimator")) {
            cfg.estimator = estimator_from_name(j.at("estimator").get<std::string>());
        }
        if (j.contains("allocation")) {
            const json& a = j.at("allocation");
            cfg.allocation.b = a.value("b", cfg.allocation.b);
            cfg.allocation.beta = a.value("beta", cfg.allocation.beta);
            cfg.allocation.alpha = a.value("alpha", cfg.allocation.alpha);
            if (a.contains("policy")) {
                cfg.allocation.policy = policy_from_name(a.at("policy").get<std::string>());
            }
        }
        if (j.contains("pooling")) {
            const json& p = j.at("pooling");
            cfg.pooling.alpha = p.value("alpha", cfg.pooling.alpha);
            cfg.pooling.kernel = p.value("kernel", cfg.pooling.kernel);
            if (p.contains("mode")) {
                const std::string mode = p.at("mode").get<std::string>();
                if (mode == "max") {
                    cfg.pooling.max_mode = true;
                } else if (mode == "mean") {
                    cfg.pooling.max_mode = false;
                } else {
                    throw ConfigError("unknown pooling mode: " + mode);
                }
            }
        }
        if (j.contains("grid")) {
            const json& g = j.at("grid");
            if (g.contains("lengths")) {
                cfg.grid.lengths = g.at("lengths").get<std::vector<std::size_t>>();
            }
            if (g.contains("depths")) {
                cfg.grid.depths = g.at("depths").get<std::vector<double>>();
            }
        }
        if (j.contains("corpus")) {
            const json& c = j.at("corpus");
            cfg.corpus.vocab_size = c.value("vocab_size", cfg.corpus.vocab_size);
            cfg.corpus.needle_len = c.value("needle_len", cfg.corpus.needle_len);
            cfg.corpus.r2_reason_len = c.value("r2_reason_len", cfg.corpus.r2_reason_len);
            cfg.corpus.r2_wrong_len = c.value("r2_wrong_len", cfg.corpus.r2_wrong_len);
            cfg.corpus.r2_correct_len = c.value("r2_correct_len", cfg.corpus.r2_correct_len);
            cfg.corpus.question_len = c.value("question_len", cfg.corpus.question_len);
            cfg.corpus.n_facts = c.value("n_facts", cfg.corpus.n_facts);
            cfg.corpus.question_mentions =
                c.value("question_mentions", cfg.corpus.question_mentions);
        }
        cfg.corpus_seed = j.value("corpus_seed", cfg.corpus_seed);
        cfg.n_examples = j.value("n_examples", cfg.n_examples);
        cfg.n_eval_examples = j.value("n_eval_examples", cfg.n_eval_examples);
        cfg.success_threshold = j.value("success_threshold", cfg.success_threshold);
        if (j.contains("budget_sweep")) {
            cfg.budget_sweep = j.at("budget_sweep").get<std::vector<std::int64_t>>();
        }
        if (j.contains("beta_sweep")) {
            cfg.beta_sweep = j.at("beta_sweep").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace headkv
