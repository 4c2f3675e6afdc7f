// tsbench: user-timeline summarization benchmark harness.
//
// Subcommands: ingest, summarize, evaluate, correlate, report.
// Exit codes: 0 success, 1 fatal config/IO error, 2 completed with
// tallied per-user failures.

#include <CLI11.hpp>

#include <iostream>

#include "tsb/runner.hpp"

namespace {

struct CliOverrides {
    std::string dataset;
    std::string approach;
    int runs = -1;
    long long seed = -1;
    std::string model_summarizer;
    std::string model_verifier;
    std::string model_predictor;
};

void apply_overrides(tsb::RunConfig& cfg, const CliOverrides& ov) {
    if (!ov.dataset.empty()) {
        auto id = tsb::parse_dataset_id(ov.dataset);
        if (!id) throw tsb::ConfigError("unknown dataset: " + ov.dataset);
        std::erase_if(cfg.datasets, [&](const tsb::DatasetSpec& d) { return d.id != *id; });
        if (cfg.datasets.empty()) {
            throw tsb::ConfigError("dataset not in config: " + ov.dataset);
        }
    }
    if (!ov.approach.empty()) {
        auto a = tsb::parse_approach(ov.approach);
        if (!a) throw tsb::ConfigError("unknown approach: " + ov.approach);
        cfg.approaches = {*a};
    }
    if (ov.runs > 0) cfg.eval.runs = ov.runs;
    if (ov.seed >= 0) cfg.eval.master_seed = static_cast<std::uint64_t>(ov.seed);
    auto set_model = [&](tsb::Role role, const std::string& name) {
        if (name.empty()) return;
        cfg.models[role].model_name = name;
    };
    set_model(tsb::Role::summarizer, ov.model_summarizer);
    set_model(tsb::Role::verifier, ov.model_verifier);
    set_model(tsb::Role::predictor, ov.model_predictor);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-free benchmark for user-timeline summarization"};
    app.require_subcommand(1);

    std::string config_path;
    std::string ratings_path;
    CliOverrides ov;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Path to the run config JSON")->required();
        sub->add_option("--dataset", ov.dataset, "Restrict to one dataset id");
        sub->add_option("--approach", ov.approach, "Restrict to one approach");
        sub->add_option("--runs", ov.runs, "Override prediction run count");
        sub->add_option("--seed", ov.seed, "Override master seed");
        sub->add_option("--model-summarizer", ov.model_summarizer, "Override summarizer model");
        sub->add_option("--model-verifier", ov.model_verifier, "Override verifier model");
        sub->add_option("--model-predictor", ov.model_predictor, "Override predictor model");
    };

    auto* ingest = app.add_subcommand("ingest", "Parse raw datasets into canonical timelines");
    auto* summarize = app.add_subcommand("summarize", "Generate summaries for all kept users");
    auto* evaluate = app.add_subcommand("evaluate", "Run prediction tasks and compute metrics");
    auto* correlate =
        app.add_subcommand("correlate", "Compare metrics against imported human ratings");
    auto* report = app.add_subcommand("report", "Emit the combined text and CSV report");
    for (auto* sub : {ingest, summarize, evaluate, correlate, report}) add_common(sub);
    correlate->add_option("--ratings", ratings_path, "CSV: summary_id,rating[,rater_id]")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        tsb::RunConfig cfg = tsb::RunConfig::from_file(config_path);
        apply_overrides(cfg, ov);

        tsb::CommandResult result;
        if (ingest->parsed()) {
            result = tsb::cmd_ingest(cfg);
        } else if (summarize->parsed() || evaluate->parsed()) {
            tsb::PromptLibrary prompts(cfg.prompt_dir);
            auto gw = tsb::make_gateway(cfg);
            result = summarize->parsed() ? tsb::cmd_summarize(cfg, *gw, prompts)
                                         : tsb::cmd_evaluate(cfg, *gw, prompts);
        } else if (correlate->parsed()) {
            result = tsb::cmd_correlate(cfg, ratings_path);
        } else {
            result = tsb::cmd_report(cfg);
        }
        if (result.tallied_failures > 0) {
            std::cerr << "completed with " << result.tallied_failures << " tallied failure(s)\n";
            return 2;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 1;
    }
}
