#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsb/gateway.hpp"
#include "tsb/metrics.hpp"
#include "tsb/prompts.hpp"
#include "tsb/summarize.hpp"
#include "tsb/tasks.hpp"
#include "tsb/timeline.hpp"
#include "tsb/verifier.hpp"

namespace tsb {

struct DatasetSpec {
    DatasetId id = DatasetId::custom;
    std::string path;
    std::string query;  // summarization intent for this dataset
};

struct ModelBinding {
    std::string model_name;
    GenerationParams params;
};

struct BackendConfig {
    std::string kind = "http";  // "http" or "scripted"
    std::string base_url;
    std::string api_key_env = "TSB_API_KEY";
    std::string script_path;  // scripted: JSON list of matcher entries
    bool strict = true;
};

struct RunConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<Approach> approaches = {Approach::single_step, Approach::hierarchy_critique};
    std::map<Role, ModelBinding> models;
    BackendConfig backend;
    FilterConfig filter;
    EvalConfig eval;
    VerifierConfig verifier;
    int max_words = 200;
    int word_limit = 0;  // 0 means max_words
    int max_iterations = 3;
    bool verify_full_history = false;
    int max_parallel = 4;
    std::string cache_root;  // empty: in-memory cache only
    std::string output_dir = "out";
    std::string prompt_dir;

    int effective_word_limit() const { return word_limit > 0 ? word_limit : max_words; }
    void validate() const;
    nlohmann::json to_json() const;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json(const nlohmann::json& j);
};

// Builds a gateway from config (http or scripted backend, disk or
// memory cache, role bindings).
std::shared_ptr<ScriptedBackend> make_scripted_backend(const BackendConfig& cfg);
std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg,
                                      std::shared_ptr<Backend> backend_override = nullptr);

struct CommandResult {
    int tallied_failures = 0;  // exit code 2 when > 0 and nothing fatal
    nlohmann::json details;
};

struct SummaryRecord {
    std::string summary_id;  // <dataset>/<user_id>/<approach>
    std::string user_id;
    DatasetId dataset_id = DatasetId::custom;
    Approach approach = Approach::single_step;
    Summary summary;
};

struct OutcomeRecord {
    std::string summary_id;
    int run_index = 0;
    TaskOutcome outcome;
};

struct HumanRating {
    std::string summary_id;
    int rating = 0;  // 1 = good
    std::string rater_id;
};

std::string canonical_path(const RunConfig& cfg, DatasetId ds);
std::string summaries_path(const RunConfig& cfg, DatasetId ds, Approach a);
std::string outcomes_path(const RunConfig& cfg, DatasetId ds, Approach a);

std::vector<SummaryRecord> read_summaries(const std::string& path);
std::vector<OutcomeRecord> read_outcomes(const std::string& path);
std::vector<HumanRating> read_ratings(const std::string& path);

CommandResult cmd_ingest(const RunConfig& cfg);
CommandResult cmd_summarize(const RunConfig& cfg, Gateway& gw, const PromptLibrary& prompts);
CommandResult cmd_evaluate(const RunConfig& cfg, Gateway& gw, const PromptLibrary& prompts);
CommandResult cmd_correlate(const RunConfig& cfg, const std::string& ratings_path);
CommandResult cmd_report(const RunConfig& cfg);

struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Aggregated per dataset x approach; the substance of the report.
struct MetricReport {
    DatasetId dataset_id = DatasetId::custom;
    Approach approach = Approach::single_step;
    MeanSd qm;   // over runs
    double ifm = 0.0;
    MeanSd idm;  // over runs, raw units (multiply by 1000 for x0.1%)
    int users = 0;
    int runs = 0;
    int parse_failures = 0;
    int transport_failures = 0;

    nlohmann::json to_json() const;
};

MetricReport aggregate_outcomes(const std::vector<SummaryRecord>& summaries,
                                const std::vector<OutcomeRecord>& outcomes, int m, int word_limit);

}  // namespace tsb
