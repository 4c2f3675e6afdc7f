#include "tsb/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "tsb/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsb {

// ------------------------------------------------------------------- config

void RunConfig::validate() const {
    filter.validate();
    eval.validate();
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (max_words < 1) throw ConfigError("max_words must be >= 1");
    if (max_parallel < 1) throw ConfigError("max_parallel must be >= 1");
    if (datasets.empty()) throw ConfigError("no datasets configured");
    if (approaches.empty()) throw ConfigError("no approaches configured");
    for (const auto& d : datasets) {
        if (d.query.empty()) {
            throw ConfigError(std::string("dataset ") + dataset_name(d.id) + " has no query");
        }
    }
}

json RunConfig::to_json() const {
    json j;
    for (const auto& d : datasets) {
        j["datasets"].push_back({{"id", dataset_name(d.id)}, {"path", d.path}, {"query", d.query}});
    }
    for (auto a : approaches) j["approaches"].push_back(approach_name(a));
    for (const auto& [role, m] : models) {
        j["models"][role_name(role)] = {{"model", m.model_name},
                                        {"temperature", m.params.temperature},
                                        {"max_output_tokens", m.params.max_output_tokens}};
    }
    j["backend"] = {{"kind", backend.kind},
                    {"base_url", backend.base_url},
                    {"api_key_env", backend.api_key_env},
                    {"script", backend.script_path},
                    {"strict", backend.strict}};
    j["filter"] = {{"n_low", filter.n_low},
                   {"n_up", filter.n_up},
                   {"holdout", filter.holdout},
                   {"segment_target", filter.segment_target},
                   {"min_segment_activities", filter.min_segment_activities}};
    j["eval"] = {{"n_r", eval.n_r},
                 {"m", eval.m},
                 {"runs", eval.runs},
                 {"master_seed", eval.master_seed}};
    j["verifier"] = {{"k_max", verifier.k_max},
                     {"entity_mode", verifier.entity_mode == EntitySource::lexicon_matched
                                         ? "lexicon"
                                         : "llm"}};
    j["max_words"] = max_words;
    j["word_limit"] = effective_word_limit();
    j["max_iterations"] = max_iterations;
    j["verify_full_history"] = verify_full_history;
    j["max_parallel"] = max_parallel;
    j["cache_root"] = cache_root;
    j["output_dir"] = output_dir;
    j["prompt_dir"] = prompt_dir;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.datasets.clear();
    for (const auto& d : j.value("datasets", json::array())) {
        DatasetSpec spec;
        auto id = parse_dataset_id(d.value("id", ""));
        if (!id) throw ConfigError("unknown dataset id: " + d.value("id", ""));
        spec.id = *id;
        spec.path = d.value("path", "");
        spec.query = d.value("query", "");
        cfg.datasets.push_back(std::move(spec));
    }
    if (j.contains("approaches")) {
        cfg.approaches.clear();
        for (const auto& a : j["approaches"]) {
            auto parsed = parse_approach(a.get<std::string>());
            if (!parsed) throw ConfigError("unknown approach: " + a.get<std::string>());
            cfg.approaches.push_back(*parsed);
        }
    }
    const json models_json = j.value("models", json::object());
    for (const auto& [name, m] : models_json.items()) {
        Role role;
        if (name == "summarizer") role = Role::summarizer;
        else if (name == "verifier") role = Role::verifier;
        else if (name == "predictor") role = Role::predictor;
        else throw ConfigError("unknown model role: " + name);
        ModelBinding b;
        b.model_name = m.value("model", "");
        // Evaluation roles default to temperature 0; the summarizer may
        // stay diverse.
        b.params.temperature = m.value("temperature", role == Role::summarizer ? 0.7 : 0.0);
        b.params.max_output_tokens = m.value("max_output_tokens", 1024);
        cfg.models[role] = std::move(b);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        cfg.backend.kind = b.value("kind", "http");
        cfg.backend.base_url = b.value("base_url", "");
        cfg.backend.api_key_env = b.value("api_key_env", "TSB_API_KEY");
        cfg.backend.script_path = b.value("script", "");
        cfg.backend.strict = b.value("strict", true);
    }
    if (j.contains("filter")) {
        const auto& f = j["filter"];
        cfg.filter.n_low = f.value("n_low", cfg.filter.n_low);
        cfg.filter.n_up = f.value("n_up", cfg.filter.n_up);
        cfg.filter.holdout = f.value("holdout", cfg.filter.holdout);
        cfg.filter.segment_target = f.value("segment_target", cfg.filter.segment_target);
        cfg.filter.min_segment_activities =
            f.value("min_segment_activities", cfg.filter.min_segment_activities);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        cfg.eval.n_r = e.value("n_r", cfg.eval.n_r);
        cfg.eval.m = e.value("m", cfg.eval.m);
        cfg.eval.runs = e.value("runs", cfg.eval.runs);
        cfg.eval.master_seed = e.value("master_seed", cfg.eval.master_seed);
    }
    if (j.contains("verifier")) {
        const auto& v = j["verifier"];
        cfg.verifier.k_max = v.value("k_max", cfg.verifier.k_max);
        cfg.verifier.entity_mode = v.value("entity_mode", "llm") == "lexicon"
                                       ? EntitySource::lexicon_matched
                                       : EntitySource::llm_extracted;
    }
    cfg.max_words = j.value("max_words", cfg.max_words);
    cfg.word_limit = j.value("word_limit", 0);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.verify_full_history = j.value("verify_full_history", cfg.verify_full_history);
    cfg.max_parallel = j.value("max_parallel", cfg.max_parallel);
    cfg.cache_root = j.value("cache_root", "");
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.prompt_dir = j.value("prompt_dir", "");
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

// ------------------------------------------------------------------ gateway

std::shared_ptr<ScriptedBackend> make_scripted_backend(const BackendConfig& cfg) {
    auto backend = std::make_shared<ScriptedBackend>(cfg.strict);
    if (!cfg.script_path.empty()) {
        std::ifstream in(cfg.script_path);
        if (!in) throw ConfigError("cannot read backend script: " + cfg.script_path);
        json script;
        in >> script;
        for (const auto& entry : script) {
            std::string match = entry.value("match", "");
            std::string response = entry.value("response", "");
            int max_uses = entry.value("max_uses", 0);
            if (entry.value("exact", false)) {
                backend->add_exact(match, response, max_uses);
            } else {
                backend->add_response(match, response, max_uses);
            }
        }
    }
    return backend;
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg, std::shared_ptr<Backend> backend_override) {
    std::shared_ptr<ResponseCache> cache;
    if (!cfg.cache_root.empty()) {
        cache = std::make_shared<DiskCache>(cfg.cache_root);
    }
    auto gw = std::make_unique<Gateway>(cache, cfg.max_parallel);

    std::shared_ptr<Backend> backend = backend_override;
    if (!backend) {
        if (cfg.backend.kind == "scripted") {
            backend = make_scripted_backend(cfg.backend);
        } else if (cfg.backend.kind == "http") {
            backend = std::make_shared<HttpBackend>(cfg.backend.base_url, cfg.backend.api_key_env);
        } else {
            throw ConfigError("unknown backend kind: " + cfg.backend.kind);
        }
    }
    for (Role role : {Role::summarizer, Role::verifier, Role::predictor}) {
        auto it = cfg.models.find(role);
        ModelBinding binding = it != cfg.models.end() ? it->second : ModelBinding{};
        if (binding.model_name.empty()) binding.model_name = "default";
        if (it == cfg.models.end() && role == Role::summarizer) binding.params.temperature = 0.7;
        gw->bind(role, backend, binding.model_name, binding.params);
    }
    return gw;
}

// -------------------------------------------------------------- persistence

std::string canonical_path(const RunConfig& cfg, DatasetId ds) {
    return (fs::path(cfg.output_dir) / dataset_name(ds) / "canonical.jsonl").string();
}

std::string summaries_path(const RunConfig& cfg, DatasetId ds, Approach a) {
    return (fs::path(cfg.output_dir) / dataset_name(ds) /
            (std::string("summaries_") + approach_name(a) + ".jsonl"))
        .string();
}

std::string outcomes_path(const RunConfig& cfg, DatasetId ds, Approach a) {
    return (fs::path(cfg.output_dir) / dataset_name(ds) /
            (std::string("outcomes_") + approach_name(a) + ".jsonl"))
        .string();
}

static std::string report_path(const RunConfig& cfg, DatasetId ds, Approach a) {
    return (fs::path(cfg.output_dir) / dataset_name(ds) /
            (std::string("report_") + approach_name(a) + ".json"))
        .string();
}

static json summary_to_json(const SummaryRecord& rec) {
    json j;
    j["summary_id"] = rec.summary_id;
    j["user_id"] = rec.user_id;
    j["dataset_id"] = dataset_name(rec.dataset_id);
    j["approach"] = approach_name(rec.approach);
    j["query"] = rec.summary.query;
    j["max_words"] = rec.summary.max_words;
    j["text"] = rec.summary.text;
    j["word_count"] = rec.summary.word_count;
    for (const auto& seg : rec.summary.lineage) {
        j["lineage"].push_back({{"segment_index", seg.segment_index},
                                {"iterations", seg.iterations},
                                {"final_text", seg.final_text}});
    }
    j["cache_keys"] = rec.summary.cache_keys;
    return j;
}

std::vector<SummaryRecord> read_summaries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArtifactError("missing summaries file: " + path);
    std::vector<SummaryRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;  // tolerate a torn trailing line
        SummaryRecord rec;
        rec.summary_id = j.at("summary_id");
        rec.user_id = j.at("user_id");
        rec.dataset_id = parse_dataset_id(j.value("dataset_id", "custom")).value_or(DatasetId::custom);
        rec.approach = parse_approach(j.value("approach", "single_step")).value_or(Approach::single_step);
        rec.summary.query = j.value("query", "");
        rec.summary.max_words = j.value("max_words", 0);
        rec.summary.text = j.value("text", "");
        rec.summary.word_count = j.value("word_count", 0);
        rec.summary.approach = rec.approach;
        for (const auto& seg : j.value("lineage", json::array())) {
            rec.summary.lineage.push_back({seg.value("segment_index", 0),
                                           seg.value("iterations", 0),
                                           seg.value("final_text", "")});
        }
        rec.summary.cache_keys = j.value("cache_keys", std::vector<std::string>{});
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<OutcomeRecord> read_outcomes(const std::string& path) {
    std::vector<OutcomeRecord> records;
    std::ifstream in(path);
    if (!in) return records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        OutcomeRecord rec;
        rec.summary_id = j.at("summary_id");
        rec.run_index = j.at("run_index");
        rec.outcome.kind = parse_task_kind(j.at("kind")).value_or(TaskKind::t1_next_item);
        if (j.contains("chosen_index") && !j["chosen_index"].is_null()) {
            rec.outcome.chosen_index = j["chosen_index"].get<int>();
        }
        rec.outcome.correct = j.value("correct", 0);
        rec.outcome.parse_failed = j.value("parse_failed", false);
        rec.outcome.transport_failed = j.value("transport_failed", false);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<HumanRating> read_ratings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArtifactError("cannot read ratings file: " + path);
    std::vector<HumanRating> ratings;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        auto fields = [&] {
            std::vector<std::string> out;
            std::istringstream ss(t);
            std::string field;
            while (std::getline(ss, field, ',')) out.push_back(trim(field));
            return out;
        }();
        if (first) {
            first = false;
            if (!fields.empty() && to_lower(fields[0]) == "summary_id") continue;
        }
        if (fields.size() < 2) throw ArtifactError("malformed ratings line: " + t);
        std::string verdict = to_lower(fields[1]);
        if (verdict != "good" && verdict != "bad") {
            throw ArtifactError("rating must be good or bad, got: " + fields[1]);
        }
        HumanRating r;
        r.summary_id = fields[0];
        r.rating = verdict == "good" ? 1 : 0;
        if (fields.size() >= 3) r.rater_id = fields[2];
        ratings.push_back(std::move(r));
    }
    return ratings;
}

// ----------------------------------------------------------------- commands

CommandResult cmd_ingest(const RunConfig& cfg) {
    cfg.validate();
    CommandResult result;
    for (const auto& spec : cfg.datasets) {
        IngestStats stats;
        auto timelines = ingest_dataset(spec.path, spec.id, stats);
        write_canonical(canonical_path(cfg, spec.id), timelines);
        json report = {{"dataset", dataset_name(spec.id)},
                       {"users", stats.users},
                       {"activities", stats.activities},
                       {"skipped_records", stats.skipped_records}};
        atomic_write_file((fs::path(cfg.output_dir) / dataset_name(spec.id) /
                           "ingest_report.json")
                              .string(),
                          report.dump(2) + "\n");
        result.details["datasets"].push_back(report);
        result.tallied_failures += stats.skipped_records > 0 ? 0 : 0;
        std::cerr << "ingested " << dataset_name(spec.id) << ": " << stats.users << " users, "
                  << stats.activities << " activities, " << stats.skipped_records
                  << " skipped records\n";
    }
    return result;
}

namespace {

struct KeptUser {
    std::string user_id;
    SplitTimeline split;
};

std::vector<KeptUser> load_kept_users(const RunConfig& cfg, DatasetId ds, DatasetVocab* vocab) {
    auto timelines = read_canonical(canonical_path(cfg, ds));
    if (vocab) *vocab = build_vocab(timelines);
    std::vector<KeptUser> kept;
    for (const auto& t : timelines) {
        auto filtered = filter_timeline(t, cfg.filter);
        if (!filtered) continue;
        kept.push_back({t.user_id, split_timeline(*filtered, cfg.filter)});
    }
    return kept;
}

std::string make_summary_id(DatasetId ds, const std::string& user_id, Approach a) {
    return std::string(dataset_name(ds)) + "/" + user_id + "/" + approach_name(a);
}

// Ordered fan-out: run `fn(i)` for i in [0, n) on up to `parallel`
// threads, results land in input order.
template <typename Fn>
void parallel_for(int n, int parallel, Fn&& fn) {
    if (n <= 0) return;
    if (parallel <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    int threads = std::min(parallel, n);
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void append_line(const std::string& path, const std::string& line) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    // A crash can leave a torn, newline-less final line behind. Terminate it
    // first so the new record starts on its own line; readers already skip
    // the unparseable fragment.
    bool needs_newline = false;
    {
        std::ifstream in(path, std::ios::binary);
        if (in) {
            in.seekg(0, std::ios::end);
            if (in.tellg() > 0) {
                in.seekg(-1, std::ios::end);
                needs_newline = in.get() != '\n';
            }
        }
    }
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw ArtifactError("cannot append to " + path);
    if (needs_newline) out << "\n";
    out << line << "\n";
    out.flush();
}

}  // namespace

CommandResult cmd_summarize(const RunConfig& cfg, Gateway& gw, const PromptLibrary& prompts) {
    cfg.validate();
    CommandResult result;

    for (const auto& spec : cfg.datasets) {
        DatasetVocab vocab;
        auto kept = load_kept_users(cfg, spec.id, &vocab);

        VerifierConfig vcfg = cfg.verifier;
        if (vcfg.entity_mode == EntitySource::lexicon_matched && vcfg.lexicon.empty()) {
            vcfg.lexicon = vocab.categories;
            vcfg.lexicon.insert(vcfg.lexicon.end(), vocab.items.begin(), vocab.items.end());
        }
        Verifier dataset_verifier(prompts, std::move(vcfg));

        for (Approach approach : cfg.approaches) {
            const std::string path = summaries_path(cfg, spec.id, approach);
            std::set<std::string> done;
            if (fs::exists(path)) {
                for (const auto& rec : read_summaries(path)) done.insert(rec.summary_id);
            }

            std::vector<int> todo;
            for (size_t i = 0; i < kept.size(); ++i) {
                if (!done.count(make_summary_id(spec.id, kept[i].user_id, approach))) {
                    todo.push_back(static_cast<int>(i));
                }
            }

            std::vector<std::optional<SummaryRecord>> produced(todo.size());
            std::vector<std::string> failures(todo.size());
            parallel_for(static_cast<int>(todo.size()), cfg.max_parallel, [&](int idx) {
                const KeptUser& user = kept[todo[idx]];
                try {
                    SummaryRecord rec;
                    rec.user_id = user.user_id;
                    rec.dataset_id = spec.id;
                    rec.approach = approach;
                    rec.summary_id = make_summary_id(spec.id, user.user_id, approach);
                    if (approach == Approach::single_step) {
                        rec.summary = summarize_single_step(user.split.past, spec.query,
                                                            cfg.max_words, prompts, gw);
                    } else {
                        SummarizeConfig scfg;
                        scfg.max_words = cfg.max_words;
                        scfg.max_iterations = cfg.max_iterations;
                        scfg.verify_full_history = cfg.verify_full_history;
                        scfg.filter = cfg.filter;
                        rec.summary = summarize_hierarchy_critique(
                            user.split.past, spec.query, scfg, dataset_verifier, prompts, gw);
                    }
                    produced[idx] = std::move(rec);
                } catch (const TransportError& e) {
                    failures[idx] = e.what();
                }
            });

            for (size_t i = 0; i < produced.size(); ++i) {
                if (produced[i]) {
                    append_line(path, summary_to_json(*produced[i]).dump());
                } else {
                    ++result.tallied_failures;
                    std::cerr << "summarize failed for user " << kept[todo[i]].user_id << ": "
                              << failures[i] << "\n";
                }
            }
            result.details[dataset_name(spec.id)][approach_name(approach)] = {
                {"summarized", static_cast<int>(todo.size()) - result.tallied_failures},
                {"resumed", static_cast<int>(done.size())}};
        }
    }
    return result;
}

namespace {

json outcome_to_json(const OutcomeRecord& rec) {
    json j;
    j["summary_id"] = rec.summary_id;
    j["run_index"] = rec.run_index;
    j["kind"] = task_kind_name(rec.outcome.kind);
    if (rec.outcome.chosen_index) {
        j["chosen_index"] = *rec.outcome.chosen_index;
    } else {
        j["chosen_index"] = nullptr;
    }
    j["correct"] = rec.outcome.correct;
    j["parse_failed"] = rec.outcome.parse_failed;
    j["transport_failed"] = rec.outcome.transport_failed;
    return j;
}

}  // namespace

CommandResult cmd_evaluate(const RunConfig& cfg, Gateway& gw, const PromptLibrary& prompts) {
    cfg.validate();
    CommandResult result;

    for (const auto& spec : cfg.datasets) {
        DatasetVocab vocab;
        auto kept = load_kept_users(cfg, spec.id, &vocab);
        std::map<std::string, const KeptUser*> by_user;
        for (const auto& u : kept) by_user[u.user_id] = &u;

        for (Approach approach : cfg.approaches) {
            auto summaries = read_summaries(summaries_path(cfg, spec.id, approach));
            const std::string out_path = outcomes_path(cfg, spec.id, approach);

            std::set<std::string> done;  // summary_id|run|kind
            for (const auto& rec : read_outcomes(out_path)) {
                done.insert(rec.summary_id + "|" + std::to_string(rec.run_index) + "|" +
                            task_kind_name(rec.outcome.kind));
            }

            struct WorkItem {
                const SummaryRecord* summary;
                int run_index;
            };
            std::vector<WorkItem> work;
            for (int run = 0; run < cfg.eval.runs; ++run) {
                for (const auto& s : summaries) {
                    work.push_back({&s, run});
                }
            }

            std::vector<std::vector<OutcomeRecord>> results(work.size());
            std::vector<std::string> skips(work.size());
            parallel_for(static_cast<int>(work.size()), cfg.max_parallel, [&](int idx) {
                const auto& item = work[idx];
                auto user_it = by_user.find(item.summary->user_id);
                if (user_it == by_user.end()) {
                    skips[idx] = "no timeline for user " + item.summary->user_id;
                    return;
                }
                std::vector<PredictionTask> tasks;
                try {
                    tasks = build_tasks(user_it->second->split, item.summary->summary_id, vocab,
                                        cfg.eval, item.run_index, item.summary->user_id);
                } catch (const TaskBuildError& e) {
                    skips[idx] = e.what();
                    return;
                }
                // Drop tasks already persisted; reruns must not
                // double-count a (summary, run, task) triple.
                std::vector<PredictionTask> pending;
                for (auto& t : tasks) {
                    std::string key = item.summary->summary_id + "|" +
                                      std::to_string(item.run_index) + "|" + task_kind_name(t.kind);
                    if (!done.count(key)) pending.push_back(std::move(t));
                }
                auto outcomes = run_task_set(pending, item.summary->summary, prompts, gw);
                for (size_t k = 0; k < outcomes.size(); ++k) {
                    results[idx].push_back({item.summary->summary_id, item.run_index, outcomes[k]});
                }
            });

            int skipped_users = 0;
            for (size_t i = 0; i < work.size(); ++i) {
                if (!skips[i].empty()) {
                    ++skipped_users;
                    ++result.tallied_failures;
                    std::cerr << "task build skipped: " << skips[i] << "\n";
                    continue;
                }
                for (const auto& rec : results[i]) {
                    append_line(out_path, outcome_to_json(rec).dump());
                    if (rec.outcome.transport_failed) ++result.tallied_failures;
                }
            }

            auto all_outcomes = read_outcomes(out_path);
            MetricReport report =
                aggregate_outcomes(summaries, all_outcomes, cfg.eval.m, cfg.effective_word_limit());
            report.dataset_id = spec.id;
            report.approach = approach;
            json rj = report.to_json();
            rj["config"] = cfg.to_json();
            rj["seed"] = cfg.eval.master_seed;
            auto stats = gw.stats();
            rj["gateway"] = {{"hits", stats.hits},
                            {"misses", stats.misses},
                            {"tokens_in", stats.tokens_in},
                            {"tokens_out", stats.tokens_out},
                            {"estimated_calls", stats.estimated_calls}};
            rj["skipped_users"] = skipped_users;
            atomic_write_file(report_path(cfg, spec.id, approach), rj.dump(2) + "\n");
            result.details[dataset_name(spec.id)][approach_name(approach)] = rj;
        }
    }
    return result;
}

// -------------------------------------------------------------- aggregation

json MetricReport::to_json() const {
    json j;
    j["dataset_id"] = dataset_name(dataset_id);
    j["approach"] = approach_name(approach);
    j["qm"] = {{"mean", qm.mean}, {"sd", qm.sd}};
    j["ifm"] = ifm;
    j["idm"] = {{"mean", idm.mean}, {"sd", idm.sd}};
    j["idm_x0.1pct"] = {{"mean", idm.mean * 1000.0}, {"sd", idm.sd * 1000.0}};
    j["users"] = users;
    j["runs"] = runs;
    j["parse_failures"] = parse_failures;
    j["transport_failures"] = transport_failures;
    return j;
}

MetricReport aggregate_outcomes(const std::vector<SummaryRecord>& summaries,
                                const std::vector<OutcomeRecord>& outcomes, int m,
                                int word_limit) {
    MetricReport report;
    report.users = static_cast<int>(summaries.size());
    if (summaries.empty()) throw ArtifactError("no summaries to aggregate");

    int max_run = 0;
    for (const auto& rec : outcomes) max_run = std::max(max_run, rec.run_index);
    report.runs = max_run + 1;

    // (summary, run) -> outcomes by task kind
    std::map<std::pair<std::string, int>, std::map<TaskKind, int>> table;
    for (const auto& rec : outcomes) {
        table[{rec.summary_id, rec.run_index}][rec.outcome.kind] = rec.outcome.correct;
        if (rec.outcome.parse_failed) ++report.parse_failures;
        if (rec.outcome.transport_failed) ++report.transport_failures;
    }

    std::vector<double> qm_per_run, idm_per_run;
    for (int run = 0; run < report.runs; ++run) {
        std::vector<int> qualities;
        std::vector<DensityPoint> density;
        for (const auto& s : summaries) {
            auto it = table.find({s.summary_id, run});
            if (it == table.end()) continue;
            std::vector<int> four;
            for (TaskKind k : kAllTaskKinds) {
                auto oit = it->second.find(k);
                four.push_back(oit == it->second.end() ? 0 : oit->second);
            }
            qualities.push_back(quality_of(four, m));
            double acc = std::accumulate(four.begin(), four.end(), 0.0) / 4.0;
            density.push_back({acc, s.summary.word_count});
        }
        if (qualities.empty()) continue;
        qm_per_run.push_back(quality_metric(qualities));
        density.erase(std::remove_if(density.begin(), density.end(),
                                     [](const DensityPoint& p) { return p.word_count <= 0; }),
                      density.end());
        if (!density.empty()) idm_per_run.push_back(information_density_metric(density));
    }
    if (qm_per_run.empty()) throw ArtifactError("no complete runs to aggregate");
    report.qm = mean_sd(qm_per_run);
    report.idm = mean_sd(idm_per_run);

    std::vector<int> word_counts;
    for (const auto& s : summaries) word_counts.push_back(s.summary.word_count);
    report.ifm = instruction_following_metric(word_counts, word_limit);
    return report;
}

// -------------------------------------------------------------- correlation

CommandResult cmd_correlate(const RunConfig& cfg, const std::string& ratings_path) {
    cfg.validate();
    CommandResult result;
    auto ratings = read_ratings(ratings_path);
    if (ratings.empty()) throw ArtifactError("ratings file is empty: " + ratings_path);

    // Collapse multiple raters by majority; ties count as good.
    std::map<std::string, std::pair<int, int>> votes;  // id -> (good, total)
    for (const auto& r : ratings) {
        auto& v = votes[r.summary_id];
        v.first += r.rating;
        v.second += 1;
    }

    // Index every persisted summary and its evaluation artifacts.
    struct Row {
        DatasetId ds;
        int q_s = 0;
        LexicalScores lex;
        int human = 0;
    };
    std::vector<Row> rows;
    std::set<std::string> matched;

    json report;
    for (const auto& spec : cfg.datasets) {
        auto timelines = read_canonical(canonical_path(cfg, spec.id));
        std::map<std::string, const UserTimeline*> by_user;
        for (const auto& t : timelines) by_user[t.user_id] = &t;

        for (Approach approach : cfg.approaches) {
            const std::string spath = summaries_path(cfg, spec.id, approach);
            if (!fs::exists(spath)) continue;
            auto summaries = read_summaries(spath);
            auto outcomes = read_outcomes(outcomes_path(cfg, spec.id, approach));

            std::map<std::string, std::map<TaskKind, int>> run0;
            for (const auto& rec : outcomes) {
                if (rec.run_index == 0) run0[rec.summary_id][rec.outcome.kind] = rec.outcome.correct;
            }
            for (const auto& s : summaries) {
                auto vit = votes.find(s.summary_id);
                if (vit == votes.end()) continue;
                matched.insert(s.summary_id);
                auto oit = run0.find(s.summary_id);
                if (oit == run0.end()) {
                    throw ArtifactError("no run-0 outcomes for rated summary " + s.summary_id);
                }
                std::vector<int> four;
                for (TaskKind k : kAllTaskKinds) {
                    four.push_back(oit->second.count(k) ? oit->second.at(k) : 0);
                }
                Row row;
                row.ds = spec.id;
                row.q_s = quality_of(four, cfg.eval.m);
                row.human = 2 * vit->second.first >= vit->second.second ? 1 : 0;
                auto uit = by_user.find(s.user_id);
                if (uit != by_user.end()) {
                    auto filtered = filter_timeline(*uit->second, cfg.filter);
                    if (filtered) {
                        auto split = split_timeline(*filtered, cfg.filter);
                        row.lex = lexical_baselines(s.summary.text, format_activities(split.past));
                    }
                }
                rows.push_back(row);
            }
        }
    }

    std::vector<std::string> unmatched;
    for (const auto& [id, v] : votes) {
        if (!matched.count(id)) unmatched.push_back(id);
    }
    if (!unmatched.empty()) {
        std::string msg = "ratings reference unknown summaries:";
        for (const auto& id : unmatched) msg += " " + id;
        throw ArtifactError(msg);
    }

    for (const auto& spec : cfg.datasets) {
        std::vector<int> pred, human;
        std::vector<double> q_s, r2, rl, bleu, hum;
        for (const auto& row : rows) {
            if (row.ds != spec.id) continue;
            pred.push_back(row.q_s);
            human.push_back(row.human);
            q_s.push_back(row.q_s);
            r2.push_back(row.lex.rouge2);
            rl.push_back(row.lex.rougeL);
            bleu.push_back(row.lex.bleu);
            hum.push_back(row.human);
        }
        if (pred.empty()) continue;
        json entry;
        entry["maa"] = metric_annotator_agreement(pred, human);
        auto corr = [&](const std::vector<double>& x) -> json {
            try {
                return pearson(x, hum);
            } catch (const MetricError&) {
                return nullptr;  // zero variance
            }
        };
        entry["pearson"] = {{"q_s", corr(q_s)},
                            {"rouge2", corr(r2)},
                            {"rougeL", corr(rl)},
                            {"bleu", corr(bleu)}};
        entry["rated"] = static_cast<int>(pred.size());
        report[dataset_name(spec.id)] = entry;
    }

    atomic_write_file((fs::path(cfg.output_dir) / "correlation.json").string(),
                      report.dump(2) + "\n");
    result.details = report;
    std::cout << report.dump(2) << "\n";
    return result;
}

// ------------------------------------------------------------------- report

CommandResult cmd_report(const RunConfig& cfg) {
    cfg.validate();
    CommandResult result;

    std::map<std::pair<DatasetId, Approach>, MetricReport> reports;
    for (const auto& spec : cfg.datasets) {
        for (Approach approach : cfg.approaches) {
            const std::string path = report_path(cfg, spec.id, approach);
            std::ifstream in(path);
            if (!in) throw ArtifactError("missing evaluation artifact: " + path);
            json j;
            in >> j;
            MetricReport r;
            r.dataset_id = spec.id;
            r.approach = approach;
            r.qm = {j["qm"]["mean"], j["qm"]["sd"]};
            r.ifm = j["ifm"];
            r.idm = {j["idm"]["mean"], j["idm"]["sd"]};
            r.users = j.value("users", 0);
            r.runs = j.value("runs", 0);
            r.parse_failures = j.value("parse_failures", 0);
            r.transport_failures = j.value("transport_failures", 0);
            reports[{spec.id, approach}] = r;
        }
    }

    const bool both = std::count(cfg.approaches.begin(), cfg.approaches.end(),
                                 Approach::single_step) > 0 &&
                      std::count(cfg.approaches.begin(), cfg.approaches.end(),
                                 Approach::hierarchy_critique) > 0;

    std::ostringstream txt;
    std::ostringstream csv;
    csv << "dataset,approach,metric,mean,sd\n";
    json combined;
    combined["config"] = cfg.to_json();

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", v);
        return std::string(buf);
    };

    struct MetricRow {
        const char* label;
        std::function<MeanSd(const MetricReport&)> get;
        bool scaled;  // report in x0.1% units
    };
    std::vector<MetricRow> metric_rows = {
        {"Quality Metric", [](const MetricReport& r) { return r.qm; }, false},
        {"Instruction Following Metric",
         [](const MetricReport& r) { return MeanSd{r.ifm, 0.0}; }, false},
        {"Information Density Metric (x0.1%)",
         [](const MetricReport& r) { return MeanSd{r.idm.mean * 1000.0, r.idm.sd * 1000.0}; },
         true}};

    for (const auto& row : metric_rows) {
        txt << row.label << "\n";
        for (const auto& spec : cfg.datasets) {
            txt << "  " << dataset_name(spec.id) << ":";
            std::map<Approach, MeanSd> values;
            for (Approach approach : cfg.approaches) {
                const MetricReport& r = reports.at({spec.id, approach});
                MeanSd v = row.get(r);
                values[approach] = v;
                txt << "  " << approach_name(approach) << " " << fmt(v.mean);
                if (row.label[0] != 'I' || row.scaled) txt << " +/- " << fmt(v.sd);
                csv << dataset_name(spec.id) << "," << approach_name(approach) << "," << row.label
                    << "," << v.mean << "," << v.sd << "\n";
            }
            if (both) {
                double ss = values[Approach::single_step].mean;
                double hc = values[Approach::hierarchy_critique].mean;
                if (ss != 0.0) {
                    txt << "  increment " << fmt((hc - ss) / ss * 100.0) << "%";
                }
            }
            txt << "\n";
        }
        txt << "\n";
    }

    for (const auto& [key, r] : reports) {
        combined["reports"].push_back(r.to_json());
    }
    combined["seed"] = cfg.eval.master_seed;

    atomic_write_file((fs::path(cfg.output_dir) / "report.txt").string(), txt.str());
    atomic_write_file((fs::path(cfg.output_dir) / "metrics.csv").string(), csv.str());
    atomic_write_file((fs::path(cfg.output_dir) / "report.json").string(),
                      combined.dump(2) + "\n");
    std::cout << txt.str();
    result.details = combined;
    return result;
}

}  // namespace tsb
