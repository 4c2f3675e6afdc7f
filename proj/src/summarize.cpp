#include "tsb/summarize.hpp"

#include <stdexcept>

#include "tsb/util.hpp"

namespace tsb {

const char* approach_name(Approach a) {
    return a == Approach::single_step ? "single_step" : "hierarchy_critique";
}

std::optional<Approach> parse_approach(const std::string& s) {
    if (s == "single_step") return Approach::single_step;
    if (s == "hierarchy_critique") return Approach::hierarchy_critique;
    return std::nullopt;
}

void SummarizeConfig::validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (max_words < 1) throw ConfigError("max_words must be >= 1");
    filter.validate();
}

Summary summarize_single_step(std::span<const Activity> past, const std::string& query,
                              int max_words, const PromptLibrary& prompts, Gateway& gw) {
    if (past.empty()) throw std::invalid_argument("summarize_single_step: past is empty");
    std::string prompt = prompts.render(TemplateId::single_step,
                                        {{"query", query},
                                         {"max_words", std::to_string(max_words)},
                                         {"user_activities", format_activities(past)}});
    auto resp = gw.complete(Role::summarizer, prompt);
    Summary s;
    s.text = resp.text;
    s.word_count = word_count(s.text);
    s.approach = Approach::single_step;
    s.query = query;
    s.max_words = max_words;
    s.cache_keys.push_back(resp.cache_key);
    return s;
}

std::string summarize_segment(const TimeSegment& seg, const std::string& query, int max_words,
                              const PromptLibrary& prompts, Gateway& gw,
                              std::vector<std::string>* cache_keys) {
    if (seg.activities.empty()) throw std::invalid_argument("summarize_segment: empty segment");
    std::string prompt =
        prompts.render(TemplateId::segment,
                       {{"time_range", format_time_range(seg.start_ts, seg.end_ts)},
                        {"query", query},
                        {"max_words", std::to_string(max_words)},
                        {"user_activities", format_activities(seg.activities)}});
    auto resp = gw.complete(Role::summarizer, prompt);
    if (cache_keys) cache_keys->push_back(resp.cache_key);
    return resp.text;
}

std::pair<std::string, RefinementTrace> refine_segment(
    const TimeSegment& seg, std::string draft, const std::string& query, int max_words,
    const Verifier& verifier, const PromptLibrary& prompts, Gateway& gw, int max_iterations,
    std::vector<std::string>* cache_keys, std::span<const Activity> verify_activities) {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    std::span<const Activity> grounding =
        verify_activities.empty() ? std::span<const Activity>(seg.activities) : verify_activities;

    RefinementTrace trace;
    std::string current = std::move(draft);
    for (int iteration = 1;; ++iteration) {
        VerifyResult result = verifier.verify(current, query, grounding, gw);

        RefinementStep step;
        step.summary_version = current;
        step.judgments = result.judgments;
        step.query_status = result.query_status;
        step.regenerated = result.any_inconsistent && iteration < max_iterations;
        trace.steps.push_back(step);

        if (!step.regenerated) break;

        auto feedback = result.inconsistent_feedback();
        if (result.query_status == ConsistencyStatus::inconsistent) {
            // The feedback template only speaks QA-pair language; bridge
            // the query failure with a synthetic pair.
            QAPair p;
            p.index = static_cast<int>(feedback.size()) + 1;
            p.question = "Does the summary address the query: \"" + query + "\"?";
            p.answer = "no";
            feedback.push_back({p, "The summary must address the query."});
        }

        std::string prompt = prompts.render(
            TemplateId::segment_with_feedback,
            {{"time_range", format_time_range(seg.start_ts, seg.end_ts)},
             {"query", query},
             {"max_words", std::to_string(max_words)},
             {"previous_summary", current},
             {"previous_question_answer_pairs", format_feedback_pairs(feedback)},
             {"user_activities", format_activities(seg.activities)}});
        auto resp = gw.complete(Role::summarizer, prompt);
        if (cache_keys) cache_keys->push_back(resp.cache_key);
        current = resp.text;
    }
    return {current, trace};
}

Summary combine_segments(std::span<const std::pair<std::string, std::string>> refined,
                         const std::string& query, int max_words, const PromptLibrary& prompts,
                         Gateway& gw) {
    if (refined.empty()) throw std::invalid_argument("combine_segments: no segments");
    std::string blocks;
    for (size_t i = 0; i < refined.size(); ++i) {
        if (i) blocks += "\n\n";
        blocks += "Summary of Time Segment \"" + refined[i].first + "\":\n" + refined[i].second;
    }
    std::string prompt = prompts.render(TemplateId::combine_segments,
                                        {{"query", query},
                                         {"max_words", std::to_string(max_words)},
                                         {"segment_summaries", blocks}});
    auto resp = gw.complete(Role::summarizer, prompt);
    Summary s;
    s.text = resp.text;
    s.word_count = word_count(s.text);
    s.approach = Approach::hierarchy_critique;
    s.query = query;
    s.max_words = max_words;
    s.cache_keys.push_back(resp.cache_key);
    return s;
}

Summary summarize_hierarchy_critique(std::span<const Activity> past, const std::string& query,
                                     const SummarizeConfig& cfg, const Verifier& verifier,
                                     const PromptLibrary& prompts, Gateway& gw) {
    cfg.validate();
    if (past.empty()) throw std::invalid_argument("summarize_hierarchy_critique: past is empty");

    SplitTimeline pseudo;
    pseudo.past.assign(past.begin(), past.end());
    auto segments = segment_past(pseudo, cfg.filter);

    std::vector<std::pair<std::string, std::string>> refined;  // (time range, text)
    std::vector<SegmentLineage> lineage;
    std::vector<std::string> cache_keys;
    for (const auto& seg : segments) {
        std::string draft = summarize_segment(seg, query, cfg.max_words, prompts, gw, &cache_keys);
        auto [text, trace] =
            refine_segment(seg, draft, query, cfg.max_words, verifier, prompts, gw,
                           cfg.max_iterations, &cache_keys,
                           cfg.verify_full_history ? past : std::span<const Activity>{});
        refined.emplace_back(format_time_range(seg.start_ts, seg.end_ts), text);
        lineage.push_back({seg.index, static_cast<int>(trace.steps.size()), text});
    }

    Summary s = combine_segments(refined, query, cfg.max_words, prompts, gw);
    cache_keys.insert(cache_keys.end(), s.cache_keys.begin(), s.cache_keys.end());
    s.cache_keys = std::move(cache_keys);
    s.lineage = std::move(lineage);
    return s;
}

}  // namespace tsb
