#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsb/gateway.hpp"
#include "tsb/prompts.hpp"
#include "tsb/timeline.hpp"
#include "tsb/verifier.hpp"

namespace tsb {

enum class Approach { single_step, hierarchy_critique };

const char* approach_name(Approach a);
std::optional<Approach> parse_approach(const std::string& s);

struct SegmentLineage {
    int segment_index = 0;
    int iterations = 0;  // summarizer calls spent on this segment
    std::string final_text;
};

struct Summary {
    std::string text;
    int word_count = 0;
    Approach approach = Approach::single_step;
    std::string query;
    int max_words = 0;
    std::vector<SegmentLineage> lineage;  // empty iff single_step
    std::vector<std::string> cache_keys;  // every prompt that produced this summary
};

struct RefinementStep {
    std::string summary_version;
    std::vector<Judgment> judgments;
    ConsistencyStatus query_status = ConsistencyStatus::consistent;
    bool regenerated = false;  // whether this version was replaced
};

struct RefinementTrace {
    std::vector<RefinementStep> steps;
};

struct SummarizeConfig {
    int max_words = 200;
    int max_iterations = 3;  // total summary versions per segment, >= 1
    // When true, segment verification judges QA pairs against the full
    // past instead of only the segment's own activities.
    bool verify_full_history = false;
    FilterConfig filter;

    void validate() const;
};

Summary summarize_single_step(std::span<const Activity> past, const std::string& query,
                              int max_words, const PromptLibrary& prompts, Gateway& gw);

std::string summarize_segment(const TimeSegment& seg, const std::string& query, int max_words,
                              const PromptLibrary& prompts, Gateway& gw,
                              std::vector<std::string>* cache_keys = nullptr);

// Iterative self-critique loop over one segment summary. Each
// iteration verifies the current version; inconsistencies trigger a
// regeneration that folds the reference answers back in, until the
// verifier is satisfied or max_iterations versions exist.
// By default the verifier is grounded in the segment's own activities;
// pass verify_activities to judge against a wider history instead.
std::pair<std::string, RefinementTrace> refine_segment(
    const TimeSegment& seg, std::string draft, const std::string& query, int max_words,
    const Verifier& verifier, const PromptLibrary& prompts, Gateway& gw, int max_iterations,
    std::vector<std::string>* cache_keys = nullptr,
    std::span<const Activity> verify_activities = {});

Summary combine_segments(std::span<const std::pair<std::string, std::string>> refined,
                         const std::string& query, int max_words, const PromptLibrary& prompts,
                         Gateway& gw);

Summary summarize_hierarchy_critique(std::span<const Activity> past, const std::string& query,
                                     const SummarizeConfig& cfg, const Verifier& verifier,
                                     const PromptLibrary& prompts, Gateway& gw);

}  // namespace tsb
