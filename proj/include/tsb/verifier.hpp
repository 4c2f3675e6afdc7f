#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsb/gateway.hpp"
#include "tsb/prompts.hpp"
#include "tsb/timeline.hpp"

namespace tsb {

enum class EntitySource { llm_extracted, lexicon_matched };

struct Entity {
    std::string surface;
    EntitySource source = EntitySource::llm_extracted;
};

struct QAPair {
    int index = 0;  // 1-based, as in the wire format
    std::string question;
    std::string answer;  // equals its entity's surface
};

enum class ConsistencyStatus { consistent, inconsistent, unresolved };

struct Judgment {
    int index = 0;
    ConsistencyStatus status = ConsistencyStatus::unresolved;
    std::string reference_answer;  // "none" when consistent, required when inconsistent
};

// Wire format of the QG/QA prompts:
//   [Question#1: "...", Answer#1: "..."]
//   [Status#1: "...", ReferenceAnswer#1: "..."]
// Feedback pairs fed back into regeneration additionally carry a
// ReferenceAnswer field.
std::string format_qa_pairs(std::span<const QAPair> pairs);
std::string format_judgments(std::span<const Judgment> judgments);

struct ParseTally {
    int parsed = 0;
    int malformed = 0;
};

std::vector<QAPair> parse_qa_pairs(const std::string& text, ParseTally* tally = nullptr);
std::vector<Judgment> parse_judgments(const std::string& text, ParseTally* tally = nullptr);

struct FeedbackPair {
    QAPair pair;
    std::string reference_answer;
};

std::string format_feedback_pairs(std::span<const FeedbackPair> pairs);

struct VerifierConfig {
    int k_max = 5;
    EntitySource entity_mode = EntitySource::llm_extracted;
    std::vector<std::string> lexicon;  // used in lexicon_matched mode
};

struct VerifyResult {
    ConsistencyStatus query_status = ConsistencyStatus::consistent;
    std::vector<QAPair> pairs;
    std::vector<Judgment> judgments;  // aligned to pairs by index
    bool any_inconsistent = false;
    std::vector<std::string> warnings;

    std::vector<FeedbackPair> inconsistent_feedback() const;
};

class Verifier {
public:
    Verifier(const PromptLibrary& prompts, VerifierConfig cfg = {})
        : prompts_(prompts), cfg_(std::move(cfg)) {}

    // A.4 verdict. Non-conforming output gets one retry, then counts as
    // consistent with a warning.
    ConsistencyStatus check_query_consistency(const std::string& summary, const std::string& query,
                                              Gateway& gw,
                                              std::vector<std::string>* warnings = nullptr) const;

    std::vector<Entity> extract_entities(const std::string& summary, Gateway& gw) const;

    std::vector<QAPair> generate_qa_pairs(const std::string& summary,
                                          std::span<const Entity> entities, Gateway& gw,
                                          std::vector<std::string>* warnings = nullptr) const;

    std::vector<Judgment> judge_qa_pairs(std::span<const QAPair> pairs,
                                         std::span<const Activity> activities, Gateway& gw,
                                         std::vector<std::string>* warnings = nullptr) const;

    // Full pass: query consistency, then entity-grounded QG-QA.
    // Unresolved judgments never count as inconsistent.
    VerifyResult verify(const std::string& summary, const std::string& query,
                        std::span<const Activity> activities, Gateway& gw) const;

    const VerifierConfig& config() const { return cfg_; }

private:
    const PromptLibrary& prompts_;
    VerifierConfig cfg_;
};

}  // namespace tsb
