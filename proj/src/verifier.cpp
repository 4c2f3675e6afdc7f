#include "tsb/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <sstream>

#include "tsb/util.hpp"

namespace tsb {

namespace {

const std::regex kQaLine(R"re(^\[Question#(\d+): "(.*)", Answer#(\d+): "(.*)"\]$)re");
const std::regex kJudgmentLine(
    R"re(^\[Status#(\d+): "(.*)", ReferenceAnswer#(\d+): "(.*)"\]$)re");

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::optional<ConsistencyStatus> parse_verdict_word(const std::string& raw) {
    std::string word = to_lower(trim(raw));
    while (!word.empty() && !std::isalpha(static_cast<unsigned char>(word.back()))) word.pop_back();
    while (!word.empty() && !std::isalpha(static_cast<unsigned char>(word.front())))
        word.erase(word.begin());
    if (word == "consistent") return ConsistencyStatus::consistent;
    if (word == "inconsistent") return ConsistencyStatus::inconsistent;
    return std::nullopt;
}

void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

}  // namespace

std::string format_qa_pairs(std::span<const QAPair> pairs) {
    std::string out;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (i) out += '\n';
        const auto& p = pairs[i];
        out += "[Question#" + std::to_string(p.index) + ": \"" + p.question + "\", Answer#" +
               std::to_string(p.index) + ": \"" + p.answer + "\"]";
    }
    return out;
}

std::string format_judgments(std::span<const Judgment> judgments) {
    std::string out;
    for (size_t i = 0; i < judgments.size(); ++i) {
        if (i) out += '\n';
        const auto& j = judgments[i];
        const char* status = j.status == ConsistencyStatus::consistent ? "consistent"
                             : j.status == ConsistencyStatus::inconsistent ? "inconsistent"
                                                                           : "unresolved";
        std::string ref = j.status == ConsistencyStatus::consistent ? "none" : j.reference_answer;
        out += "[Status#" + std::to_string(j.index) + ": \"" + status + "\", ReferenceAnswer#" +
               std::to_string(j.index) + ": \"" + ref + "\"]";
    }
    return out;
}

std::string format_feedback_pairs(std::span<const FeedbackPair> pairs) {
    std::string out;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (i) out += '\n';
        const auto& f = pairs[i];
        const auto k = std::to_string(f.pair.index);
        out += "[Question#" + k + ": \"" + f.pair.question + "\", Answer#" + k + ": \"" +
               f.pair.answer + "\", ReferenceAnswer#" + k + ": \"" + f.reference_answer + "\"]";
    }
    return out;
}

std::vector<QAPair> parse_qa_pairs(const std::string& text, ParseTally* tally) {
    std::vector<QAPair> pairs;
    for (const auto& line : lines_of(text)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        std::smatch m;
        if (std::regex_match(t, m, kQaLine) && m[1].str() == m[3].str()) {
            pairs.push_back({std::stoi(m[1].str()), m[2].str(), m[4].str()});
            if (tally) ++tally->parsed;
        } else if (tally) {
            ++tally->malformed;
        }
    }
    return pairs;
}

std::vector<Judgment> parse_judgments(const std::string& text, ParseTally* tally) {
    std::vector<Judgment> judgments;
    for (const auto& line : lines_of(text)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        std::smatch m;
        if (std::regex_match(t, m, kJudgmentLine) && m[1].str() == m[3].str()) {
            auto status = parse_verdict_word(m[2].str());
            if (!status) {
                if (tally) ++tally->malformed;
                continue;
            }
            Judgment j;
            j.index = std::stoi(m[1].str());
            j.status = *status;
            j.reference_answer = m[4].str();
            judgments.push_back(std::move(j));
            if (tally) ++tally->parsed;
        } else if (tally) {
            ++tally->malformed;
        }
    }
    return judgments;
}

std::vector<FeedbackPair> VerifyResult::inconsistent_feedback() const {
    std::map<int, const QAPair*> by_index;
    for (const auto& p : pairs) by_index[p.index] = &p;
    std::vector<FeedbackPair> out;
    for (const auto& j : judgments) {
        if (j.status != ConsistencyStatus::inconsistent) continue;
        auto it = by_index.find(j.index);
        if (it != by_index.end()) out.push_back({*it->second, j.reference_answer});
    }
    return out;
}

ConsistencyStatus Verifier::check_query_consistency(const std::string& summary,
                                                    const std::string& query, Gateway& gw,
                                                    std::vector<std::string>* warnings) const {
    std::string prompt =
        prompts_.render(TemplateId::query_consistency, {{"summary", summary}, {"query", query}});
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = gw.complete(Role::verifier, prompt, attempt > 0);
        if (auto verdict = parse_verdict_word(resp.text)) return *verdict;
    }
    warn(warnings, "query-consistency verdict unparseable twice; treating as consistent");
    return ConsistencyStatus::consistent;
}

std::vector<Entity> Verifier::extract_entities(const std::string& summary, Gateway& gw) const {
    std::vector<Entity> entities;
    auto seen = [&](const std::string& surface) {
        return std::any_of(entities.begin(), entities.end(), [&](const Entity& e) {
            return to_lower(e.surface) == to_lower(surface);
        });
    };

    if (cfg_.entity_mode == EntitySource::lexicon_matched) {
        std::string haystack = to_lower(summary);
        // Order by first occurrence in the summary for determinism.
        std::vector<std::pair<size_t, std::string>> hits;
        for (const auto& term : cfg_.lexicon) {
            if (term.empty()) continue;
            size_t pos = haystack.find(to_lower(term));
            if (pos != std::string::npos) hits.emplace_back(pos, term);
        }
        std::sort(hits.begin(), hits.end());
        for (const auto& [pos, term] : hits) {
            if (static_cast<int>(entities.size()) >= cfg_.k_max) break;
            if (!seen(term)) entities.push_back({term, EntitySource::lexicon_matched});
        }
        return entities;
    }

    std::string prompt = prompts_.render(
        TemplateId::extract_entities,
        {{"k_max", std::to_string(cfg_.k_max)}, {"summary", summary}});
    auto resp = gw.complete(Role::verifier, prompt);
    std::istringstream in(resp.text);
    std::string line;
    while (std::getline(in, line) && static_cast<int>(entities.size()) < cfg_.k_max) {
        std::string surface = trim(line);
        if (surface.empty()) continue;
        if (!seen(surface)) entities.push_back({surface, EntitySource::llm_extracted});
    }
    return entities;
}

std::vector<QAPair> Verifier::generate_qa_pairs(const std::string& summary,
                                                std::span<const Entity> entities, Gateway& gw,
                                                std::vector<std::string>* warnings) const {
    std::string entity_list;
    for (size_t i = 0; i < entities.size(); ++i) {
        if (i) entity_list += '\n';
        entity_list += entities[i].surface;
    }
    std::string prompt = prompts_.render(TemplateId::question_generation,
                                         {{"kg_entities", entity_list}, {"summary", summary}});

    std::vector<QAPair> pairs;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ParseTally tally;
        auto resp = gw.complete(Role::verifier, prompt, attempt > 0);
        pairs = parse_qa_pairs(resp.text, &tally);
        if (tally.malformed > 0) {
            warn(warnings, std::to_string(tally.malformed) + " malformed QG line(s) ignored");
        }
        if (!pairs.empty()) break;
    }
    if (pairs.empty()) {
        warn(warnings, "question generation yielded no parseable pairs");
        return pairs;
    }

    // Only keep pairs whose answer is one of the given entities.
    std::vector<QAPair> kept;
    for (const auto& p : pairs) {
        bool matches = std::any_of(entities.begin(), entities.end(), [&](const Entity& e) {
            return to_lower(trim(e.surface)) == to_lower(trim(p.answer));
        });
        if (matches) {
            kept.push_back(p);
        } else {
            warn(warnings, "dropped QA pair #" + std::to_string(p.index) +
                               ": answer \"" + p.answer + "\" matches no entity");
        }
    }
    return kept;
}

std::vector<Judgment> Verifier::judge_qa_pairs(std::span<const QAPair> pairs,
                                               std::span<const Activity> activities, Gateway& gw,
                                               std::vector<std::string>* warnings) const {
    std::string prompt = prompts_.render(TemplateId::question_answering,
                                         {{"question_answer_pairs", format_qa_pairs(pairs)},
                                          {"user_activities", format_activities(activities)}});
    std::vector<Judgment> parsed;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ParseTally tally;
        auto resp = gw.complete(Role::verifier, prompt, attempt > 0);
        parsed = parse_judgments(resp.text, &tally);
        if (tally.malformed > 0) {
            warn(warnings, std::to_string(tally.malformed) + " malformed judgment line(s) ignored");
        }
        if (!parsed.empty()) break;
    }
    if (parsed.empty()) {
        warn(warnings, "question answering yielded no parseable judgments; all unresolved");
    }

    std::map<int, Judgment> by_index;
    for (const auto& j : parsed) by_index.emplace(j.index, j);

    std::vector<Judgment> out;
    for (const auto& p : pairs) {
        auto it = by_index.find(p.index);
        if (it != by_index.end()) {
            Judgment j = it->second;
            if (j.status == ConsistencyStatus::inconsistent &&
                (j.reference_answer.empty() || to_lower(j.reference_answer) == "none")) {
                warn(warnings, "inconsistent judgment #" + std::to_string(j.index) +
                                   " lacks a reference answer; unresolved");
                j.status = ConsistencyStatus::unresolved;
            }
            out.push_back(std::move(j));
        } else {
            out.push_back({p.index, ConsistencyStatus::unresolved, ""});
        }
    }
    return out;
}

VerifyResult Verifier::verify(const std::string& summary, const std::string& query,
                              std::span<const Activity> activities, Gateway& gw) const {
    VerifyResult result;
    result.query_status = check_query_consistency(summary, query, gw, &result.warnings);

    auto entities = extract_entities(summary, gw);
    if (!entities.empty()) {
        result.pairs = generate_qa_pairs(summary, entities, gw, &result.warnings);
        if (!result.pairs.empty()) {
            result.judgments = judge_qa_pairs(result.pairs, activities, gw, &result.warnings);
        }
    }

    bool qa_inconsistent = std::any_of(
        result.judgments.begin(), result.judgments.end(),
        [](const Judgment& j) { return j.status == ConsistencyStatus::inconsistent; });
    result.any_inconsistent =
        result.query_status == ConsistencyStatus::inconsistent || qa_inconsistent;
    return result;
}

}  // namespace tsb
