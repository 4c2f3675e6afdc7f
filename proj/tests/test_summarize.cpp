#include <doctest.h>

#include "tsb/summarize.hpp"

using namespace tsb;

namespace {

const char* kDraftMatcher = "and provide insights that address the query";
const char* kFeedbackMatcher = "revise the below \"Previous Summary\"";
const char* kCombineMatcher = "Combine all the time segment summaries";

PromptLibrary library() { return PromptLibrary(TSB_PROMPT_DIR_FOR_TESTS); }

std::vector<Activity> make_past(int n) {
    std::vector<Activity> past;
    for (int i = 0; i < n; ++i) {
        Activity a;
        a.timestamp = 1000000000 + i * 3600;
        a.item_id = "i" + std::to_string(i);
        a.item_name = "Item " + std::to_string(i);
        a.categories = {"Cat" + std::to_string(i % 3)};
        past.push_back(std::move(a));
    }
    return past;
}

TimeSegment make_segment(int n) {
    TimeSegment seg;
    seg.index = 0;
    seg.activities = make_past(n);
    seg.start_ts = seg.activities.front().timestamp;
    seg.end_ts = seg.activities.back().timestamp;
    return seg;
}

std::unique_ptr<Gateway> make_gateway(std::shared_ptr<ScriptedBackend> backend) {
    auto gw = std::make_unique<Gateway>(nullptr, 4, 3, 1);
    gw->bind(Role::summarizer, backend, "scripted-summarizer");
    gw->bind(Role::verifier, backend, "scripted-verifier");
    return gw;
}

// Scripts the verifier so that any summary listed in `inconsistent`
// fails QG-QA with the rock-music/pop-music feedback pair, and every
// other summary passes clean.
void script_verifier(ScriptedBackend& b, std::vector<std::string> inconsistent) {
    b.add_response("aligns with the query", "consistent");
    b.add_response("salient entities", "rock music");
    b.add_responder("---Task---", [inconsistent](const std::string& prompt) {
        for (const auto& bad : inconsistent) {
            if (prompt.find(bad) != std::string::npos) {
                return std::string("[Question#1: \"What genre (") + bad +
                       ")?\", Answer#1: \"rock music\"]";
            }
        }
        return std::string("[Question#1: \"What genre (ok)?\", Answer#1: \"rock music\"]");
    });
    b.add_responder("judge if each question-answer pair", [](const std::string& prompt) {
        if (prompt.find("(ok)") != std::string::npos) {
            return std::string("[Status#1: \"consistent\", ReferenceAnswer#1: \"none\"]");
        }
        return std::string("[Status#1: \"inconsistent\", ReferenceAnswer#1: \"pop music\"]");
    });
}

}  // namespace

TEST_CASE("single-step summary renders the full past into one prompt") {
    auto lib = library();
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("cataloged in the following", "the summary text here");
    auto gw = make_gateway(backend);
    auto past = make_past(199);
    auto s = summarize_single_step(past, "the query", 200, lib, *gw);
    CHECK(s.text == "the summary text here");
    CHECK(s.word_count == 4);
    CHECK(s.approach == Approach::single_step);
    CHECK(s.lineage.empty());
    CHECK(s.cache_keys.size() == 1);
    REQUIRE(backend->calls() == 1);
    // all 199 activities appear, one line each
    const auto prompt = backend->call_log()[0].prompt;
    size_t lines = 0;
    for (size_t pos = 0; (pos = prompt.find("\" around ", pos)) != std::string::npos; ++pos) {
        ++lines;
    }
    CHECK(lines == 199);
    CHECK(prompt.find("no more than 200 words") != std::string::npos);
}

TEST_CASE("single-step summary of an empty past is rejected") {
    auto lib = library();
    auto backend = std::make_shared<ScriptedBackend>();
    auto gw = make_gateway(backend);
    CHECK_THROWS_AS(summarize_single_step({}, "q", 200, lib, *gw), std::invalid_argument);
}

TEST_CASE("segment prompt carries the segment time range and only its activities") {
    auto lib = library();
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response(kDraftMatcher, "segment summary");
    auto gw = make_gateway(backend);
    auto seg = make_segment(50);
    std::vector<std::string> keys;
    auto text = summarize_segment(seg, "q", 200, lib, *gw, &keys);
    CHECK(text == "segment summary");
    CHECK(keys.size() == 1);
    const auto prompt = backend->call_log()[0].prompt;
    CHECK(prompt.find(format_time_range(seg.start_ts, seg.end_ts)) != std::string::npos);
    size_t lines = 0;
    for (size_t pos = 0; (pos = prompt.find("\" around ", pos)) != std::string::npos; ++pos) {
        ++lines;
    }
    CHECK(lines == 50);
}

TEST_CASE("refinement stops after the first clean verification") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    script_verifier(*backend, {});
    auto gw = make_gateway(backend);
    auto seg = make_segment(20);
    auto [text, trace] = refine_segment(seg, "clean draft", "q", 200, verifier, lib, *gw, 3);
    CHECK(text == "clean draft");
    REQUIRE(trace.steps.size() == 1);
    CHECK_FALSE(trace.steps[0].regenerated);
    CHECK(backend->calls_matching(kFeedbackMatcher) == 0);
}

TEST_CASE("one failed verification triggers exactly one regeneration") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    script_verifier(*backend, {"draft v1"});
    backend->add_response(kFeedbackMatcher, "revised v2");
    auto gw = make_gateway(backend);
    auto seg = make_segment(20);
    auto [text, trace] = refine_segment(seg, "draft v1", "q", 200, verifier, lib, *gw, 3);
    CHECK(text == "revised v2");
    REQUIRE(trace.steps.size() == 2);
    CHECK(trace.steps[0].regenerated);
    CHECK_FALSE(trace.steps[1].regenerated);
    CHECK(backend->calls_matching(kFeedbackMatcher) == 1);
    // the regeneration prompt folds the reference answer back in
    std::string feedback_prompt;
    for (const auto& e : backend->call_log()) {
        if (e.prompt.find(kFeedbackMatcher) != std::string::npos) feedback_prompt = e.prompt;
    }
    CHECK(feedback_prompt.find("ReferenceAnswer#1: \"pop music\"") != std::string::npos);
    CHECK(feedback_prompt.find("draft v1") != std::string::npos);
}

TEST_CASE("persistent inconsistency is capped by max_iterations") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    script_verifier(*backend, {"draft v1", "revised v2", "revised v3"});
    int revision = 1;
    backend->add_responder(kFeedbackMatcher, [&revision](const std::string&) {
        return "revised v" + std::to_string(++revision);
    });
    auto gw = make_gateway(backend);
    auto seg = make_segment(20);
    auto [text, trace] = refine_segment(seg, "draft v1", "q", 200, verifier, lib, *gw, 3);
    CHECK(text == "revised v3");
    REQUIRE(trace.steps.size() == 3);
    CHECK(trace.steps[0].regenerated);
    CHECK(trace.steps[1].regenerated);
    CHECK_FALSE(trace.steps[2].regenerated);
    CHECK(backend->calls_matching(kFeedbackMatcher) == 2);
}

TEST_CASE("an inconsistent query verdict also drives regeneration") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_responder("aligns with the query", [](const std::string& prompt) {
        return prompt.find("off-topic draft") != std::string::npos ? "inconsistent"
                                                                   : "consistent";
    });
    backend->add_response("salient entities", "");
    backend->add_response(kFeedbackMatcher, "on-topic revision");
    auto gw = make_gateway(backend);
    auto seg = make_segment(15);
    auto [text, trace] =
        refine_segment(seg, "off-topic draft", "the real query", 200, verifier, lib, *gw, 3);
    CHECK(text == "on-topic revision");
    REQUIRE(trace.steps.size() == 2);
    std::string feedback_prompt;
    for (const auto& e : backend->call_log()) {
        if (e.prompt.find(kFeedbackMatcher) != std::string::npos) feedback_prompt = e.prompt;
    }
    CHECK(feedback_prompt.find("Does the summary address the query: \"the real query\"?") !=
          std::string::npos);
    CHECK(feedback_prompt.find("The summary must address the query.") != std::string::npos);
}

TEST_CASE("verification can be grounded in a wider history than the segment") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    script_verifier(*backend, {});
    auto gw = make_gateway(backend);
    auto past = make_past(30);
    auto seg = make_segment(10);
    refine_segment(seg, "clean draft", "q", 200, verifier, lib, *gw, 3, nullptr, past);
    std::string judge_prompt;
    for (const auto& e : backend->call_log()) {
        if (e.prompt.find("judge if each question-answer pair") != std::string::npos) {
            judge_prompt = e.prompt;
        }
    }
    REQUIRE_FALSE(judge_prompt.empty());
    // activities outside the segment are visible to the judge
    CHECK(judge_prompt.find("Item 29") != std::string::npos);
}

TEST_CASE("refinement rejects a zero iteration budget") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    auto gw = make_gateway(backend);
    CHECK_THROWS_AS(refine_segment(make_segment(10), "d", "q", 200, verifier, lib, *gw, 0),
                    ConfigError);
    SummarizeConfig bad;
    bad.max_iterations = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("combine joins segment summaries in order with labeled blocks") {
    auto lib = library();
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response(kCombineMatcher, "combined text");
    auto gw = make_gateway(backend);
    std::vector<std::pair<std::string, std::string>> refined = {
        {"range A", "first segment text"},
        {"range B", "second segment text"},
    };
    auto s = combine_segments(refined, "q", 200, lib, *gw);
    CHECK(s.text == "combined text");
    CHECK(s.approach == Approach::hierarchy_critique);
    const auto prompt = backend->call_log()[0].prompt;
    auto pos_a = prompt.find("Summary of Time Segment \"range A\":\nfirst segment text");
    auto pos_b = prompt.find("Summary of Time Segment \"range B\":\nsecond segment text");
    REQUIRE(pos_a != std::string::npos);
    REQUIRE(pos_b != std::string::npos);
    CHECK(pos_a < pos_b);
    CHECK_THROWS_AS(combine_segments({}, "q", 200, lib, *gw), std::invalid_argument);
}

TEST_CASE("hierarchy-critique pipeline: segments, refinement, combine, lineage") {
    auto lib = library();
    Verifier verifier(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    // two segments (120 past activities -> 50, 50, 20 merged by config below)
    backend->add_responder(kDraftMatcher, [](const std::string& prompt) {
        // name drafts by a timestamp only their segment contains
        return prompt.find("Item 0\"") != std::string::npos ? "draft one" : "draft other";
    });
    script_verifier(*backend, {"draft one"});
    backend->add_response(kFeedbackMatcher, "fixed one");
    backend->add_response(kCombineMatcher, "grand combined summary");
    auto gw = make_gateway(backend);

    SummarizeConfig cfg;
    cfg.max_iterations = 3;
    auto past = make_past(100);  // segments of 50 + 50
    auto s = summarize_hierarchy_critique(past, "q", cfg, verifier, lib, *gw);
    CHECK(s.text == "grand combined summary");
    CHECK(s.approach == Approach::hierarchy_critique);
    REQUIRE(s.lineage.size() == 2);
    CHECK(s.lineage[0].iterations == 2);
    CHECK(s.lineage[0].final_text == "fixed one");
    CHECK(s.lineage[1].iterations == 1);
    CHECK(s.lineage[1].final_text == "draft other");
    // summarizer calls = sum of iterations + 1 combine
    int summarizer_calls = backend->calls_matching(kDraftMatcher) +
                           backend->calls_matching(kFeedbackMatcher) +
                           backend->calls_matching(kCombineMatcher);
    CHECK(summarizer_calls == 2 + 1 + 1);
    CHECK(s.cache_keys.size() == 4);
}
