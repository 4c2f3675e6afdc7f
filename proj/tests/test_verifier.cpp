#include <doctest.h>

#include <random>

#include "tsb/verifier.hpp"

using namespace tsb;

namespace {

PromptLibrary library() { return PromptLibrary(TSB_PROMPT_DIR_FOR_TESTS); }

std::unique_ptr<Gateway> make_gateway(std::shared_ptr<ScriptedBackend> backend) {
    auto gw = std::make_unique<Gateway>(nullptr, 4, 3, 1);
    gw->bind(Role::verifier, backend, "scripted-verifier");
    return gw;
}

std::vector<Activity> sample_activities() {
    std::vector<Activity> acts;
    const char* names[] = {
        "Pop music trends in the 2020s",
        "Best coffee brewing methods for home",
        "How to prepare for a multi-day hiking trip",
    };
    std::int64_t ts = 1084636800;
    for (const char* n : names) {
        Activity a;
        a.timestamp = ts;
        ts += 3600;
        a.item_name = n;
        a.verb = Verb::searched;
        acts.push_back(std::move(a));
    }
    return acts;
}

}  // namespace

TEST_CASE("qa pair wire format round trips") {
    std::vector<QAPair> pairs = {
        {1, "What outdoor activity is the user mainly interested in according to their searches "
            "and discussions?",
         "hiking"},
        {2, "What genre of music does the user prefer, known for its wide appeal and catchy "
            "melodies?",
         "rock music"},
    };
    auto text = format_qa_pairs(pairs);
    CHECK(text ==
          "[Question#1: \"What outdoor activity is the user mainly interested in according to "
          "their searches and discussions?\", Answer#1: \"hiking\"]\n"
          "[Question#2: \"What genre of music does the user prefer, known for its wide appeal "
          "and catchy melodies?\", Answer#2: \"rock music\"]");
    ParseTally tally;
    auto back = parse_qa_pairs(text, &tally);
    REQUIRE(back.size() == 2);
    CHECK(tally.parsed == 2);
    CHECK(tally.malformed == 0);
    CHECK(back[0].index == 1);
    CHECK(back[0].answer == "hiking");
    CHECK(back[1].question == pairs[1].question);
}

TEST_CASE("judgment wire format round trips") {
    std::vector<Judgment> js = {
        {1, ConsistencyStatus::consistent, ""},
        {2, ConsistencyStatus::inconsistent, "pop music"},
    };
    auto text = format_judgments(js);
    CHECK(text ==
          "[Status#1: \"consistent\", ReferenceAnswer#1: \"none\"]\n"
          "[Status#2: \"inconsistent\", ReferenceAnswer#2: \"pop music\"]");
    auto back = parse_judgments(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].status == ConsistencyStatus::consistent);
    CHECK(back[1].status == ConsistencyStatus::inconsistent);
    CHECK(back[1].reference_answer == "pop music");
}

TEST_CASE("format/parse round trip holds for random payloads") {
    std::mt19937_64 rng(42);
    auto random_word = [&] {
        // bracket- and quote-free payloads, as the wire format requires
        std::string s;
        int len = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < len; ++i) s += static_cast<char>('a' + rng() % 26);
        return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<QAPair> pairs;
        int n = 1 + static_cast<int>(rng() % 5);
        for (int i = 0; i < n; ++i) {
            pairs.push_back({i + 1, random_word() + " " + random_word() + "?", random_word()});
        }
        auto back = parse_qa_pairs(format_qa_pairs(pairs));
        REQUIRE(back.size() == pairs.size());
        for (int i = 0; i < n; ++i) {
            CHECK(back[i].index == pairs[i].index);
            CHECK(back[i].question == pairs[i].question);
            CHECK(back[i].answer == pairs[i].answer);
        }
    }
}

TEST_CASE("mismatched indices and malformed lines are rejected") {
    ParseTally tally;
    auto pairs = parse_qa_pairs(
        "[Question#1: \"q\", Answer#2: \"a\"]\n"
        "not a pair line\n"
        "[Question#3: \"ok\", Answer#3: \"fine\"]\n",
        &tally);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].index == 3);
    CHECK(tally.parsed == 1);
    CHECK(tally.malformed == 2);

    ParseTally jt;
    auto js = parse_judgments(
        "[Status#1: \"bogus verdict\", ReferenceAnswer#1: \"none\"]\n"
        "[Status#2: \"Consistent.\", ReferenceAnswer#2: \"none\"]\n",
        &jt);
    REQUIRE(js.size() == 1);
    CHECK(js[0].index == 2);
    CHECK(js[0].status == ConsistencyStatus::consistent);
    CHECK(jt.malformed == 1);
}

TEST_CASE("query consistency verdict parsing is tolerant of case and punctuation") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("aligns with the query", "  Inconsistent.\n", 1);
    backend->add_response("aligns with the query", "CONSISTENT");
    auto gw = make_gateway(backend);
    CHECK(v.check_query_consistency("s", "q", *gw) == ConsistencyStatus::inconsistent);
    CHECK(v.check_query_consistency("s2", "q", *gw) == ConsistencyStatus::consistent);
}

TEST_CASE("unparseable query verdict retries once then defaults to consistent") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("aligns with the query", "I cannot judge that");
    auto gw = make_gateway(backend);
    std::vector<std::string> warnings;
    CHECK(v.check_query_consistency("s", "q", *gw, &warnings) == ConsistencyStatus::consistent);
    CHECK(backend->calls() == 2);
    REQUIRE(warnings.size() == 1);
}

TEST_CASE("llm entity extraction dedupes and caps at k_max") {
    auto lib = library();
    VerifierConfig cfg;
    cfg.k_max = 3;
    Verifier v(lib, cfg);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("salient entities", "hiking\n\nPop Music\nhiking\ncoffee\ntea\n");
    auto gw = make_gateway(backend);
    auto entities = v.extract_entities("summary text", *gw);
    REQUIRE(entities.size() == 3);
    CHECK(entities[0].surface == "hiking");
    CHECK(entities[1].surface == "Pop Music");
    CHECK(entities[2].surface == "coffee");
    CHECK(entities[0].source == EntitySource::llm_extracted);
}

TEST_CASE("lexicon entity mode matches case-insensitively in occurrence order") {
    auto lib = library();
    VerifierConfig cfg;
    cfg.entity_mode = EntitySource::lexicon_matched;
    cfg.lexicon = {"pop music", "hiking", "skiing"};
    Verifier v(lib, cfg);
    auto backend = std::make_shared<ScriptedBackend>();
    auto gw = make_gateway(backend);
    auto entities = v.extract_entities("The user enjoys Hiking and also pop MUSIC.", *gw);
    REQUIRE(entities.size() == 2);
    CHECK(entities[0].surface == "hiking");
    CHECK(entities[1].surface == "pop music");
    CHECK(entities[0].source == EntitySource::lexicon_matched);
    CHECK(backend->calls() == 0);
}

TEST_CASE("generated pairs whose answer matches no entity are dropped") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("---Task---",
                          "[Question#1: \"Which activity?\", Answer#1: \"hiking\"]\n"
                          "[Question#2: \"Which drink?\", Answer#2: \"espresso\"]\n");
    auto gw = make_gateway(backend);
    std::vector<Entity> entities = {{"Hiking", EntitySource::llm_extracted},
                                    {"pop music", EntitySource::llm_extracted}};
    std::vector<std::string> warnings;
    auto pairs = v.generate_qa_pairs("summary", entities, *gw, &warnings);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].answer == "hiking");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("espresso") != std::string::npos);
}

TEST_CASE("judging aligns by index, downgrades ref-less inconsistency, fills unresolved") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("judge if each question-answer pair",
                          "[Status#2: \"inconsistent\", ReferenceAnswer#2: \"pop music\"]\n"
                          "[Status#3: \"inconsistent\", ReferenceAnswer#3: \"none\"]\n");
    auto gw = make_gateway(backend);
    std::vector<QAPair> pairs = {{1, "q1?", "a1"}, {2, "q2?", "rock music"}, {3, "q3?", "a3"}};
    std::vector<std::string> warnings;
    auto js = v.judge_qa_pairs(pairs, sample_activities(), *gw, &warnings);
    REQUIRE(js.size() == 3);
    CHECK(js[0].status == ConsistencyStatus::unresolved);
    CHECK(js[1].status == ConsistencyStatus::inconsistent);
    CHECK(js[1].reference_answer == "pop music");
    CHECK(js[2].status == ConsistencyStatus::unresolved);
}

TEST_CASE("fully unparseable judging retries once then leaves everything unresolved") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("judge if each question-answer pair", "no judgments here");
    auto gw = make_gateway(backend);
    std::vector<QAPair> pairs = {{1, "q?", "a"}};
    auto js = v.judge_qa_pairs(pairs, sample_activities(), *gw);
    REQUIRE(js.size() == 1);
    CHECK(js[0].status == ConsistencyStatus::unresolved);
    CHECK(backend->calls_matching("judge if each question-answer pair") == 2);
}

TEST_CASE("full verify pass flags inconsistency and exposes feedback") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("aligns with the query", "consistent");
    backend->add_response("salient entities", "hiking\nrock music");
    backend->add_response("---Task---",
                          "[Question#1: \"What outdoor activity?\", Answer#1: \"hiking\"]\n"
                          "[Question#2: \"What music genre?\", Answer#2: \"rock music\"]\n");
    backend->add_response("judge if each question-answer pair",
                          "[Status#1: \"consistent\", ReferenceAnswer#1: \"none\"]\n"
                          "[Status#2: \"inconsistent\", ReferenceAnswer#2: \"pop music\"]\n");
    auto gw = make_gateway(backend);
    auto result = v.verify("summary text", "the query", sample_activities(), *gw);
    CHECK(result.query_status == ConsistencyStatus::consistent);
    CHECK(result.any_inconsistent);
    auto fb = result.inconsistent_feedback();
    REQUIRE(fb.size() == 1);
    CHECK(fb[0].pair.answer == "rock music");
    CHECK(fb[0].reference_answer == "pop music");
    CHECK(format_feedback_pairs(fb) ==
          "[Question#2: \"What music genre?\", Answer#2: \"rock music\", "
          "ReferenceAnswer#2: \"pop music\"]");
}

TEST_CASE("unresolved judgments alone never flag a summary") {
    auto lib = library();
    Verifier v(lib);
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("aligns with the query", "consistent");
    backend->add_response("salient entities", "hiking");
    backend->add_response("---Task---", "[Question#1: \"q?\", Answer#1: \"hiking\"]");
    backend->add_response("judge if each question-answer pair", "nothing parseable");
    auto gw = make_gateway(backend);
    auto result = v.verify("summary", "query", sample_activities(), *gw);
    CHECK_FALSE(result.any_inconsistent);
    REQUIRE(result.judgments.size() == 1);
    CHECK(result.judgments[0].status == ConsistencyStatus::unresolved);
}
