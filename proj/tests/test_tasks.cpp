#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "tsb/tasks.hpp"

using namespace tsb;

namespace {

PromptLibrary library() { return PromptLibrary(TSB_PROMPT_DIR_FOR_TESTS); }

SplitTimeline make_split(int past_len, const std::string& gold_item = "Gold Item",
                         const std::string& gold_category = "Gold Category") {
    SplitTimeline split;
    for (int i = 0; i < past_len; ++i) {
        Activity a;
        a.timestamp = 1000000000 + i * 3600;
        a.item_name = "Past Item " + std::to_string(i);
        a.categories = {"Past Cat " + std::to_string(i % 5)};
        split.past.push_back(std::move(a));
    }
    Activity next;
    next.timestamp = 2000000000;
    next.item_name = gold_item;
    next.categories = {gold_category, "Secondary Category"};
    split.future.push_back(std::move(next));
    split.split_index = past_len;
    return split;
}

DatasetVocab make_vocab(int items, int categories) {
    DatasetVocab v;
    for (int i = 0; i < items; ++i) v.items.push_back("Vocab Item " + std::to_string(i));
    for (int i = 0; i < categories; ++i) v.categories.push_back("Vocab Cat " + std::to_string(i));
    return v;
}

Summary dummy_summary() {
    Summary s;
    s.text = "The user mostly watches classic drama films.";
    s.word_count = 7;
    return s;
}

std::unique_ptr<Gateway> make_gateway(std::shared_ptr<ScriptedBackend> backend) {
    auto gw = std::make_unique<Gateway>(nullptr, 4, 3, 1);
    gw->bind(Role::predictor, backend, "scripted-predictor");
    return gw;
}

}  // namespace

TEST_CASE("each task has five distinct options including the gold") {
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    for (int trial = 0; trial < 1000; ++trial) {
        cfg.master_seed = trial;
        auto tasks = build_tasks(split, "ds/u/approach", vocab, cfg, 0, "u" + std::to_string(trial));
        REQUIRE(tasks.size() == 4);
        for (const auto& t : tasks) {
            REQUIRE(t.options.size() == 5);
            std::set<std::string> distinct(t.options.begin(), t.options.end());
            CHECK(distinct.size() == 5);
            REQUIRE(t.gold_index >= 0);
            REQUIRE(t.gold_index < 5);
            if (t.kind == TaskKind::t1_next_item || t.kind == TaskKind::t2_next_item_with_recent) {
                CHECK(t.options[t.gold_index] == "Gold Item");
                // no distractor comes from the user's own past
                for (const auto& o : t.options) {
                    CHECK(o.rfind("Past Item", 0) == std::string::npos);
                }
            } else {
                CHECK(t.options[t.gold_index] == "Gold Category");
                for (const auto& o : t.options) {
                    CHECK(o != "Secondary Category");
                }
            }
        }
    }
}

TEST_CASE("gold position is roughly uniform over seeds") {
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    std::map<int, int> counts;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        cfg.master_seed = 7777 + trial;
        auto tasks = build_tasks(split, "id", vocab, cfg, 0, "user");
        counts[tasks[0].gold_index]++;
    }
    // chi-square against uniform over 5 cells; 13.28 is the 1% critical
    // value at 4 degrees of freedom
    double expected = trials / 5.0;
    double chi2 = 0;
    for (int i = 0; i < 5; ++i) {
        double d = counts[i] - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 < 13.28);
}

TEST_CASE("task building is bit-identical across repeated calls") {
    auto split = make_split(80);
    auto vocab = make_vocab(25, 20);
    EvalConfig cfg;
    cfg.master_seed = 424242;
    auto a = build_tasks(split, "id", vocab, cfg, 2, "alice");
    auto b = build_tasks(split, "id", vocab, cfg, 2, "alice");
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].options == b[i].options);
        CHECK(a[i].gold_index == b[i].gold_index);
        CHECK(a[i].rng_seed == b[i].rng_seed);
    }
}

TEST_CASE("different run indices and users draw different seeds") {
    CHECK(task_seed(1, "u", TaskKind::t1_next_item, 0) !=
          task_seed(1, "u", TaskKind::t1_next_item, 1));
    CHECK(task_seed(1, "u", TaskKind::t1_next_item, 0) !=
          task_seed(1, "v", TaskKind::t1_next_item, 0));
    CHECK(task_seed(1, "u", TaskKind::t1_next_item, 0) !=
          task_seed(1, "u", TaskKind::t3_next_category, 0));
    CHECK(task_seed(1, "u", TaskKind::t2_next_item_with_recent, 3) ==
          task_seed(1, "u", TaskKind::t2_next_item_with_recent, 3));
}

TEST_CASE("recent activities are the trailing n_r of the past") {
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    cfg.n_r = 20;
    auto tasks = build_tasks(split, "id", vocab, cfg, 0, "u");
    for (const auto& t : tasks) {
        if (t.kind == TaskKind::t2_next_item_with_recent ||
            t.kind == TaskKind::t4_next_category_with_recent) {
            REQUIRE(t.recent_activities.size() == 20);
            CHECK(t.recent_activities.front().item_name == "Past Item 40");
            CHECK(t.recent_activities.back().item_name == "Past Item 59");
        } else {
            CHECK(t.recent_activities.empty());
        }
    }
    cfg.n_r = 100;  // more than the past holds
    auto tasks2 = build_tasks(split, "id", vocab, cfg, 0, "u");
    CHECK(tasks2[1].recent_activities.size() == 60);
}

TEST_CASE("task building fails loudly on bad inputs") {
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;

    SplitTimeline no_future = make_split(60);
    no_future.future.clear();
    CHECK_THROWS_AS(build_tasks(no_future, "id", vocab, cfg, 0, "u"), TaskBuildError);

    SplitTimeline no_categories = make_split(60);
    no_categories.future[0].categories.clear();
    CHECK_THROWS_AS(build_tasks(no_categories, "id", vocab, cfg, 0, "u"), TaskBuildError);

    auto split = make_split(60);
    auto tiny = make_vocab(3, 30);
    CHECK_THROWS_AS(build_tasks(split, "id", tiny, cfg, 0, "u"), TaskBuildError);

    EvalConfig bad = cfg;
    bad.m = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.runs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("choice letter parsing") {
    CHECK(parse_choice_letter("The answer is (B).") == 1);
    CHECK(parse_choice_letter("A") == 0);
    CHECK(parse_choice_letter("e") == 4);
    CHECK(parse_choice_letter("(D) because of the trend") == 3);
    CHECK(parse_choice_letter("Answer: C") == 2);
    CHECK_FALSE(parse_choice_letter("maybe").has_value());
    CHECK_FALSE(parse_choice_letter("").has_value());
    CHECK_FALSE(parse_choice_letter("F or G").has_value());
    // letters embedded in words never count
    CHECK_FALSE(parse_choice_letter("band camp").has_value());
    CHECK(parse_choice_letter("band camp (A)") == 0);
}

TEST_CASE("run_task renders options and scores the reply") {
    auto lib = library();
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    cfg.master_seed = 9;
    auto tasks = build_tasks(split, "id", vocab, cfg, 0, "u");
    const auto& t1 = tasks[0];

    auto backend = std::make_shared<ScriptedBackend>();
    char gold_letter = static_cast<char>('A' + t1.gold_index);
    backend->add_response("next activity", std::string("The answer is (") + gold_letter + ").");
    auto gw = make_gateway(backend);
    auto outcome = run_task(t1, dummy_summary(), lib, *gw);
    CHECK(outcome.correct == 1);
    CHECK(outcome.chosen_index == t1.gold_index);
    CHECK_FALSE(outcome.parse_failed);

    const auto prompt = backend->call_log()[0].prompt;
    CHECK(prompt.find("(A) ") != std::string::npos);
    CHECK(prompt.find("(E) ") != std::string::npos);
    CHECK(prompt.find(dummy_summary().text) != std::string::npos);
    CHECK(prompt.find("Recent Activities") == std::string::npos);
}

TEST_CASE("recent-activity tasks use the richer template") {
    auto lib = library();
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    auto tasks = build_tasks(split, "id", vocab, cfg, 0, "u");
    const auto& t2 = tasks[1];
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("Recent Activities", "A");
    auto gw = make_gateway(backend);
    auto outcome = run_task(t2, dummy_summary(), lib, *gw);
    CHECK(outcome.chosen_index == 0);
    const auto prompt = backend->call_log()[0].prompt;
    CHECK(prompt.find("Past Item 59") != std::string::npos);
}

TEST_CASE("an unparseable reply is retried once then marked parse_failed") {
    auto lib = library();
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    auto tasks = build_tasks(split, "id", vocab, cfg, 0, "u");
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_response("next activity", "maybe");
    auto gw = make_gateway(backend);
    auto outcome = run_task(tasks[0], dummy_summary(), lib, *gw);
    CHECK(outcome.parse_failed);
    CHECK(outcome.correct == 0);
    CHECK_FALSE(outcome.chosen_index.has_value());
    CHECK(backend->calls() == 2);
}

TEST_CASE("a transport failure fails one task, not the whole set") {
    auto lib = library();
    auto split = make_split(60);
    auto vocab = make_vocab(40, 30);
    EvalConfig cfg;
    auto tasks = build_tasks(split, "id", vocab, cfg, 0, "u");
    auto backend = std::make_shared<ScriptedBackend>();
    // t1/t3 use the summary-only template, t2/t4 the recent one
    backend->add_failure("\"Summary\" section, answer", 10);
    backend->add_response("Recent Activities", "B");
    auto gw = make_gateway(backend);
    auto outcomes = run_task_set(tasks, dummy_summary(), lib, *gw);
    REQUIRE(outcomes.size() == 4);
    CHECK(outcomes[0].transport_failed);
    CHECK(outcomes[0].correct == 0);
    CHECK(outcomes[2].transport_failed);
    CHECK_FALSE(outcomes[1].transport_failed);
    CHECK(outcomes[1].chosen_index == 1);
    CHECK_FALSE(outcomes[3].transport_failed);
}
