#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsb/gateway.hpp"
#include "tsb/prompts.hpp"
#include "tsb/summarize.hpp"
#include "tsb/timeline.hpp"

namespace tsb {

enum class TaskKind {
    t1_next_item,
    t2_next_item_with_recent,
    t3_next_category,
    t4_next_category_with_recent,
};

const char* task_kind_name(TaskKind k);
std::optional<TaskKind> parse_task_kind(const std::string& s);
constexpr TaskKind kAllTaskKinds[] = {TaskKind::t1_next_item, TaskKind::t2_next_item_with_recent,
                                      TaskKind::t3_next_category,
                                      TaskKind::t4_next_category_with_recent};

struct PredictionTask {
    TaskKind kind = TaskKind::t1_next_item;
    std::string summary_id;
    std::string question;
    std::vector<std::string> options;  // exactly 5, distinct
    int gold_index = 0;                // 0..4
    std::vector<Activity> recent_activities;  // empty for t1/t3
    std::uint64_t rng_seed = 0;
};

struct TaskOutcome {
    TaskKind kind = TaskKind::t1_next_item;
    std::optional<int> chosen_index;
    int correct = 0;  // the binary task outcome
    bool parse_failed = false;
    bool transport_failed = false;
};

struct EvalConfig {
    int n_r = 20;
    int m = 3;
    int runs = 3;
    std::uint64_t master_seed = 0;

    void validate() const;
};

struct TaskBuildError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seed for one task's option sampling and shuffling; stable across
// processes and platforms.
std::uint64_t task_seed(std::uint64_t master_seed, const std::string& user_id, TaskKind kind,
                        int run_index);

// Build the 4 multiple-choice tasks for one user's summary. Gold for
// t1/t2 is the next activity's item name, for t3/t4 its primary
// category. Distractors are drawn uniformly without replacement from
// the dataset vocabulary, excluding the gold, the user's own past
// items (item tasks), and every category of the next activity
// (category tasks).
std::vector<PredictionTask> build_tasks(const SplitTimeline& split, const std::string& summary_id,
                                        const DatasetVocab& vocab, const EvalConfig& cfg,
                                        int run_index, const std::string& user_id);

TaskOutcome run_task(const PredictionTask& task, const Summary& summary,
                     const PromptLibrary& prompts, Gateway& gw);

// Runs all tasks in order; a transport failure on one task marks that
// outcome failed instead of aborting the set.
std::vector<TaskOutcome> run_task_set(const std::vector<PredictionTask>& tasks,
                                      const Summary& summary, const PromptLibrary& prompts,
                                      Gateway& gw);

// First standalone letter A-E (case-insensitive) in a predictor reply.
std::optional<int> parse_choice_letter(const std::string& text);

}  // namespace tsb
