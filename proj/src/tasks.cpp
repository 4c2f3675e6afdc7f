#include "tsb/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "tsb/util.hpp"

namespace tsb {

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::t1_next_item: return "t1_next_item";
        case TaskKind::t2_next_item_with_recent: return "t2_next_item_with_recent";
        case TaskKind::t3_next_category: return "t3_next_category";
        case TaskKind::t4_next_category_with_recent: return "t4_next_category_with_recent";
    }
    return "";
}

std::optional<TaskKind> parse_task_kind(const std::string& s) {
    for (TaskKind k : kAllTaskKinds) {
        if (s == task_kind_name(k)) return k;
    }
    return std::nullopt;
}

void EvalConfig::validate() const {
    if (!(1 <= m && m <= 4)) throw ConfigError("require 1 <= m <= 4");
    if (n_r < 1) throw ConfigError("require n_r >= 1");
    if (runs < 1) throw ConfigError("require runs >= 1");
}

std::uint64_t task_seed(std::uint64_t master_seed, const std::string& user_id, TaskKind kind,
                        int run_index) {
    std::uint64_t h = fnv1a64(std::to_string(master_seed));
    h = fnv1a64(user_id, h);
    h = fnv1a64(task_kind_name(kind), h);
    h = fnv1a64(std::to_string(run_index), h);
    return h;
}

namespace {

bool item_task(TaskKind k) {
    return k == TaskKind::t1_next_item || k == TaskKind::t2_next_item_with_recent;
}

bool uses_recent(TaskKind k) {
    return k == TaskKind::t2_next_item_with_recent || k == TaskKind::t4_next_category_with_recent;
}

// mt19937_64 is fully specified by the standard, so draws are
// reproducible across platforms; std::uniform_int_distribution is not,
// hence the modulo draw.
int draw(std::mt19937_64& rng, int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

std::vector<std::string> sample_distractors(const std::vector<std::string>& pool,
                                            const std::set<std::string>& excluded,
                                            std::mt19937_64& rng, int count) {
    std::vector<std::string> candidates;
    for (const auto& s : pool) {
        if (!excluded.count(s)) candidates.push_back(s);
    }
    if (static_cast<int>(candidates.size()) < count) {
        throw TaskBuildError("distractor pool too small after exclusions: " +
                             std::to_string(candidates.size()) + " < " + std::to_string(count));
    }
    // Partial Fisher-Yates over the candidate list.
    std::vector<std::string> picked;
    for (int i = 0; i < count; ++i) {
        int j = i + draw(rng, static_cast<int>(candidates.size()) - i);
        std::swap(candidates[i], candidates[j]);
        picked.push_back(candidates[i]);
    }
    return picked;
}

}  // namespace

std::vector<PredictionTask> build_tasks(const SplitTimeline& split, const std::string& summary_id,
                                        const DatasetVocab& vocab, const EvalConfig& cfg,
                                        int run_index, const std::string& user_id) {
    cfg.validate();
    if (split.future.empty()) throw TaskBuildError("future is empty for user " + user_id);
    const Activity& next = split.future.front();
    if (next.categories.empty()) {
        throw TaskBuildError("next activity has no categories for user " + user_id);
    }

    std::set<std::string> past_items;
    for (const auto& a : split.past) past_items.insert(a.item_name);

    std::vector<PredictionTask> tasks;
    for (TaskKind kind : kAllTaskKinds) {
        PredictionTask task;
        task.kind = kind;
        task.summary_id = summary_id;
        task.rng_seed = task_seed(cfg.master_seed, user_id, kind, run_index);
        std::mt19937_64 rng(task.rng_seed);

        std::string gold;
        std::set<std::string> excluded;
        if (item_task(kind)) {
            gold = next.item_name;
            task.question = "Which of the following will be my next activity?";
            excluded = past_items;
            excluded.insert(gold);
            task.options = sample_distractors(vocab.items, excluded, rng, 4);
        } else {
            gold = next.primary_category();
            task.question = "Which of the following categories will my next activity belong to?";
            excluded.insert(next.categories.begin(), next.categories.end());
            task.options = sample_distractors(vocab.categories, excluded, rng, 4);
        }

        task.options.insert(task.options.begin(), gold);
        // Fisher-Yates shuffle of the 5 options; randomized choice order.
        for (int i = 4; i > 0; --i) {
            int j = draw(rng, i + 1);
            std::swap(task.options[i], task.options[j]);
        }
        task.gold_index = static_cast<int>(
            std::find(task.options.begin(), task.options.end(), gold) - task.options.begin());

        if (uses_recent(kind)) {
            const int take = std::min<int>(cfg.n_r, static_cast<int>(split.past.size()));
            task.recent_activities.assign(split.past.end() - take, split.past.end());
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

std::optional<int> parse_choice_letter(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (upper < 'A' || upper > 'E') continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
        bool right_ok =
            i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
        if (left_ok && right_ok) return upper - 'A';
    }
    return std::nullopt;
}

TaskOutcome run_task(const PredictionTask& task, const Summary& summary,
                     const PromptLibrary& prompts, Gateway& gw) {
    std::string options_block;
    for (size_t i = 0; i < task.options.size(); ++i) {
        if (i) options_block += '\n';
        options_block += "(";
        options_block += static_cast<char>('A' + i);
        options_block += ") " + task.options[i];
    }

    Bindings bindings = {{"summary", summary.text},
                         {"question", task.question},
                         {"options", options_block}};
    TemplateId tmpl = TemplateId::predict_task;
    if (!task.recent_activities.empty()) {
        tmpl = TemplateId::predict_task_with_recent;
        bindings["recent_activities"] = format_activities(task.recent_activities);
    }
    std::string prompt = prompts.render(tmpl, bindings);

    TaskOutcome outcome;
    outcome.kind = task.kind;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = gw.complete(Role::predictor, prompt, attempt > 0);
        if (auto choice = parse_choice_letter(resp.text)) {
            outcome.chosen_index = *choice;
            outcome.correct = *choice == task.gold_index ? 1 : 0;
            return outcome;
        }
    }
    outcome.parse_failed = true;
    outcome.correct = 0;
    return outcome;
}

std::vector<TaskOutcome> run_task_set(const std::vector<PredictionTask>& tasks,
                                      const Summary& summary, const PromptLibrary& prompts,
                                      Gateway& gw) {
    std::vector<TaskOutcome> outcomes;
    for (const auto& task : tasks) {
        try {
            outcomes.push_back(run_task(task, summary, prompts, gw));
        } catch (const TransportError&) {
            TaskOutcome failed;
            failed.kind = task.kind;
            failed.parse_failed = true;
            failed.transport_failed = true;
            outcomes.push_back(failed);
        }
    }
    return outcomes;
}

}  // namespace tsb
