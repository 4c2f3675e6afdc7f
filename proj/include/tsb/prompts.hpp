#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "tsb/timeline.hpp"

namespace tsb {

enum class TemplateId {
    single_step,
    segment,
    segment_with_feedback,
    query_consistency,
    question_generation,
    question_answering,
    combine_segments,
    predict_task,
    predict_task_with_recent,
    extract_entities,
};

const char* template_name(TemplateId id);

struct RenderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Bindings = std::map<std::string, std::string>;

// Loads `<name>.txt` template files from a prompts directory.
// Rendering substitutes every `{name}` placeholder and fails if a
// binding is missing or a placeholder would remain in the output.
class PromptLibrary {
public:
    // Empty dir falls back to $TSB_PROMPT_DIR, then the build-time
    // default prompts directory.
    explicit PromptLibrary(std::string dir = {});

    std::string render(TemplateId id, const Bindings& bindings) const;
    const std::string& body(TemplateId id) const;

private:
    std::string dir_;
    mutable std::map<TemplateId, std::string> cache_;
};

// One activity per line: <verb> "<item_name>" around <Day MM/DD/YYYY hAM/PM>.
// No trailing newline.
std::string format_activities(std::span<const Activity> activities);

// "Day MM/DD/YYYY hAM/PM - Day MM/DD/YYYY hAM/PM" for a segment.
std::string format_time_range(std::int64_t start_ts, std::int64_t end_ts);

}  // namespace tsb
