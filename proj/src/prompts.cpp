#include "tsb/prompts.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsb/util.hpp"

#ifndef TSB_DEFAULT_PROMPT_DIR
#define TSB_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace tsb {

const char* template_name(TemplateId id) {
    switch (id) {
        case TemplateId::single_step: return "single_step";
        case TemplateId::segment: return "segment";
        case TemplateId::segment_with_feedback: return "segment_with_feedback";
        case TemplateId::query_consistency: return "query_consistency";
        case TemplateId::question_generation: return "question_generation";
        case TemplateId::question_answering: return "question_answering";
        case TemplateId::combine_segments: return "combine_segments";
        case TemplateId::predict_task: return "predict_task";
        case TemplateId::predict_task_with_recent: return "predict_task_with_recent";
        case TemplateId::extract_entities: return "extract_entities";
    }
    return "";
}

PromptLibrary::PromptLibrary(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) {
        if (const char* env = std::getenv("TSB_PROMPT_DIR")) dir_ = env;
    }
    if (dir_.empty()) dir_ = TSB_DEFAULT_PROMPT_DIR;
}

const std::string& PromptLibrary::body(TemplateId id) const {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    std::filesystem::path path = std::filesystem::path(dir_) / (std::string(template_name(id)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RenderError("prompt template not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    // The file's final newline is an artifact of the file format, not
    // part of the prompt body.
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return cache_.emplace(id, std::move(text)).first->second;
}

std::string PromptLibrary::render(TemplateId id, const Bindings& bindings) const {
    const std::string& tmpl = body(id);
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    while (pos < tmpl.size()) {
        size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        size_t close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        std::string name = tmpl.substr(open + 1, close - open - 1);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw RenderError("missing placeholder binding: " + name);
        }
        out += it->second;
        pos = close + 1;
    }
    return out;
}

std::string format_activities(std::span<const Activity> activities) {
    std::string out;
    for (size_t i = 0; i < activities.size(); ++i) {
        if (i) out += '\n';
        const Activity& a = activities[i];
        out += verb_name(a.verb);
        out += " \"";
        out += a.item_name;
        out += "\" around ";
        out += format_timestamp(a.timestamp);
    }
    return out;
}

std::string format_time_range(std::int64_t start_ts, std::int64_t end_ts) {
    return format_timestamp(start_ts) + " - " + format_timestamp(end_ts);
}

}  // namespace tsb
