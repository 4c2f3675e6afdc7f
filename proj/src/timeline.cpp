#include "tsb/timeline.hpp"

#include <algorithm>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsb/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsb {

const char* verb_name(Verb v) {
    switch (v) {
        case Verb::watched: return "watched";
        case Verb::reviewed: return "reviewed";
        case Verb::purchased: return "purchased";
        case Verb::rated: return "rated";
        case Verb::searched: return "searched";
        case Verb::visited: return "visited";
    }
    return "watched";
}

std::optional<Verb> parse_verb(const std::string& s) {
    static const std::map<std::string, Verb> names = {
        {"watched", Verb::watched},   {"reviewed", Verb::reviewed},
        {"purchased", Verb::purchased}, {"rated", Verb::rated},
        {"searched", Verb::searched}, {"visited", Verb::visited}};
    auto it = names.find(s);
    if (it == names.end()) return std::nullopt;
    return it->second;
}

const char* dataset_name(DatasetId d) {
    switch (d) {
        case DatasetId::movielens: return "movielens";
        case DatasetId::yelp: return "yelp";
        case DatasetId::amazon: return "amazon";
        case DatasetId::custom: return "custom";
    }
    return "custom";
}

std::optional<DatasetId> parse_dataset_id(const std::string& s) {
    if (s == "movielens") return DatasetId::movielens;
    if (s == "yelp") return DatasetId::yelp;
    if (s == "amazon") return DatasetId::amazon;
    if (s == "custom") return DatasetId::custom;
    return std::nullopt;
}

void FilterConfig::validate() const {
    if (!(0 < min_segment_activities && min_segment_activities <= segment_target &&
          segment_target <= n_up)) {
        throw ConfigError("require 0 < min_segment_activities <= segment_target <= n_up");
    }
    if (!(1 <= holdout && holdout < n_low)) {
        throw ConfigError("require 1 <= holdout < n_low");
    }
    if (n_low > n_up) throw ConfigError("require n_low <= n_up");
}

namespace {

std::vector<std::string> split(const std::string& line, const std::string& delim) {
    std::vector<std::string> fields;
    size_t pos = 0;
    while (true) {
        size_t next = line.find(delim, pos);
        if (next == std::string::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + delim.size();
    }
    return fields;
}

// MovieLens files come `::`, tab, or comma separated.
std::vector<std::string> split_delimited(const std::string& line) {
    if (line.find("::") != std::string::npos) return split(line, "::");
    if (line.find('\t') != std::string::npos) return split(line, "\t");
    return split(line, ",");
}

std::vector<std::string> split_categories(const std::string& s) {
    std::vector<std::string> out;
    for (auto& c : split(s, "|")) {
        auto t = trim(c);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::optional<std::int64_t> parse_epoch(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end && *end == '\0' && v >= 0) return v;
    // "YYYY-MM-DD" or "YYYY-MM-DD HH:MM:SS", interpreted as UTC
    std::tm tm{};
    if (strptime(s.c_str(), "%Y-%m-%d %H:%M:%S", &tm) || strptime(s.c_str(), "%Y-%m-%d", &tm)) {
        return static_cast<std::int64_t>(timegm(&tm));
    }
    return std::nullopt;
}

struct MovieEntry {
    std::string title;
    std::vector<std::string> categories;
};

std::map<std::string, MovieEntry> load_item_table(const fs::path& ratings_path) {
    std::vector<fs::path> candidates;
    fs::path dir = ratings_path.parent_path();
    candidates.push_back(dir / "movies.dat");
    candidates.push_back(dir / "movies.csv");
    candidates.push_back(dir / "items.dat");
    fs::path sibling = ratings_path;
    sibling.replace_extension(".items");
    candidates.push_back(sibling);
    for (const auto& p : candidates) {
        if (!fs::exists(p)) continue;
        std::ifstream in(p);
        std::map<std::string, MovieEntry> table;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto fields = split_delimited(line);
            if (fields.size() < 2) continue;
            MovieEntry e;
            e.title = trim(fields[1]);
            if (fields.size() >= 3) e.categories = split_categories(trim(fields[2]));
            table[trim(fields[0])] = std::move(e);
        }
        return table;
    }
    throw IngestError("item table not found next to " + ratings_path.string() +
                      " (looked for movies.dat, movies.csv, items.dat, " + sibling.string() + ")");
}

std::string json_string_field(const json& j, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = j.find(k);
        if (it != j.end() && it->is_string()) return it->get<std::string>();
        if (it != j.end() && it->is_number()) return it->dump();
    }
    return {};
}

std::vector<std::string> json_categories(const json& j) {
    for (const char* k : {"category", "categories"}) {
        auto it = j.find(k);
        if (it == j.end()) continue;
        if (it->is_string()) {
            auto s = it->get<std::string>();
            auto cats = split_categories(s);
            if (cats.size() <= 1 && s.find(',') != std::string::npos) {
                cats.clear();
                for (auto& c : split(s, ",")) {
                    auto t = trim(c);
                    if (!t.empty()) cats.push_back(t);
                }
            }
            return cats;
        }
        if (it->is_array()) {
            std::vector<std::string> cats;
            for (const auto& e : *it)
                if (e.is_string()) cats.push_back(e.get<std::string>());
            return cats;
        }
    }
    return {};
}

std::optional<std::int64_t> json_timestamp(const json& j) {
    for (const char* k : {"unixReviewTime", "timestamp"}) {
        auto it = j.find(k);
        if (it != j.end() && it->is_number()) return it->get<std::int64_t>();
    }
    auto it = j.find("date");
    if (it != j.end() && it->is_string()) return parse_epoch(it->get<std::string>());
    it = j.find("timestamp");
    if (it != j.end() && it->is_string()) return parse_epoch(it->get<std::string>());
    return std::nullopt;
}

using UserMap = std::map<std::string, std::vector<Activity>>;

void ingest_movielens(const fs::path& path, UserMap& users, IngestStats& stats) {
    auto items = load_item_table(path);
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_delimited(line);
        if (fields.size() < 4) {
            ++stats.skipped_records;
            continue;
        }
        auto ts = parse_epoch(trim(fields[3]));
        if (!ts) {
            ++stats.skipped_records;
            continue;
        }
        Activity a;
        a.timestamp = *ts;
        a.item_id = trim(fields[1]);
        a.verb = Verb::watched;
        a.detail = "rating " + trim(fields[2]);
        auto it = items.find(a.item_id);
        if (it != items.end()) {
            a.item_name = it->second.title;
            a.categories = it->second.categories;
        }
        if (a.item_name.empty()) {
            ++stats.skipped_records;
            continue;
        }
        users[trim(fields[0])].push_back(std::move(a));
    }
}

void ingest_review_jsonl(const fs::path& path, DatasetId ds, UserMap& users, IngestStats& stats) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++stats.skipped_records;
            continue;
        }
        std::string user = json_string_field(j, {"reviewerID", "user_id", "userId"});
        auto ts = json_timestamp(j);
        Activity a;
        a.item_id = json_string_field(j, {"asin", "business_id", "item_id"});
        a.item_name = json_string_field(j, {"item_name", "title", "name", "summary"});
        a.categories = json_categories(j);
        a.detail = json_string_field(j, {"text", "reviewText"});
        a.verb = Verb::reviewed;
        if (auto v = parse_verb(json_string_field(j, {"verb"}))) a.verb = *v;
        if (user.empty() || !ts || a.item_name.empty()) {
            ++stats.skipped_records;
            continue;
        }
        a.timestamp = *ts;
        (void)ds;
        users[user].push_back(std::move(a));
    }
}

void ingest_custom(const fs::path& path, UserMap& users, IngestStats& stats) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++stats.skipped_records;
            continue;
        }
        std::string user = json_string_field(j, {"user_id"});
        auto ts = json_timestamp(j);
        Activity a;
        a.item_id = json_string_field(j, {"item_id"});
        a.item_name = json_string_field(j, {"item_name"});
        a.categories = json_categories(j);
        a.detail = json_string_field(j, {"detail"});
        a.verb = Verb::watched;
        if (auto v = parse_verb(json_string_field(j, {"verb"}))) a.verb = *v;
        if (user.empty() || !ts || a.item_name.empty()) {
            ++stats.skipped_records;
            continue;
        }
        a.timestamp = *ts;
        users[user].push_back(std::move(a));
    }
}

}  // namespace

std::vector<UserTimeline> ingest_dataset(const std::string& path, DatasetId dataset_id,
                                         IngestStats& stats) {
    fs::path p(path);
    if (!fs::exists(p)) throw IngestError("input does not exist: " + path);

    UserMap users;
    switch (dataset_id) {
        case DatasetId::movielens: ingest_movielens(p, users, stats); break;
        case DatasetId::yelp:
        case DatasetId::amazon: ingest_review_jsonl(p, dataset_id, users, stats); break;
        case DatasetId::custom: ingest_custom(p, users, stats); break;
    }

    std::vector<UserTimeline> timelines;
    timelines.reserve(users.size());
    for (auto& [user_id, acts] : users) {
        UserTimeline t;
        t.user_id = user_id;
        t.dataset_id = dataset_id;
        t.activities = std::move(acts);
        std::stable_sort(t.activities.begin(), t.activities.end(),
                         [](const Activity& a, const Activity& b) { return a.timestamp < b.timestamp; });
        stats.activities += static_cast<int>(t.activities.size());
        timelines.push_back(std::move(t));
    }
    stats.users = static_cast<int>(timelines.size());
    return timelines;
}

std::optional<UserTimeline> filter_timeline(const UserTimeline& t, const FilterConfig& cfg) {
    const auto len = static_cast<int>(t.activities.size());
    if (len < cfg.n_low) return std::nullopt;
    UserTimeline out;
    out.user_id = t.user_id;
    out.dataset_id = t.dataset_id;
    const int keep = std::min(len, cfg.n_up);
    out.activities.assign(t.activities.end() - keep, t.activities.end());
    return out;
}

SplitTimeline split_timeline(const UserTimeline& t, const FilterConfig& cfg) {
    const auto len = static_cast<int>(t.activities.size());
    if (cfg.holdout >= len) {
        throw ConfigError("holdout " + std::to_string(cfg.holdout) +
                          " >= timeline length " + std::to_string(len));
    }
    SplitTimeline s;
    s.split_index = len - cfg.holdout;
    s.past.assign(t.activities.begin(), t.activities.begin() + s.split_index);
    s.future.assign(t.activities.begin() + s.split_index, t.activities.end());
    return s;
}

std::vector<TimeSegment> segment_past(const SplitTimeline& s, const FilterConfig& cfg) {
    const auto n = static_cast<int>(s.past.size());
    std::vector<std::pair<int, int>> bounds;  // [begin, end)
    for (int b = 0; b < n; b += cfg.segment_target) {
        bounds.emplace_back(b, std::min(b + cfg.segment_target, n));
    }
    if (bounds.size() >= 2) {
        auto& last = bounds.back();
        if (last.second - last.first < cfg.min_segment_activities) {
            bounds[bounds.size() - 2].second = last.second;
            bounds.pop_back();
        }
    }
    std::vector<TimeSegment> segments;
    for (size_t i = 0; i < bounds.size(); ++i) {
        TimeSegment seg;
        seg.index = static_cast<int>(i);
        seg.activities.assign(s.past.begin() + bounds[i].first, s.past.begin() + bounds[i].second);
        seg.start_ts = seg.activities.front().timestamp;
        seg.end_ts = seg.activities.back().timestamp;
        segments.push_back(std::move(seg));
    }
    return segments;
}

DatasetVocab build_vocab(const std::vector<UserTimeline>& timelines) {
    std::set<std::string> items, cats;
    for (const auto& t : timelines) {
        for (const auto& a : t.activities) {
            items.insert(a.item_name);
            for (const auto& c : a.categories) cats.insert(c);
        }
    }
    DatasetVocab v;
    v.items.assign(items.begin(), items.end());
    v.categories.assign(cats.begin(), cats.end());
    return v;
}

json activity_to_json(const Activity& a, const std::string& user_id, DatasetId ds) {
    json j;
    j["user_id"] = user_id;
    j["dataset_id"] = dataset_name(ds);
    j["timestamp"] = a.timestamp;
    j["item_id"] = a.item_id;
    j["item_name"] = a.item_name;
    j["categories"] = a.categories;
    j["verb"] = verb_name(a.verb);
    if (!a.detail.empty()) j["detail"] = a.detail;
    return j;
}

void write_canonical(const std::string& path, const std::vector<UserTimeline>& timelines) {
    std::ostringstream out;
    for (const auto& t : timelines) {
        for (const auto& a : t.activities) {
            out << activity_to_json(a, t.user_id, t.dataset_id).dump() << "\n";
        }
    }
    atomic_write_file(path, out.str());
}

std::vector<UserTimeline> read_canonical(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read canonical file: " + path);
    UserMap users;
    std::map<std::string, DatasetId> user_ds;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        Activity a;
        a.timestamp = j.at("timestamp").get<std::int64_t>();
        a.item_id = j.value("item_id", "");
        a.item_name = j.at("item_name").get<std::string>();
        a.categories = j.value("categories", std::vector<std::string>{});
        a.verb = parse_verb(j.value("verb", "watched")).value_or(Verb::watched);
        a.detail = j.value("detail", "");
        std::string user = j.at("user_id").get<std::string>();
        user_ds[user] = parse_dataset_id(j.value("dataset_id", "custom")).value_or(DatasetId::custom);
        users[user].push_back(std::move(a));
    }
    std::vector<UserTimeline> timelines;
    for (auto& [user_id, acts] : users) {
        UserTimeline t;
        t.user_id = user_id;
        t.dataset_id = user_ds[user_id];
        t.activities = std::move(acts);
        std::stable_sort(t.activities.begin(), t.activities.end(),
                         [](const Activity& a, const Activity& b) { return a.timestamp < b.timestamp; });
        timelines.push_back(std::move(t));
    }
    return timelines;
}

}  // namespace tsb
