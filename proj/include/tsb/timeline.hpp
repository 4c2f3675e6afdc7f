#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tsb {

enum class Verb { watched, reviewed, purchased, rated, searched, visited };

const char* verb_name(Verb v);
std::optional<Verb> parse_verb(const std::string& s);

enum class DatasetId { movielens, yelp, amazon, custom };

const char* dataset_name(DatasetId d);
std::optional<DatasetId> parse_dataset_id(const std::string& s);

struct Activity {
    std::int64_t timestamp = 0;   // seconds since epoch, UTC
    std::string item_id;
    std::string item_name;
    std::vector<std::string> categories;  // first entry is primary
    Verb verb = Verb::watched;
    std::string detail;

    std::string primary_category() const {
        return categories.empty() ? std::string() : categories.front();
    }
};

struct UserTimeline {
    std::string user_id;
    DatasetId dataset_id = DatasetId::custom;
    std::vector<Activity> activities;  // sorted by timestamp, stable
};

struct SplitTimeline {
    std::vector<Activity> past;
    std::vector<Activity> future;  // never empty
    int split_index = 0;
};

struct TimeSegment {
    int index = 0;
    std::int64_t start_ts = 0;
    std::int64_t end_ts = 0;
    std::vector<Activity> activities;
};

struct FilterConfig {
    int n_low = 50;
    int n_up = 200;
    int holdout = 1;
    int segment_target = 50;
    int min_segment_activities = 10;

    void validate() const;  // throws ConfigError
};

struct IngestStats {
    int users = 0;
    int activities = 0;
    int skipped_records = 0;  // malformed or empty item name
};

// Item-name and category vocabularies of a dataset, sorted and distinct.
struct DatasetVocab {
    std::vector<std::string> items;
    std::vector<std::string> categories;
};

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse raw dataset files into per-user timelines, stably sorted by
// timestamp. Malformed records are counted in `stats`, never silently
// dropped. For movielens, `path` is the ratings file and an item table
// is expected next to it (movies.dat / movies.csv / <stem>.items).
std::vector<UserTimeline> ingest_dataset(const std::string& path, DatasetId dataset_id,
                                         IngestStats& stats);

// Absent if the timeline has fewer than n_low activities; otherwise the
// most recent min(len, n_up) activities.
std::optional<UserTimeline> filter_timeline(const UserTimeline& t, const FilterConfig& cfg);

// Final `holdout` activities become the future; the rest the past.
SplitTimeline split_timeline(const UserTimeline& t, const FilterConfig& cfg);

// Chronological chunks of segment_target activities; a trailing chunk
// smaller than min_segment_activities merges into its predecessor.
std::vector<TimeSegment> segment_past(const SplitTimeline& s, const FilterConfig& cfg);

DatasetVocab build_vocab(const std::vector<UserTimeline>& timelines);

// Canonical persisted form: one JSON record per line.
nlohmann::json activity_to_json(const Activity& a, const std::string& user_id, DatasetId ds);
void write_canonical(const std::string& path, const std::vector<UserTimeline>& timelines);
std::vector<UserTimeline> read_canonical(const std::string& path);

}  // namespace tsb
