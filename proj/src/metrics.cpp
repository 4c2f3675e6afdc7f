#include "tsb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tsb/util.hpp"

namespace tsb {

int quality_of(std::span<const int> outcomes, int m) {
    if (outcomes.size() != 4) {
        throw MetricError("expected 4 task outcomes, got " + std::to_string(outcomes.size()));
    }
    int sum = std::accumulate(outcomes.begin(), outcomes.end(), 0);
    return sum >= m ? 1 : 0;
}

double quality_metric(std::span<const int> qualities) {
    if (qualities.empty()) throw MetricError("quality_metric over empty set");
    return std::accumulate(qualities.begin(), qualities.end(), 0.0) /
           static_cast<double>(qualities.size());
}

double instruction_following_metric(std::span<const int> word_counts, int word_limit) {
    if (word_counts.empty()) throw MetricError("instruction_following_metric over empty set");
    if (word_limit <= 0) throw MetricError("word limit must be positive");
    auto within = std::count_if(word_counts.begin(), word_counts.end(),
                                [&](int c) { return c <= word_limit; });
    return static_cast<double>(within) / static_cast<double>(word_counts.size());
}

double information_density_metric(std::span<const DensityPoint> points, int* excluded) {
    double sum = 0.0;
    int n = 0;
    int skipped = 0;
    for (const auto& p : points) {
        if (p.word_count <= 0) {
            ++skipped;
            continue;
        }
        sum += p.acc_mean / static_cast<double>(p.word_count);
        ++n;
    }
    if (excluded) *excluded = skipped;
    if (n == 0) throw MetricError("information_density_metric over empty set");
    return sum / static_cast<double>(n);
}

double metric_annotator_agreement(std::span<const int> predicted, std::span<const int> human) {
    if (predicted.empty() || predicted.size() != human.size()) {
        throw MetricError("agreement requires equal non-empty vectors");
    }
    int agree = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if ((predicted[i] != 0) == (human[i] != 0)) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(predicted.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw MetricError("pearson requires two equal-length vectors of size >= 2");
    }
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw MetricError("pearson undefined: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<NGram, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        counts[NGram(tokens.begin() + i, tokens.begin() + i + n)]++;
    }
    return counts;
}

int overlap(const std::map<NGram, int>& a, const std::map<NGram, int>& b) {
    int total = 0;
    for (const auto& [gram, count] : a) {
        auto it = b.find(gram);
        if (it != b.end()) total += std::min(count, it->second);
    }
    return total;
}

double f1(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

LexicalScores lexical_baselines(const std::string& summary, const std::string& activities_text) {
    LexicalScores scores;
    auto cand = tokenize(summary);
    auto ref = tokenize(activities_text);
    if (cand.empty() || ref.empty()) {
        scores.degenerate = true;
        return scores;
    }

    // ROUGE-2
    auto cand2 = ngram_counts(cand, 2);
    auto ref2 = ngram_counts(ref, 2);
    int hits2 = overlap(cand2, ref2);
    int cand2_total = std::max<int>(0, static_cast<int>(cand.size()) - 1);
    int ref2_total = std::max<int>(0, static_cast<int>(ref.size()) - 1);
    if (cand2_total > 0 && ref2_total > 0) {
        scores.rouge2 = f1(static_cast<double>(hits2) / cand2_total,
                           static_cast<double>(hits2) / ref2_total);
    }

    // ROUGE-L
    int lcs = lcs_length(cand, ref);
    scores.rougeL = f1(static_cast<double>(lcs) / cand.size(),
                       static_cast<double>(lcs) / ref.size());

    // BLEU-4 with brevity penalty, no smoothing
    double log_sum = 0.0;
    bool zero_precision = false;
    for (int n = 1; n <= 4; ++n) {
        auto cn = ngram_counts(cand, n);
        auto rn = ngram_counts(ref, n);
        int total = std::max<int>(0, static_cast<int>(cand.size()) - n + 1);
        int clipped = overlap(cn, rn);
        if (total == 0 || clipped == 0) {
            zero_precision = true;
            break;
        }
        log_sum += std::log(static_cast<double>(clipped) / total);
    }
    if (!zero_precision) {
        double bp = cand.size() >= ref.size()
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());
        scores.bleu = bp * std::exp(log_sum / 4.0);
    }
    return scores;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd out;
    if (values.empty()) throw MetricError("mean_sd over empty set");
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(var / static_cast<double>(values.size()));
    return out;
}

}  // namespace tsb
