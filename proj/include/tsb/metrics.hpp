#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsb {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Eq of record: Q_s = I[sum of the 4 binary task outcomes >= m].
int quality_of(std::span<const int> outcomes, int m);

// QM: fraction of summaries judged good.
double quality_metric(std::span<const int> qualities);

// IFM: fraction of word counts <= limit.
double instruction_following_metric(std::span<const int> word_counts, int word_limit);

struct DensityPoint {
    double acc_mean = 0.0;  // mean task accuracy for one summary
    int word_count = 0;
};

// IDM: mean over summaries of acc_mean / word_count. Zero-length
// summaries are excluded; `excluded` (optional) receives their count.
double information_density_metric(std::span<const DensityPoint> points, int* excluded = nullptr);

// MAA: (TP+TN)/total over aligned binary vectors.
double metric_annotator_agreement(std::span<const int> predicted, std::span<const int> human);

double pearson(std::span<const double> x, std::span<const double> y);

struct LexicalScores {
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double bleu = 0.0;
    bool degenerate = false;  // one side tokenized to nothing
};

// Reference-free lexical overlap between a summary and the activities
// text it was generated from. ROUGE-2: bigram F1; ROUGE-L: LCS F1;
// BLEU: geometric mean of clipped 1-4-gram precisions with brevity
// penalty (candidate = summary).
LexicalScores lexical_baselines(const std::string& summary, const std::string& activities_text);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // population sd over runs
};

MeanSd mean_sd(std::span<const double> values);

}  // namespace tsb
