#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace sgxp {

struct ClassScores {
    std::string name;
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvaluationReport {
    std::vector<std::string> classes;
    /// confusion[truth][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<ClassScores> per_class;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    /// Classes left out of macro_f1 (all of them enter the other fields).
    std::vector<std::string> macro_excluded;
};

/// One-vs-rest counts per class; 0/0 precision or recall is 0. Labels index `classes`.
EvaluationReport evaluate(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truths,
                          const std::vector<std::string>& classes,
                          const std::vector<std::string>& exclude_from_macro = {});

/// Keys: classes, confusion, per_class, macro_f1, accuracy, macro_excluded.
nlohmann::json to_json(const EvaluationReport& r);
/// Aligned plain-text table: confusion matrix, then per-class scores and macro-F1.
std::string to_text(const EvaluationReport& r);

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
    /// thresholds[i] is the score cut for point i + 1 (point 0 is the (0, 0) origin).
    std::vector<double> thresholds;
    double auc = 0.0;
};

/// Threshold sweep over distinct scores, high to low; the trapezoidal area counts ties as 1/2.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct WilcoxonResult {
    /// Smaller of the positive and negative signed-rank sums.
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_effective = 0;
    bool exact = false;
    /// Set when every paired difference is zero.
    bool degenerate = false;
};

/// Two-sided signed-rank test. Zero differences are dropped and tied |differences| share
/// their mean rank. Exact null distribution up to 25 pairs, normal approximation (with tie
/// correction, no continuity correction) above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

nlohmann::json to_json(const WilcoxonResult& w);

}  // namespace sgxp
