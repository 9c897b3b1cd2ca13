#include "sgxp/clf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

EvaluationReport evaluate(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truths,
                          const std::vector<std::string>& classes,
                          const std::vector<std::string>& exclude_from_macro) {
    if (predictions.size() != truths.size()) throw ArgumentError("prediction and truth counts differ");
    if (classes.empty()) throw ArgumentError("class list is empty");
    const std::size_t k = classes.size();
    for (const auto& e : exclude_from_macro) {
        if (std::find(classes.begin(), classes.end(), e) == classes.end()) {
            throw ArgumentError("excluded class '" + e + "' is not a class");
        }
    }
    EvaluationReport r;
    r.classes = classes;
    r.macro_excluded = exclude_from_macro;
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] >= k || predictions[i] >= k) {
            throw ArgumentError("label " + std::to_string(std::max(truths[i], predictions[i])) + " at position " +
                                std::to_string(i) + " is outside the class set");
        }
        ++r.confusion[truths[i]][predictions[i]];
    }
    std::size_t correct = 0, macro_n = 0;
    double macro_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        ClassScores s;
        s.name = classes[c];
        s.tp = r.confusion[c][c];
        for (std::size_t o = 0; o < k; ++o) {
            s.support += r.confusion[c][o];
            if (o != c) {
                s.fn += r.confusion[c][o];
                s.fp += r.confusion[o][c];
            }
        }
        s.precision = ratio(s.tp, s.tp + s.fp);
        s.recall = ratio(s.tp, s.tp + s.fn);
        s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        correct += s.tp;
        if (std::find(exclude_from_macro.begin(), exclude_from_macro.end(), s.name) == exclude_from_macro.end()) {
            macro_sum += s.f1;
            ++macro_n;
        }
        r.per_class.push_back(s);
    }
    r.macro_f1 = macro_n ? macro_sum / static_cast<double>(macro_n) : 0.0;
    r.accuracy = ratio(correct, truths.size());
    return r;
}

nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_class) {
        per.push_back({{"class", s.name},
                       {"tp", s.tp},
                       {"fp", s.fp},
                       {"fn", s.fn},
                       {"support", s.support},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"f1", s.f1}});
    }
    return {{"classes", r.classes},     {"confusion", r.confusion}, {"per_class", per},
            {"macro_f1", r.macro_f1},   {"accuracy", r.accuracy},   {"macro_excluded", r.macro_excluded}};
}

std::string to_text(const EvaluationReport& r) {
    std::size_t w = 9;
    for (const auto& c : r.classes) w = std::max(w, c.size() + 2);
    std::ostringstream out;
    out << pad("truth\\pred", w);
    for (const auto& c : r.classes) out << pad(c, w);
    out << '\n';
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
        out << pad(r.classes[i], w);
        for (auto v : r.confusion[i]) out << pad(std::to_string(v), w);
        out << '\n';
    }
    out << '\n' << pad("class", w) << pad("precision", 11) << pad("recall", 11) << pad("f1", 11) << pad("support", 9)
        << '\n';
    for (const auto& s : r.per_class) {
        out << pad(s.name, w) << pad(fixed(s.precision), 11) << pad(fixed(s.recall), 11) << pad(fixed(s.f1), 11)
            << pad(std::to_string(s.support), 9) << '\n';
    }
    out << '\n' << "macro-F1 " << fixed(r.macro_f1);
    if (!r.macro_excluded.empty()) {
        out << " (excluding";
        for (const auto& e : r.macro_excluded) out << ' ' << e;
        out << ')';
    }
    out << "\naccuracy " << fixed(r.accuracy) << '\n';
    return out.str();
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ArgumentError("score and label counts differ");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ArgumentError("ROC labels must be 0 or 1");
        (l ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw ArgumentError("ROC needs at least one positive and one negative");
    for (double s : scores) {
        if (std::isnan(s)) throw ArgumentError("ROC score is NaN");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    RocCurve roc;
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    // Integer trapezoids: area * pos * neg accumulates exactly.
    double area2 = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        const std::size_t tp0 = tp, fp0 = fp;
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
        area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
        roc.thresholds.push_back(s);
    }
    roc.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ArgumentError("paired samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (std::isnan(diff)) throw ArgumentError("paired difference is NaN");
        if (diff != 0.0) d.push_back(diff);
    }
    WilcoxonResult r;
    r.n_effective = d.size();
    if (d.empty()) {
        r.degenerate = true;
        return r;
    }
    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(d[x]) < std::abs(d[y]); });
    // Doubled ranks stay integral under averaging: a tie over 1-based ranks i..j gets i + j.
    std::vector<long> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = static_cast<long>(i + 1 + j + 1);
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    long plus2 = 0, total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) plus2 += rank2[i];
    }
    const long w2 = std::min(plus2, total2 - plus2);
    r.statistic = static_cast<double>(w2) / 2.0;
    if (n <= 25) {
        r.exact = true;
        // count[s] = number of sign assignments whose doubled positive sum is s.
        std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        long reach = 0;
        for (long rk : rank2) {
            for (long s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + rk)] += count[static_cast<std::size_t>(s)];
            reach += rk;
        }
        double tail = 0.0;
        for (long s = 0; s <= w2; ++s) tail += count[static_cast<std::size_t>(s)];
        r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = (r.statistic - mean) / std::sqrt(var);
        r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    return r;
}

nlohmann::json to_json(const WilcoxonResult& w) {
    return {{"statistic", w.statistic},
            {"p_value", w.p_value},
            {"n_effective", w.n_effective},
            {"exact", w.exact},
            {"degenerate", w.degenerate}};
}

}  // namespace sgxp
