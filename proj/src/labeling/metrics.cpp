#include "ventsim/labeling/metrics.hpp"

#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ventsim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : kNaN; }

Json number_or_null(double v)
{
    if (std::isnan(v)) return nullptr;
    return v;
}

Json quartiles_json(const Quartiles& q)
{
    return Json{{"n", q.n},
                {"q1", number_or_null(q.q1)},
                {"median", number_or_null(q.median)},
                {"q3", number_or_null(q.q3)}};
}

} // namespace

ClassMetrics metrics_from_counts(long tp, long fp, long fn, long tn)
{
    ClassMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.tn = tn;
    m.tpr = ratio(tp, tp + fn);
    m.tnr = ratio(tn, tn + fp);
    m.ppv = ratio(tp, tp + fp);
    m.balanced_accuracy = 0.5 * (m.tpr + m.tnr);
    return m;
}

Quartiles quartiles(std::vector<double> v)
{
    Quartiles q;
    q.n = v.size();
    if (v.empty()) {
        q.q1 = q.median = q.q3 = kNaN;
        return q;
    }
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double h = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    return q;
}

std::string format_metric(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

DetectorReport score_detector(const std::vector<BreathLabel>& truth,
                              const std::vector<Prediction>& predicted, const Thresholds& thresholds)
{
    if (truth.size() != predicted.size()) {
        throw AlignmentError("truth has " + std::to_string(truth.size()) + " breaths, predictions " +
                             std::to_string(predicted.size()));
    }
    DetectorReport r;
    r.thresholds = thresholds;
    std::array<std::vector<double>, kAsynchronyClassCount> start_err, end_err;

    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        const auto& p = predicted[i];
        AsynchronyClass pc;
        if (p.cls) {
            pc = *p.cls;
        } else {
            pc = classify_breath(p.start_delay_ms, p.end_delay_ms, p.triggered, thresholds);
        }
        ++r.confusion[index_of(t.cls)][index_of(pc)];
        if (t.start_delay_ms && p.start_delay_ms) {
            start_err[index_of(t.cls)].push_back(*p.start_delay_ms - *t.start_delay_ms);
        }
        if (t.end_delay_ms && p.end_delay_ms) {
            end_err[index_of(t.cls)].push_back(*p.end_delay_ms - *t.end_delay_ms);
        }
    }

    long total = 0;
    for (const auto& row : r.confusion) {
        for (long c : row) total += c;
    }
    for (std::size_t k = 0; k < kAsynchronyClassCount; ++k) {
        long tp = r.confusion[k][k];
        long fn = 0, fp = 0;
        for (std::size_t j = 0; j < kAsynchronyClassCount; ++j) {
            if (j == k) continue;
            fn += r.confusion[k][j];
            fp += r.confusion[j][k];
        }
        r.per_class[k] = metrics_from_counts(tp, fp, fn, total - tp - fp - fn);
        r.start_error[k] = quartiles(start_err[k]);
        r.end_error[k] = quartiles(end_err[k]);
    }
    return r;
}

Json DetectorReport::to_json() const
{
    Json classes = Json::object();
    for (auto c : kReportColumns) {
        const auto& m = per_class[index_of(c)];
        classes[std::string(to_string(c))] = Json{
            {"tp", m.tp},
            {"fp", m.fp},
            {"fn", m.fn},
            {"tn", m.tn},
            {"tpr", number_or_null(m.tpr)},
            {"tnr", number_or_null(m.tnr)},
            {"ppv", number_or_null(m.ppv)},
            {"balanced_accuracy", number_or_null(m.balanced_accuracy)},
            {"start_delay_error_ms", quartiles_json(start_error[index_of(c)])},
            {"end_delay_error_ms", quartiles_json(end_error[index_of(c)])},
        };
    }
    Json labels = Json::array();
    for (auto c : kAllClasses) labels.push_back(std::string(to_string(c)));
    Json matrix = Json::array();
    for (const auto& row : confusion) matrix.push_back(row);
    return Json{{"thresholds", ventsim::to_json(thresholds)},
                {"classes", classes},
                {"confusion", Json{{"labels", labels}, {"rows_truth_cols_predicted", matrix}}}};
}

std::string DetectorReport::metrics_table_csv() const
{
    std::ostringstream os;
    os << "metric";
    for (auto c : kReportColumns) os << ',' << to_string(c);
    os << '\n';
    auto row = [&](const char* name, double ClassMetrics::*field) {
        os << name;
        for (auto c : kReportColumns) os << ',' << format_metric(per_class[index_of(c)].*field);
        os << '\n';
    };
    row("true_positive_rate", &ClassMetrics::tpr);
    row("true_negative_rate", &ClassMetrics::tnr);
    row("positive_predictive_value", &ClassMetrics::ppv);
    row("balanced_accuracy", &ClassMetrics::balanced_accuracy);
    return os.str();
}

std::string DetectorReport::delay_error_csv() const
{
    std::ostringstream os;
    os << "class,delay,n,q1_ms,median_ms,q3_ms\n";
    auto line = [&](AsynchronyClass c, const char* which, const Quartiles& q) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.6g,%.6g,%.6g\n",
                      std::string(to_string(c)).c_str(), which, q.n, q.q1, q.median, q.q3);
        os << buf;
    };
    for (auto c : kReportColumns) {
        if (c == AsynchronyClass::IneffectiveEffort) continue;
        line(c, "start", start_error[index_of(c)]);
        line(c, "end", end_error[index_of(c)]);
    }
    return os.str();
}

} // namespace ventsim
