#include "ventsim/datagen/evaluate.hpp"

#include "ventsim/datagen/io.hpp"
#include "ventsim/error.hpp"
#include "ventsim/json.hpp"

#include <map>

namespace ventsim {

namespace fs = std::filesystem;

std::vector<TruthBreath> load_truth(const fs::path& dataset_dir)
{
    Json manifest;
    try {
        manifest = Json::parse(read_file(dataset_dir / "manifest.json"));
    } catch (const Json::parse_error& e) {
        throw ValidationError("dataset manifest is not valid JSON: " + std::string(e.what()));
    }
    std::vector<TruthBreath> out;
    for (const auto& r : manifest.at("records")) {
        if (r.at("status") != "ok") continue;
        const std::string id = r.at("id").get<std::string>();
        for (auto& l : parse_labels(read_table(dataset_dir / id / "labels.csv"))) {
            out.push_back({{id, l.breath_idx}, l});
        }
    }
    return out;
}

std::vector<PredictedBreath> parse_predictions(const Table& t)
{
    const std::size_t cr = t.column("record_id"), cb = t.column("breath_idx");
    const bool by_class = t.has_column("class");
    if (!by_class && !(t.has_column("start_delay_ms") && t.has_column("end_delay_ms"))) {
        throw ValidationError("predictions need a class column or start_delay_ms and end_delay_ms");
    }
    std::vector<PredictedBreath> out;
    for (const auto& row : t.rows) {
        PredictedBreath p;
        p.ref.record = row[cr];
        try {
            p.ref.breath_idx = std::stoul(row[cb]);
        } catch (const std::exception&) {
            throw ValidationError("bad breath_idx '" + row[cb] + "'");
        }
        if (by_class) {
            p.prediction.cls = parse_asynchrony_class(row[t.column("class")]);
            if (!p.prediction.cls) throw ValidationError("unknown class '" + row[t.column("class")] + "'");
        } else {
            const auto& s = row[t.column("start_delay_ms")];
            const auto& e = row[t.column("end_delay_ms")];
            p.prediction.triggered = !s.empty();
            if (!s.empty()) p.prediction.start_delay_ms = std::stod(s);
            if (!e.empty()) p.prediction.end_delay_ms = std::stod(e);
        }
        out.push_back(std::move(p));
    }
    return out;
}

DetectorReport evaluate_predictions(const std::vector<TruthBreath>& truth,
                                    const std::vector<PredictedBreath>& predicted,
                                    const Thresholds& thresholds)
{
    std::map<BreathRef, std::size_t> where;
    for (std::size_t i = 0; i < truth.size(); ++i) where.emplace(truth[i].ref, i);

    std::vector<std::optional<Prediction>> aligned(truth.size());
    std::vector<std::string> offenders;
    auto name = [](const BreathRef& r) { return r.record + "/" + std::to_string(r.breath_idx); };
    for (const auto& p : predicted) {
        auto it = where.find(p.ref);
        if (it == where.end()) offenders.push_back("unknown " + name(p.ref));
        else if (aligned[it->second]) offenders.push_back("duplicate " + name(p.ref));
        else aligned[it->second] = p.prediction;
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!aligned[i]) offenders.push_back("missing " + name(truth[i].ref));
    }
    if (!offenders.empty()) {
        std::string msg = std::to_string(offenders.size()) + " misaligned breath reference(s):";
        for (std::size_t i = 0; i < offenders.size() && i < 20; ++i) msg += " " + offenders[i] + ";";
        if (offenders.size() > 20) msg += " ...";
        throw AlignmentError(msg);
    }

    std::vector<BreathLabel> labels;
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        labels.push_back(truth[i].label);
        preds.push_back(*aligned[i]);
    }
    return score_detector(labels, preds, thresholds);
}

void write_report(const DetectorReport& report, const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "report.json", report.to_json().dump(2) + "\n");
    write_file_atomic(out_dir / "metrics.csv", report.metrics_table_csv());
    write_file_atomic(out_dir / "delay_errors.csv", report.delay_error_csv());
}

std::string predictions_csv(const std::vector<TruthBreath>& truth, bool as_delays)
{
    std::string out = as_delays ? "record_id,breath_idx,start_delay_ms,end_delay_ms\n"
                                : "record_id,breath_idx,class\n";
    for (const auto& t : truth) {
        out += t.ref.record + ',' + std::to_string(t.ref.breath_idx) + ',';
        if (as_delays) {
            if (t.label.start_delay_ms) out += format_number(*t.label.start_delay_ms);
            out += ',';
            if (t.label.end_delay_ms) out += format_number(*t.label.end_delay_ms);
        } else {
            out += std::string(to_string(t.label.cls));
        }
        out += '\n';
    }
    return out;
}

} // namespace ventsim
