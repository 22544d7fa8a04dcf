#include "ventsim/datagen/dataset.hpp"

#include "ventsim/datagen/io.hpp"
#include "ventsim/error.hpp"

#include <cstdlib>
#include <map>

namespace ventsim {

namespace fs = std::filesystem;

Json counts_json(const std::array<long, kAsynchronyClassCount>& counts)
{
    Json j = Json::object();
    for (auto c : kAllClasses) j[std::string(to_string(c))] = counts[index_of(c)];
    return j;
}

std::array<long, kAsynchronyClassCount> LabeledRecord::class_counts() const
{
    std::array<long, kAsynchronyClassCount> n{};
    for (const auto& l : labels) ++n[index_of(l.cls)];
    return n;
}

Json LabeledRecord::manifest(const Json& config) const
{
    std::array<long, kAsynchronyClassCount> intents{};
    for (const auto& l : labels) {
        if (l.intent) ++intents[index_of(*l.intent)];
    }
    Json truncated = Json::array();
    for (auto i : segmentation.truncated) truncated.push_back(i);
    Json autos = Json::array();
    for (double t : segmentation.auto_triggers) autos.push_back(t);
    const auto& st = trajectory.stats;
    return Json{
        {"generator", Json{{"name", kGeneratorName}, {"version", kGeneratorVersion}}},
        {"record", spec.to_json()},
        {"p_insp", p_insp},
        {"calibration", calibration ? calibration->to_json() : Json(nullptr)},
        {"frc", trajectory.frc},
        {"samples", trajectory.samples.size()},
        {"output_rate", spec.solver.output_rate},
        {"columns", Json::array({"t", "paw", "flow", "vol", "pmus", "vent_phase"})},
        {"breaths",
         Json{{"planned", inputs.breaths.size()},
              {"labeled", labels.size()},
              {"truncated", truncated},
              {"auto_triggers", autos}}},
        {"class_counts", counts_json(class_counts())},
        {"intent_counts", counts_json(intents)},
        {"label_definition",
         Json{{"thresholds", to_json(spec.thresholds)},
              {"start_delay", "trigger time minus effort onset"},
              {"end_delay", "cycle time minus effort end"},
              {"pairing_lead_tolerance_s", SegmentOptions{}.lead_tolerance}}},
        {"conservation",
         Json{{"max_constraint_violation", conservation.max_constraint_violation},
              {"flow_volume_mismatch", conservation.flow_volume_mismatch},
              {"median_tidal_volume", conservation.median_tidal_volume}}},
        {"solver_stats",
         Json{{"steps", st.steps},
              {"rejected", st.rejected},
              {"newton_iterations", st.newton_iterations},
              {"jacobians", st.jacobians}}},
        {"config", config}};
}

LabeledRecord generate_record(const RecordSpec& spec, const std::optional<CalibrationResult>& cal)
{
    if (spec.calibrate && !cal) throw CalibrationError(spec.id + ": missing calibration");
    LabeledRecord rec;
    rec.spec = spec;
    rec.calibration = spec.calibrate ? cal : std::nullopt;
    rec.p_insp = spec.calibrate ? cal->p_insp : spec.settings.p_insp;
    rec.inputs = build_record_inputs(spec, rec.p_insp);
    rec.trajectory = spec.pipeline == Pipeline::Staged ? run_staged(rec.inputs).final
                                                       : simulate(rec.inputs);
    rec.segmentation = segment_breaths(rec.trajectory.events);

    std::vector<AsynchronyClass> intents(rec.inputs.breaths.size(), AsynchronyClass::Normal);
    for (std::size_t i = 0; i < rec.inputs.asynchrony.breaths.size() && i < intents.size(); ++i) {
        intents[i] = rec.inputs.asynchrony.breaths[i].intent;
    }
    rec.labels = label_breaths(rec.segmentation, &intents, spec.thresholds);
    rec.conservation = conservation_report(rec.trajectory);

    rec.clean_samples = rec.trajectory.samples;
    add_noise(rec.trajectory.samples, spec.noise, spec.solver.output_rate,
              stream_seed(spec, SeedStream::Noise));
    return rec;
}

void write_record(const LabeledRecord& rec, const fs::path& dir, const Json& config)
{
    fs::path tmp = dir;
    tmp += ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    write_file_atomic(tmp / "waveform.csv", waveform_csv(rec.trajectory.samples));
    write_file_atomic(tmp / "labels.csv", labels_csv(rec.labels));
    write_file_atomic(tmp / "manifest.json", rec.manifest(config).dump(2) + "\n");
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

bool DatasetSummary::ok() const
{
    for (const auto& r : records) {
        if (r.status != RecordStatus::Ok) return false;
    }
    return true;
}

int DatasetSummary::exit_code() const
{
    int code = 0;
    for (const auto& r : records) {
        if (r.status == RecordStatus::SolverFailure) code = 3;
        else if (r.status == RecordStatus::ConfigFailure && code == 0) code = 2;
    }
    return code;
}

namespace {

template <class F>
void for_each_index(std::size_t n, bool parallel, F&& f)
{
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (long i = 0; i < static_cast<long>(n); ++i) f(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) f(i);
    }
}

struct CalibrationSlot {
    CalibrationRequest request;
    std::optional<CalibrationResult> result;
    std::string error;
};

const char* status_name(RecordStatus s)
{
    switch (s) {
    case RecordStatus::Ok: return "ok";
    case RecordStatus::ConfigFailure: return "config_error";
    case RecordStatus::SolverFailure: return "solver_error";
    }
    return "?";
}

} // namespace

DatasetSummary generate_dataset(const RunConfig& cfg, const fs::path& out_dir,
                                const GenerateOptions& options)
{
    fs::create_directories(out_dir);
    auto log = [&](const std::string& s) {
        if (options.log) {
#pragma omp critical(ventsim_log)
            options.log(s);
        }
    };

    // One calibration per distinct request, shared by the records using it.
    std::vector<CalibrationSlot> slots;
    std::vector<std::optional<std::size_t>> slot_of(cfg.records.size());
    {
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < cfg.records.size(); ++i) {
            if (!cfg.records[i].calibrate) continue;
            auto req = CalibrationRequest::from_record(cfg.records[i]);
            auto [it, fresh] = index.emplace(req.key(), slots.size());
            if (fresh) slots.push_back({req, std::nullopt, {}});
            slot_of[i] = it->second;
        }
    }
    for_each_index(slots.size(), options.parallel, [&](std::size_t k) {
        try {
            slots[k].result = calibrate_pinsp(slots[k].request);
            log("calibrated " + std::string(to_string(slots[k].request.archetype)) + ": P_insp " +
                format_number(slots[k].result->p_insp));
        } catch (const std::exception& e) {
            slots[k].error = e.what();
            log("calibration failed: " + slots[k].error);
        }
    });

    DatasetSummary summary;
    summary.records.resize(cfg.records.size());
    for_each_index(cfg.records.size(), options.parallel, [&](std::size_t i) {
        const RecordSpec& spec = cfg.records[i];
        RecordOutcome& out = summary.records[i];
        out.id = spec.id;
        out.archetype = spec.archetype;
        try {
            std::optional<CalibrationResult> cal;
            if (slot_of[i]) {
                const auto& slot = slots[*slot_of[i]];
                if (!slot.result) throw CalibrationError(slot.error);
                cal = slot.result;
            }
            const LabeledRecord rec = generate_record(spec, cal);
            write_record(rec, out_dir / spec.id, cfg.source);
            out.p_insp = rec.p_insp;
            out.breaths = rec.labels.size();
            out.class_counts = rec.class_counts();
            log(spec.id + " " + std::string(to_string(spec.archetype)) + ": " +
                std::to_string(out.breaths) + " breaths");
        } catch (const ConfigError& e) {
            out.status = RecordStatus::ConfigFailure;
            out.error = e.what();
        } catch (const ValidationError& e) {
            out.status = RecordStatus::ConfigFailure;
            out.error = e.what();
        } catch (const std::exception& e) {
            out.status = RecordStatus::SolverFailure;
            out.error = e.what();
        }
        if (out.status != RecordStatus::Ok) log(spec.id + " failed: " + out.error);
    });

    Json records = Json::array();
    std::map<std::string, std::array<long, kAsynchronyClassCount>> by_archetype;
    std::array<long, kAsynchronyClassCount> totals{};
    std::size_t failed = 0;
    for (const auto& r : summary.records) {
        Json e{{"id", r.id}, {"archetype", std::string(to_string(r.archetype))}, {"status", status_name(r.status)}};
        if (r.status == RecordStatus::Ok) {
            e["p_insp"] = r.p_insp;
            e["breaths"] = r.breaths;
            e["class_counts"] = counts_json(r.class_counts);
            auto& agg = by_archetype[std::string(to_string(r.archetype))];
            for (std::size_t c = 0; c < kAsynchronyClassCount; ++c) {
                agg[c] += r.class_counts[c];
                totals[c] += r.class_counts[c];
            }
        } else {
            e["error"] = r.error;
            ++failed;
        }
        records.push_back(e);
    }
    Json per_arch = Json::object();
    for (const auto& [name, counts] : by_archetype) per_arch[name] = counts_json(counts);

    summary.manifest = Json{{"generator", Json{{"name", kGeneratorName}, {"version", kGeneratorVersion}}},
                            {"master_seed", cfg.master_seed},
                            {"record_count", cfg.records.size()},
                            {"failed", failed},
                            {"records", records},
                            {"class_counts_by_archetype", per_arch},
                            {"class_counts", counts_json(totals)},
                            {"config", cfg.source}};
    write_file_atomic(out_dir / "manifest.json", summary.manifest.dump(2) + "\n");
    return summary;
}

fs::path resolve_output_dir(const std::optional<std::string>& explicit_dir, const RunConfig* cfg)
{
    if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
    if (cfg && cfg->output_dir) return *cfg->output_dir;
    if (const char* env = std::getenv("VENTSIM_OUTPUT_DIR"); env && *env) return env;
    return "ventsim_out";
}

} // namespace ventsim
