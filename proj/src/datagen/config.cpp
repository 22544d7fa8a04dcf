#include "ventsim/datagen/config.hpp"

#include "ventsim/error.hpp"
#include "ventsim/rng.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ventsim {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what)
{
    throw ConfigError(path + ": " + what);
}

double number(const Json& v, const std::string& path)
{
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

template <class F>
auto rethrow_at(const std::string& path, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const ConfigError& e) {
        fail(path, e.what());
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
}

BreathingParams merge_breathing(BreathingParams b, const Json& j, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const std::string p = path + "." + key;
        if (key == "rate") b.rate = number(value, p);
        else if (key == "rate_range") {
            if (!value.is_array() || value.size() != 2) fail(p, "expected [min, max]");
            b.rate_min = number(value[0], p + "[0]");
            b.rate_max = number(value[1], p + "[1]");
        }
        else if (key == "jitter") b.jitter = number(value, p);
        else if (key == "amplitude_jitter") b.amplitude_jitter = number(value, p);
        else if (key == "effort") b.effort = merge_effort(b.effort, value, p);
        else fail(path, "unknown key '" + key + "'");
    }
    return b;
}

CardiacParams merge_cardiac(CardiacParams c, const Json& j, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const double v = number(value, path + "." + key);
        if (key == "amplitude") c.amplitude = v;
        else if (key == "heart_rate") c.heart_rate = v;
        else fail(path, "unknown key '" + key + "'");
    }
    return c;
}

Thresholds merge_thresholds(Thresholds t, const Json& j, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const double v = number(value, path + "." + key);
        if (key == "di_start_ms") t.di_start_ms = v;
        else if (key == "ec_end_ms") t.ec_end_ms = v;
        else if (key == "lc_end_ms") t.lc_end_ms = v;
        else fail(path, "unknown key '" + key + "'");
    }
    if (!(t.ec_end_ms < t.lc_end_ms) || !(t.di_start_ms > 0)) {
        fail(path, "need di_start_ms > 0 and ec_end_ms < lc_end_ms");
    }
    return t;
}

Pipeline parse_pipeline(const Json& v, const std::string& path)
{
    if (v == "closed_loop") return Pipeline::ClosedLoop;
    if (v == "staged") return Pipeline::Staged;
    fail(path, "expected \"closed_loop\" or \"staged\"");
}

const char* const kRecordKeys[] = {"archetype", "count", "pipeline", "record_length", "ventilator",
                                   "calibrate", "target_tidal_volume", "calibration_tolerance",
                                   "tubing", "solver", "breathing", "asynchrony", "noise", "cardiac"};

RecordSpec resolve_record(const Json& j, const Thresholds& thresholds, const std::string& path)
{
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : kRecordKeys) known = known || key == k;
        if (!known) fail(path, "unknown key '" + key + "'");
    }
    RecordSpec r;
    r.thresholds = thresholds;

    if (!j.contains("archetype") || !j["archetype"].is_string()) fail(path, "missing archetype name");
    const auto id = parse_archetype(j["archetype"].get<std::string>());
    if (!id) fail(path + ".archetype", "unknown archetype '" + j["archetype"].get<std::string>() + "'");
    r.archetype = *id;
    const PatientProfile profile = default_profile(r.archetype);
    r.settings.cycle_fraction = profile.cycle_fraction;
    r.breathing.effort = profile.effort;

    if (j.contains("pipeline")) r.pipeline = parse_pipeline(j["pipeline"], path + ".pipeline");
    if (j.contains("record_length")) r.record_length = number(j["record_length"], path + ".record_length");
    if (j.contains("ventilator")) {
        r.settings = rethrow_at(path + ".ventilator", [&] { return merge_settings(r.settings, j["ventilator"]); });
    }
    if (j.contains("calibrate")) {
        if (!j["calibrate"].is_boolean()) fail(path + ".calibrate", "expected a boolean");
        r.calibrate = j["calibrate"].get<bool>();
    }
    if (j.contains("target_tidal_volume")) {
        r.target_tidal_volume = number(j["target_tidal_volume"], path + ".target_tidal_volume");
    }
    if (j.contains("calibration_tolerance")) {
        r.calibration_tolerance = number(j["calibration_tolerance"], path + ".calibration_tolerance");
    }
    if (j.contains("tubing")) {
        r.tubing = rethrow_at(path + ".tubing", [&] { return merge_tubing(r.tubing, j["tubing"]); });
    }
    if (j.contains("solver")) {
        r.solver = rethrow_at(path + ".solver", [&] { return merge_solver_config(r.solver, j["solver"]); });
    }
    if (j.contains("breathing")) r.breathing = merge_breathing(r.breathing, j["breathing"], path + ".breathing");
    if (j.contains("asynchrony")) {
        const Json& a = j["asynchrony"];
        if (a == "default") r.distribution.reset();
        else if (a == "normal") r.distribution = normal_only_distribution();
        else r.distribution = rethrow_at(path + ".asynchrony", [&] { return parse_distribution(a); });
    }
    if (j.contains("noise")) {
        r.noise = rethrow_at(path + ".noise", [&] { return merge_noise(r.noise, j["noise"]); });
    }
    if (j.contains("cardiac")) r.cardiac = merge_cardiac(r.cardiac, j["cardiac"], path + ".cardiac");

    if (!(r.record_length > 0)) fail(path + ".record_length", "must be > 0");
    if (!(r.target_tidal_volume > 0)) fail(path + ".target_tidal_volume", "must be > 0");
    if (!(r.calibration_tolerance > 0 && r.calibration_tolerance < 1)) {
        fail(path + ".calibration_tolerance", "must lie in (0, 1)");
    }
    const auto& b = r.breathing;
    if (b.rate ? !(*b.rate > 0) : !(b.rate_min > 0 && b.rate_min <= b.rate_max)) {
        fail(path + ".breathing", "rate must be > 0 and rate_range ordered");
    }
    if (!(b.jitter >= 0 && b.jitter < 0.3) || !(b.amplitude_jitter >= 0 && b.amplitude_jitter < 0.3)) {
        fail(path + ".breathing", "jitter values must lie in [0, 0.3)");
    }
    if (!(r.cardiac.amplitude >= 0 && r.cardiac.heart_rate > 0)) {
        fail(path + ".cardiac", "amplitude must be >= 0 and heart_rate > 0");
    }
    rethrow_at(path + ".ventilator", [&] { r.settings.validate(); });
    rethrow_at(path + ".tubing", [&] { r.tubing.validate(); });
    rethrow_at(path + ".solver", [&] { r.solver.validate(); });
    rethrow_at(path + ".breathing.effort", [&] { r.breathing.effort.validate(); });
    rethrow_at(path + ".noise", [&] { r.noise.validate(r.solver.output_rate); });
    return r;
}

void finish_record(RecordSpec& r, std::uint64_t master, std::size_t index)
{
    r.index = index;
    r.id = record_id(index);
    r.seed = mix_seed(master, index);
    Rng rng(stream_seed(r, SeedStream::Cardiac));
    r.cardiac.phase = rng.uniform(0.0, 60.0 / r.cardiac.heart_rate);
}

} // namespace

EffortShape merge_effort(EffortShape s, const Json& j, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const double v = number(value, path + "." + key);
        if (key == "amplitude") s.amplitude = v;
        else if (key == "rise_time") s.rise_time = v;
        else if (key == "plateau_time") s.plateau_time = v;
        else if (key == "fall_time") s.fall_time = v;
        else if (key == "corner_smoothing") s.corner_smoothing = v;
        else fail(path, "unknown key '" + key + "'");
    }
    return s;
}

Json effort_json(const EffortShape& s)
{
    return Json{{"amplitude", s.amplitude},
                {"rise_time", s.rise_time},
                {"plateau_time", s.plateau_time},
                {"fall_time", s.fall_time},
                {"corner_smoothing", s.corner_smoothing}};
}

std::string_view to_string(Pipeline p)
{
    return p == Pipeline::Staged ? "staged" : "closed_loop";
}

PatientProfile default_profile(ArchetypeId id)
{
    // Chosen per archetype so Normal breaths keep their trigger and cycle
    // delays clear of the class thresholds, with effort long enough for a
    // compound DI+EC. ARDS3 cycles early with every shape tried.
    const EffortShape brisk{5.0, 0.45, 0.35, 0.15, 0.05};
    const EffortShape slow{3.0, 0.2, 0.35, 0.35, 0.05};
    switch (id) {
    case ArchetypeId::Healthy: return {brisk, 0.10};
    case ArchetypeId::Obese1: return {slow, 0.40};
    case ArchetypeId::Obese2: return {slow, 0.40};
    case ArchetypeId::ARDS1: return {slow, 0.30};
    case ArchetypeId::ARDS2: return {{8.0, 0.45, 0.35, 0.15, 0.05}, 0.10};
    case ArchetypeId::ARDS3: return {{12.0, 0.2, 0.35, 0.35, 0.05}, 0.02};
    case ArchetypeId::Fibrosis: return {slow, 0.10};
    case ArchetypeId::COPD1: return {{5.0, 0.2, 0.35, 0.35, 0.05}, 0.30};
    case ArchetypeId::COPD2: return {{5.0, 0.2, 0.35, 0.35, 0.05}, 0.40};
    }
    return {brisk, 0.25};
}

double RecordSpec::respiratory_rate() const
{
    if (breathing.rate) return *breathing.rate;
    Rng rng(stream_seed(*this, SeedStream::Rate));
    return rng.uniform(breathing.rate_min, breathing.rate_max);
}

Json RecordSpec::to_json() const
{
    Json b{{"respiratory_rate", respiratory_rate()},
           {"jitter", breathing.jitter},
           {"amplitude_jitter", breathing.amplitude_jitter},
           {"effort", effort_json(breathing.effort)}};
    if (!breathing.rate) b["rate_range"] = Json::array({breathing.rate_min, breathing.rate_max});
    return Json{{"id", id},
                {"index", index},
                {"seed", seed},
                {"archetype", std::string(ventsim::to_string(archetype))},
                {"pipeline", std::string(ventsim::to_string(pipeline))},
                {"record_length", record_length},
                {"ventilator", ventsim::to_json(settings)},
                {"calibrate", calibrate},
                {"target_tidal_volume", target_tidal_volume},
                {"calibration_tolerance", calibration_tolerance},
                {"tubing", ventsim::to_json(tubing)},
                {"solver", ventsim::to_json(solver)},
                {"breathing", b},
                {"asynchrony", ventsim::to_json(distribution.value_or(default_distribution(archetype)))},
                {"noise", ventsim::to_json(noise)},
                {"cardiac",
                 Json{{"amplitude", cardiac.amplitude},
                      {"heart_rate", cardiac.heart_rate},
                      {"phase", cardiac.phase}}},
                {"label_thresholds", ventsim::to_json(thresholds)}};
}

std::string record_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "rec_%04zu", index);
    return buf;
}

std::uint64_t stream_seed(const RecordSpec& r, SeedStream s)
{
    return mix_seed(r.seed, static_cast<std::uint64_t>(s));
}

RecordSpec parse_record_spec(const Json& j, std::uint64_t seed, std::size_t index)
{
    if (!j.is_object()) fail("record", "expected an object");
    Json copy = j;
    copy.erase("count");
    RecordSpec r = resolve_record(copy, Thresholds{}, "record");
    finish_record(r, seed, index);
    return r;
}

RunConfig parse_run_config(const Json& j)
{
    if (!j.is_object()) fail("config", "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key != "master_seed" && key != "output_dir" && key != "defaults" && key != "records" &&
            key != "label_thresholds") {
            fail("config", "unknown key '" + key + "'");
        }
    }
    RunConfig cfg;
    cfg.source = j;
    if (j.contains("master_seed")) {
        const Json& s = j["master_seed"];
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
            fail("config.master_seed", "expected a non-negative integer");
        }
        cfg.master_seed = s.get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) fail("config.output_dir", "expected a string");
        cfg.output_dir = j["output_dir"].get<std::string>();
    }
    Thresholds thresholds;
    if (j.contains("label_thresholds")) {
        thresholds = merge_thresholds(thresholds, j["label_thresholds"], "config.label_thresholds");
    }
    Json defaults = Json::object();
    if (j.contains("defaults")) {
        defaults = j["defaults"];
        if (!defaults.is_object()) fail("config.defaults", "expected an object");
    }
    if (!j.contains("records") || !j["records"].is_array() || j["records"].empty()) {
        fail("config.records", "expected a non-empty array");
    }

    std::size_t index = 0;
    for (std::size_t e = 0; e < j["records"].size(); ++e) {
        const std::string path = "config.records[" + std::to_string(e) + "]";
        const Json& entry = j["records"][e];
        if (!entry.is_object()) fail(path, "expected an object");
        Json merged = defaults;
        merged.merge_patch(entry);
        std::size_t count = 1;
        if (merged.contains("count")) {
            const Json& c = merged["count"];
            if (!c.is_number_unsigned() || c.get<std::size_t>() == 0) fail(path + ".count", "expected a positive integer");
            count = c.get<std::size_t>();
            merged.erase("count");
        }
        const RecordSpec base = resolve_record(merged, thresholds, path);
        for (std::size_t k = 0; k < count; ++k) {
            RecordSpec r = base;
            finish_record(r, cfg.master_seed, index++);
            cfg.records.push_back(std::move(r));
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

SimulationInputs build_record_inputs(const RecordSpec& r, double p_insp)
{
    SimulationInputs in;
    in.setup.patient = archetype(r.archetype);
    in.setup.settings = r.settings;
    in.setup.settings.p_insp = p_insp;
    in.setup.tubing = r.tubing;
    in.setup.solver = r.solver;
    in.setup.cardiac = r.cardiac;
    in.setup.mode = ControlMode::ClosedLoop;
    BreathPlanOptions o;
    o.shape = r.breathing.effort;
    o.amplitude_jitter = r.breathing.amplitude_jitter;
    in.breaths = build_breath_plan(r.respiratory_rate(), r.record_length, r.breathing.jitter,
                                   stream_seed(r, SeedStream::Breaths), o);
    in.asynchrony = build_asynchrony_plan(in.breaths, r.archetype, r.distribution,
                                          stream_seed(r, SeedStream::Asynchrony));
    return in;
}

} // namespace ventsim
