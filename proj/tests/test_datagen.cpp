#include "doctest.h"

#include "ventsim/datagen/calibrate.hpp"
#include "ventsim/datagen/config.hpp"
#include "ventsim/datagen/dataset.hpp"
#include "ventsim/datagen/evaluate.hpp"
#include "ventsim/datagen/io.hpp"
#include "ventsim/datagen/noise.hpp"
#include "ventsim/datagen/plot.hpp"
#include "ventsim/error.hpp"
#include "ventsim/rng.hpp"
#include "ventsim/labeling/labels.hpp"

#include "oracle.hpp"

#include <cmath>
#include <filesystem>

using namespace ventsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("ventsim_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<Sample> flat_samples(std::size_t n)
{
    std::vector<Sample> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i].t = i / 100.0;
        s[i].paw = 5.0;
        s[i].flow = 0.1;
        s[i].vol = 0.2;
        s[i].pmus = -1.0;
    }
    return s;
}

Json small_config(std::uint64_t seed)
{
    return Json::parse(R"({
      "master_seed": )" + std::to_string(seed) + R"(,
      "defaults": {"record_length": 20, "breathing": {"rate": 15}},
      "records": [
        {"archetype": "Healthy", "count": 2},
        {"archetype": "COPD1", "asynchrony": "normal"}
      ]})");
}

} // namespace

TEST_SUITE("noise")
{
    TEST_CASE("zero stds leave the channels untouched")
    {
        auto s = flat_samples(500);
        const auto before = s;
        NoiseParams p;
        p.pressure_std = 0;
        p.flow_std = 0;
        add_noise(s, p, 100, 1);
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i].paw == before[i].paw);
            CHECK(s[i].flow == before[i].flow);
        }
    }

    TEST_CASE("noise touches only pressure and flow and is seeded")
    {
        auto a = flat_samples(1000), b = flat_samples(1000), c = flat_samples(1000);
        const NoiseParams p;
        add_noise(a, p, 100, 42);
        add_noise(b, p, 100, 42);
        add_noise(c, p, 100, 43);
        bool differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].paw == b[i].paw);
            CHECK(a[i].flow == b[i].flow);
            CHECK(a[i].vol == 0.2);
            CHECK(a[i].pmus == -1.0);
            differs = differs || a[i].paw != c[i].paw;
        }
        CHECK(differs);
        double m = 0, v = 0;
        for (const auto& s : a) m += s.paw - 5.0;
        m /= a.size();
        for (const auto& s : a) v += std::pow(s.paw - 5.0 - m, 2);
        CHECK(std::abs(m) < 1e-12);
        CHECK(std::sqrt(v / a.size()) == doctest::Approx(0.1));
    }

    TEST_CASE("butterworth response")
    {
        const auto sec = butterworth_lowpass(4, 15, 100);
        CHECK(sec.size() == 2);
        CHECK(magnitude_response(sec, 0, 100) == doctest::Approx(1.0));
        CHECK(magnitude_response(sec, 15, 100) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
        // analytic Butterworth magnitude with the prewarped frequency axis
        for (double f : {2.0, 8.0, 20.0, 30.0, 45.0}) {
            const double w = std::tan(std::numbers::pi * f / 100) / std::tan(std::numbers::pi * 15 / 100);
            CHECK(magnitude_response(sec, f, 100) == doctest::Approx(1 / std::sqrt(1 + std::pow(w, 8))).epsilon(1e-9));
        }
        CHECK(butterworth_lowpass(3, 10, 100).size() == 2);
    }

    TEST_CASE("default noise spectrum stays below the cutoff")
    {
        const std::size_t n = 12000;
        const auto x = filtered_noise(n, 0.1, NoiseParams{}, 100, 9);
        const auto p = oracle::periodogram(x);
        double total = 0, below = 0, above = 0;
        for (std::size_t k = 1; k < p.size(); ++k) {
            const double f = 100.0 * k / n;
            total += p[k];
            if (f <= 15) below += p[k];
            if (f > 20) above += p[k];
        }
        CHECK(below / total >= 0.95);
        CHECK(above / total < 0.01);
    }

    TEST_CASE("noise params validation")
    {
        NoiseParams p;
        p.cutoff = 60;
        CHECK_THROWS_AS(p.validate(100), ValidationError);
        p = NoiseParams{};
        p.flow_std = -1;
        CHECK_THROWS_AS(p.validate(100), ValidationError);
    }
}

TEST_SUITE("datagen")
{
    TEST_CASE("config parsing")
    {
        const auto cfg = parse_run_config(small_config(7));
        REQUIRE(cfg.records.size() == 3);
        CHECK(cfg.records[0].id == "rec_0000");
        CHECK(cfg.records[2].id == "rec_0002");
        CHECK(cfg.records[2].archetype == ArchetypeId::COPD1);
        CHECK(cfg.records[0].record_length == 20);
        CHECK(cfg.records[0].seed == mix_seed(7, 0));
        CHECK(cfg.records[1].seed == mix_seed(7, 1));
        CHECK(cfg.records[2].distribution.has_value());
        CHECK(cfg.records[0].respiratory_rate() == 15);
        CHECK(cfg.records[0].settings.cycle_fraction == default_profile(ArchetypeId::Healthy).cycle_fraction);
    }

    TEST_CASE("config errors name the offending key")
    {
        auto bad = small_config(1);
        bad["records"][0]["archetype"] = "Asthma";
        try {
            parse_run_config(bad);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("records[0].archetype") != std::string::npos);
        }
        bad = small_config(1);
        bad["records"][0]["ventilator"] = Json{{"p_insp", 3}, {"peep", 5}};
        bad["records"][0]["calibrate"] = false;
        CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
        bad = small_config(1);
        bad["records"][1]["colour"] = "red";
        CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
        bad = small_config(1);
        bad["records"] = Json::array();
        CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
        bad = small_config(1);
        bad["records"][0]["asynchrony"] = Json{{"Normal", 0.5}};
        CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    }

    TEST_CASE("rate drawn from the range is deterministic")
    {
        auto j = small_config(3);
        j["defaults"]["breathing"] = Json{{"rate_range", {15, 20}}};
        const auto a = parse_run_config(j), b = parse_run_config(j);
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            const double r = a.records[i].respiratory_rate();
            CHECK(r == b.records[i].respiratory_rate());
            CHECK(r >= 15);
            CHECK(r <= 20);
        }
    }

    TEST_CASE("calibration hits the target and is a fixed point")
    {
        CalibrationRequest req;
        req.archetype = ArchetypeId::Healthy;
        req.effort = default_profile(ArchetypeId::Healthy).effort;
        req.settings.cycle_fraction = default_profile(ArchetypeId::Healthy).cycle_fraction;
        const auto res = calibrate_pinsp(req);
        CHECK(std::abs(res.median_tidal_volume - 0.5) <= 0.025);
        CHECK(calibration_tidal_volume(req, res.p_insp) == res.median_tidal_volume);
        CHECK(res.p_insp > req.settings.peep);
        CHECK(res.p_insp <= req.settings.peep + kCalibrationSpan);

        auto again = req;
        again.settings.p_insp = res.p_insp;
        const auto fixed = calibrate_pinsp(again);
        CHECK(fixed.iterations == 0);
        CHECK(fixed.p_insp == res.p_insp);

        auto far = req;
        far.target_tidal_volume = 5.0;
        CHECK_THROWS_AS(calibrate_pinsp(far), CalibrationError);
    }

    TEST_CASE("csv round trips")
    {
        auto s = flat_samples(3);
        s[1].phase = Phase::Inspiration;
        const auto back = parse_waveform(parse_table(waveform_csv(s)));
        REQUIRE(back.size() == 3);
        CHECK(back[1].phase == Phase::Inspiration);
        CHECK(back[2].t == 0.02);
        CHECK(format_number(1.0 / 3) == "0.333333");
        CHECK(format_number(123456789.0) == "1.23457e+08");

        BreathLabel l;
        l.breath_idx = 4;
        l.t_insp_start = 1.5;
        l.t_insp_end = 2.5;
        l.cls = AsynchronyClass::IneffectiveEffort;
        l.intent = AsynchronyClass::IneffectiveEffort;
        const auto text = labels_csv({l});
        CHECK(text.find("4,1.5,2.5,,,,,IE,IE\n") != std::string::npos);
        const auto lb = parse_labels(parse_table(text));
        REQUIRE(lb.size() == 1);
        CHECK_FALSE(lb[0].t_trigger.has_value());
        CHECK(lb[0].cls == AsynchronyClass::IneffectiveEffort);
        CHECK_THROWS_AS(parse_table("a,b\n1\n"), ValidationError);
    }

    TEST_CASE("dataset generation: determinism, serial reference, manifest counts")
    {
        const auto cfg = parse_run_config(small_config(21));
        const auto d1 = scratch_dir("gen1"), d2 = scratch_dir("gen2");
        GenerateOptions par;
        GenerateOptions ser;
        ser.parallel = false;
        const auto s1 = generate_dataset(cfg, d1, par);
        const auto s2 = generate_dataset(cfg, d2, ser);
        REQUIRE(s1.ok());
        CHECK(s1.exit_code() == 0);
        for (const auto& entry : fs::recursive_directory_iterator(d1)) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), d1);
            INFO(rel.string());
            CHECK(read_file(entry.path()) == read_file(d2 / rel));
        }

        const auto manifest = Json::parse(read_file(d1 / "manifest.json"));
        std::array<long, kAsynchronyClassCount> sum{};
        for (const auto& r : manifest["records"]) {
            const auto labels = parse_labels(read_table(d1 / r["id"].get<std::string>() / "labels.csv"));
            CHECK(r["breaths"] == labels.size());
            for (const auto& l : labels) ++sum[index_of(l.cls)];
            const auto waveform = read_table(d1 / r["id"].get<std::string>() / "waveform.csv");
            CHECK(std::abs(static_cast<double>(waveform.rows.size()) - 20 * 100) <= 1.0 + 1e-9);
        }
        CHECK(manifest["class_counts"] == counts_json(sum));
        const auto rec = Json::parse(read_file(d1 / "rec_0000" / "manifest.json"));
        CHECK(rec["generator"]["version"] == kGeneratorVersion);
        CHECK(rec["record"]["seed"] == mix_seed(21, 0));
        CHECK(rec["config"] == cfg.source);
        CHECK(rec["label_definition"]["thresholds"]["di_start_ms"] == 250.0);
    }

    TEST_CASE("a failing record is reported without affecting the others")
    {
        auto j = small_config(5);
        j["records"][1]["target_tidal_volume"] = 6.0;
        const auto d = scratch_dir("fail");
        const auto s = generate_dataset(parse_run_config(j), d);
        CHECK_FALSE(s.ok());
        CHECK(s.exit_code() == 3);
        CHECK(s.records[0].status == RecordStatus::Ok);
        CHECK(s.records[1].status == RecordStatus::Ok);
        CHECK(s.records[2].status == RecordStatus::SolverFailure);
        const auto m = Json::parse(read_file(d / "manifest.json"));
        CHECK(m["failed"] == 1);
        CHECK(m["records"][2]["status"] == "solver_error");
        CHECK(fs::exists(d / "rec_0001" / "labels.csv"));
        CHECK_FALSE(fs::exists(d / "rec_0002"));
    }

    TEST_CASE("evaluate: perfect predictions, perturbations and alignment errors")
    {
        auto j = small_config(8);
        j["records"] = Json::array({Json{{"archetype", "Healthy"}, {"record_length", 60}}});
        const auto d = scratch_dir("eval");
        REQUIRE(generate_dataset(parse_run_config(j), d).ok());
        const auto truth = load_truth(d);
        REQUIRE(truth.size() > 10);
        for (bool delays : {true, false}) {
            const auto preds = parse_predictions(parse_table(predictions_csv(truth, delays)));
            const auto rep = evaluate_predictions(truth, preds);
            for (auto c : kAllClasses) {
                const auto& m = rep.per_class[index_of(c)];
                if (m.tp + m.fn > 0) CHECK(m.balanced_accuracy == 1.0);
            }
        }
        auto preds = parse_predictions(parse_table(predictions_csv(truth, true)));
        preds.push_back({{"rec_0099", 3}, {}});
        try {
            evaluate_predictions(truth, preds);
            FAIL("expected AlignmentError");
        } catch (const AlignmentError& e) {
            CHECK(std::string(e.what()).find("rec_0099/3") != std::string::npos);
        }
        preds.pop_back();
        preds.pop_back();
        CHECK_THROWS_AS(evaluate_predictions(truth, preds), AlignmentError);

        const auto out = d / "report";
        write_report(evaluate_predictions(truth, parse_predictions(parse_table(predictions_csv(truth, false)))), out);
        CHECK(fs::exists(out / "metrics.csv"));
        CHECK(fs::exists(out / "delay_errors.csv"));
        CHECK(fs::exists(out / "report.json"));
    }

    TEST_CASE("plot export")
    {
        auto j = small_config(4);
        j["records"] = Json::array({Json{{"archetype", "Healthy"}, {"record_length", 30}}});
        const auto d = scratch_dir("plot");
        REQUIRE(generate_dataset(parse_run_config(j), d).ok());
        plot_record(d / "rec_0000", 1, 3, d / "a.svg");
        plot_record(d / "rec_0000", 1, 3, d / "b.svg");
        const auto svg = read_file(d / "a.svg");
        CHECK(svg == read_file(d / "b.svg"));
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(svg.find("#1f5fbf") != std::string::npos); // trigger marker
        CHECK_THROWS_AS(plot_record(d / "rec_0000", 500, 600, d / "c.svg"), ValidationError);
        CHECK_THROWS_AS(plot_record(d / "rec_0000", 3, 1, d / "c.svg"), ValidationError);

        // CPAP: only effort markers
        SimulationInputs in;
        in.setup.patient = archetype("Healthy");
        in.setup.mode = ControlMode::Cpap;
        in.breaths = build_breath_plan(15, 20, 0, 1);
        const auto tr = simulate(in);
        const auto labels = label_breaths(segment_breaths(tr.events));
        const auto cpap = plot_svg(tr.samples, labels, 0, 10, "cpap");
        CHECK(cpap.find("stroke=\"#2a9d3f\" stroke-dasharray") != std::string::npos);
        CHECK(cpap.find("stroke=\"#1f5fbf\" stroke-dasharray") == std::string::npos);
        CHECK(cpap.find("stroke=\"#e67e22\" stroke-dasharray") == std::string::npos);
    }

    TEST_CASE("output directory resolution")
    {
        CHECK(resolve_output_dir(std::string("x")) == fs::path("x"));
        RunConfig cfg;
        cfg.output_dir = "from_cfg";
        CHECK(resolve_output_dir(std::nullopt, &cfg) == fs::path("from_cfg"));
        setenv("VENTSIM_OUTPUT_DIR", "from_env", 1);
        CHECK(resolve_output_dir(std::nullopt) == fs::path("from_env"));
        unsetenv("VENTSIM_OUTPUT_DIR");
        CHECK(resolve_output_dir(std::nullopt) == fs::path("ventsim_out"));
    }
}
