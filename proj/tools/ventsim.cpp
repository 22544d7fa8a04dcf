// ventsim command line: dataset generation, single records, calibration,
// detector evaluation, plots and the live simulation service.

#include "ventsim/datagen/calibrate.hpp"
#include "ventsim/datagen/config.hpp"
#include "ventsim/datagen/dataset.hpp"
#include "ventsim/datagen/evaluate.hpp"
#include "ventsim/datagen/io.hpp"
#include "ventsim/datagen/plot.hpp"
#include "ventsim/error.hpp"
#include "ventsim/model/archetype.hpp"
#include "ventsim/service/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>

using namespace ventsim;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

// Record flags shared by simulate and calibrate. Unset flags fall back to the
// archetype defaults.
struct RecordFlags {
    std::string archetype = "Healthy";
    std::optional<double> length, rate, peep, p_insp, trigger_sensitivity, cycle_fraction, target_vt, tolerance;
    std::optional<double> pressure_noise, flow_noise, cardiac_amplitude;
    std::optional<std::string> pipeline, asynchrony, record_json;
    bool no_calibrate = false;
    std::uint64_t seed = 0;

    void add(CLI::App& app, bool with_run_options)
    {
        app.add_option("-a,--archetype", archetype, "patient archetype")->capture_default_str();
        app.add_option("--peep", peep, "cmH2O");
        app.add_option("--p-insp", p_insp, "inspiratory pressure, cmH2O (starting point when calibrating)");
        app.add_option("--trigger-sensitivity", trigger_sensitivity, "cmH2O below PEEP");
        app.add_option("--cycle-fraction", cycle_fraction, "of peak inspiratory flow");
        app.add_option("--target-vt", target_vt, "target tidal volume, L");
        app.add_option("--tolerance", tolerance, "calibration tolerance, fraction of the target");
        app.add_option("--seed", seed, "record seed")->capture_default_str();
        app.add_option("--record", record_json, "JSON file with one record object; flags override it")
            ->check(CLI::ExistingFile);
        if (!with_run_options) return;
        app.add_option("--length", length, "record length, s");
        app.add_option("--rate", rate, "breaths/min (default: drawn from 15-20)");
        app.add_option("--pipeline", pipeline, "closed_loop or staged");
        app.add_option("--asynchrony", asynchrony, "default, normal, or a JSON class distribution");
        app.add_option("--pressure-noise", pressure_noise, "cmH2O");
        app.add_option("--flow-noise", flow_noise, "L/s");
        app.add_option("--cardiac", cardiac_amplitude, "cardiac oscillation amplitude, cmH2O");
        app.add_flag("--no-calibrate", no_calibrate, "use --p-insp as given");
    }

    Json to_json() const
    {
        Json j = record_json ? Json::parse(read_file(*record_json)) : Json::object();
        if (!j.is_object()) throw ConfigError("record: expected an object");
        if (!j.contains("archetype") || archetype != "Healthy") j["archetype"] = archetype;
        auto set = [&](const char* group, const char* key, const std::optional<double>& v) {
            if (v) j[group][key] = *v;
        };
        set("ventilator", "peep", peep);
        set("ventilator", "p_insp", p_insp);
        set("ventilator", "trigger_sensitivity", trigger_sensitivity);
        set("ventilator", "cycle_fraction", cycle_fraction);
        set("breathing", "rate", rate);
        set("noise", "pressure_std", pressure_noise);
        set("noise", "flow_std", flow_noise);
        set("cardiac", "amplitude", cardiac_amplitude);
        if (length) j["record_length"] = *length;
        if (target_vt) j["target_tidal_volume"] = *target_vt;
        if (tolerance) j["calibration_tolerance"] = *tolerance;
        if (pipeline) j["pipeline"] = *pipeline;
        if (asynchrony) {
            j["asynchrony"] = (*asynchrony == "default" || *asynchrony == "normal") ? Json(*asynchrony)
                                                                                     : Json::parse(*asynchrony);
        }
        if (no_calibrate) j["calibrate"] = false;
        return j;
    }
};

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_generate(const std::string& config, const std::optional<std::string>& out, std::optional<std::uint64_t> seed,
                 bool serial, bool quiet)
{
    Json doc = Json::parse(read_file(config));
    if (seed) doc["master_seed"] = *seed;
    const RunConfig cfg = parse_run_config(doc);
    const fs::path dir = resolve_output_dir(out, &cfg);
    GenerateOptions opt;
    opt.parallel = !serial;
    if (!quiet) opt.log = [](const std::string& line) { std::cerr << line << '\n'; };
    const auto summary = generate_dataset(cfg, dir, opt);
    for (const auto& r : summary.records) {
        if (r.status == RecordStatus::Ok) {
            std::printf("%s %-8s P_insp %6.2f  %zu breaths\n", r.id.c_str(), std::string(to_string(r.archetype)).c_str(),
                        r.p_insp, r.breaths);
        } else {
            std::printf("%s %-8s FAILED: %s\n", r.id.c_str(), std::string(to_string(r.archetype)).c_str(),
                        r.error.c_str());
        }
    }
    std::printf("wrote %s\n", dir.string().c_str());
    return summary.exit_code();
}

int cmd_simulate(const RecordFlags& flags, const std::optional<std::string>& out,
                 const std::optional<std::string>& plot, std::size_t first, std::size_t last)
{
    const Json record = flags.to_json();
    const RecordSpec spec = parse_record_spec(record, flags.seed);
    std::optional<CalibrationResult> cal;
    if (spec.calibrate) cal = calibrate_pinsp(CalibrationRequest::from_record(spec));
    const auto rec = generate_record(spec, cal);
    const fs::path dir = resolve_output_dir(out) / spec.id;
    fs::create_directories(dir.parent_path());
    write_record(rec, dir, Json{{"record", record}, {"seed", flags.seed}});
    std::printf("%s: %s, P_insp %.2f cmH2O, %zu labeled breaths -> %s\n", spec.id.c_str(),
                std::string(to_string(spec.archetype)).c_str(), rec.p_insp, rec.labels.size(), dir.string().c_str());
    if (plot) {
        plot_record(dir, first, last, *plot);
        std::printf("plot -> %s\n", plot->c_str());
    }
    return 0;
}

int cmd_calibrate(const RecordFlags& flags)
{
    const RecordSpec spec = parse_record_spec(flags.to_json(), flags.seed);
    print_json(calibrate_pinsp(CalibrationRequest::from_record(spec)).to_json());
    return 0;
}

int cmd_evaluate(const std::string& dataset, const std::string& predictions, const std::string& out)
{
    const auto truth = load_truth(dataset);
    const auto predicted = parse_predictions(read_table(predictions));
    const auto report = evaluate_predictions(truth, predicted);
    write_report(report, out);
    std::cout << report.metrics_table_csv();
    std::printf("report -> %s\n", out.c_str());
    return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(unsigned short port)
{
    service::Server server(port);
    server.start();
    std::printf("sim-service on http://127.0.0.1:%u (Ctrl-C stops)\n", server.port());
    std::fflush(stdout);
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Ventilated-patient simulator and labeled asynchrony dataset generator"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "generate a dataset from a run configuration");
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> master_seed;
    bool serial = false, quiet = false;
    gen->add_option("-c,--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("-o,--output", out, "output directory (default: config, then $VENTSIM_OUTPUT_DIR)");
    gen->add_option("--seed", master_seed, "override master_seed");
    gen->add_flag("--serial", serial, "generate records one at a time");
    gen->add_flag("-q,--quiet", quiet, "no progress lines");

    auto* sim = app.add_subcommand("simulate", "simulate and label one record");
    RecordFlags sim_flags;
    sim_flags.add(*sim, true);
    std::optional<std::string> plot;
    std::size_t first = 0, last = 4;
    sim->add_option("-o,--output", out, "parent directory of the record");
    sim->add_option("--plot", plot, "also write an SVG of breaths --first..--last");
    sim->add_option("--first", first, "first breath index to plot")->capture_default_str();
    sim->add_option("--last", last, "last breath index to plot")->capture_default_str();

    auto* cal = app.add_subcommand("calibrate", "find P_insp for a target tidal volume");
    RecordFlags cal_flags;
    cal_flags.add(*cal, false);

    auto* eval = app.add_subcommand("evaluate", "score detector predictions against a dataset");
    std::string dataset, predictions, report_dir = "report";
    eval->add_option("-d,--dataset", dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("-p,--predictions", predictions, "predictions CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("-o,--output", report_dir, "report directory")->capture_default_str();

    auto* pl = app.add_subcommand("plot", "plot breaths of a generated record as SVG");
    std::string record_dir, svg = "breaths.svg";
    pl->add_option("-r,--record", record_dir, "record directory")->required()->check(CLI::ExistingDirectory);
    pl->add_option("--first", first, "first breath index")->capture_default_str();
    pl->add_option("--last", last, "last breath index")->capture_default_str();
    pl->add_option("-o,--output", svg, "SVG file")->capture_default_str();

    auto* arch = app.add_subcommand("archetypes", "print the archetype catalog as JSON");

    auto* serve = app.add_subcommand("serve", "run the live simulation service");
    unsigned short port = 8080;
    serve->add_option("-p,--port", port, "TCP port on 127.0.0.1 (0 picks one)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) return cmd_generate(config, out, master_seed, serial, quiet);
        if (*sim) return cmd_simulate(sim_flags, out, plot, first, last);
        if (*cal) return cmd_calibrate(cal_flags);
        if (*eval) return cmd_evaluate(dataset, predictions, report_dir);
        if (*pl) {
            plot_record(record_dir, first, last, svg);
            std::printf("plot -> %s\n", svg.c_str());
            return 0;
        }
        if (*arch) {
            print_json(catalog_json());
            return 0;
        }
        if (*serve) return cmd_serve(port);
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const InitializationError& e) {
        std::cerr << "initialization error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Json::exception& e) {
        std::cerr << "bad JSON: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "file error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
