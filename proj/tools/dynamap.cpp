#include <dynamap/depth_io.hpp>
#include <dynamap/metrics.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace dynamap;

namespace {

struct ScenarioArgs {
    std::string scenario_path;
    std::string config_path;
    int64_t seed = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("scenario", scenario_path, "Scenario file")->required();
        cmd->add_option("--config", config_path,
                        "Extra scenario file layered on top (parameter overrides)");
        cmd->add_option("--seed", seed, "Override the scenario RNG seed");
    }

    Scenario load() const {
        Scenario sc = load_scenario(scenario_path);
        if (!config_path.empty()) apply_scenario_overrides(sc, config_path);
        if (seed >= 0) sc.sim.seed = static_cast<uint64_t>(seed);
        return sc;
    }
};

PredictorKind parse_predictor(const std::string& name) {
    if (name == "markov") return PredictorKind::Markov;
    if (name == "linear") return PredictorKind::Linear;
    throw CLI::ValidationError("--predictor", "must be 'markov' or 'linear'");
}

void write_run_outputs(const fs::path& out_dir, const PipelineResult& result) {
    fs::create_directories(out_dir);
    save_records((out_dir / "records.txt").string(), result.records);
    save_grid((out_dir / "grid.bin").string(), result.grid);
    const MetricsReport rep = evaluate(result.records);
    save_metrics_csv((out_dir / "metrics.csv").string(), rep);
    std::ofstream summary(out_dir / "summary.txt");
    write_metrics_summary(summary, rep);
    write_metrics_summary(std::cout, rep);
    std::cout << "outputs in " << out_dir.string() << '\n';
}

int cmd_run(const ScenarioArgs& args, const std::string& out_dir,
            const std::string& predictor) {
    const Scenario sc = args.load();
    const PipelineResult result = run_pipeline(sc, parse_predictor(predictor));
    const fs::path out = out_dir.empty() ? fs::path("out") / sc.name : fs::path(out_dir);
    write_run_outputs(out, result);
    return 0;
}

int cmd_evaluate(const std::string& records_path) {
    fs::path path(records_path);
    if (fs::is_directory(path)) path /= "records.txt";
    const RunRecords rec = load_records(path.string());
    write_metrics_summary(std::cout, evaluate(rec));
    return 0;
}

int cmd_compare(const ScenarioArgs& args) {
    const Scenario sc = args.load();
    const PredictorComparison cmp = compare_predictors(sc);
    std::cout << std::setprecision(6);
    std::cout << "scenario " << sc.name << " (seed " << sc.sim.seed << ", "
              << sc.frame_count() << " frames)\n";
    const auto row = [](const char* name, const MetricsReport& r) {
        std::cout << "  " << name << ": failures " << r.prediction_failures << " / "
                  << r.prediction_attempts << " (ratio " << r.failure_ratio << ")\n";
    };
    row("markov", cmp.markov);
    row("linear", cmp.linear);
    return 0;
}

int cmd_render_preview(const ScenarioArgs& args, int frame, const std::string& out_path) {
    const Scenario sc = args.load();
    if (frame < 0 || frame >= sc.frame_count())
        throw std::runtime_error("frame " + std::to_string(frame) + " outside scenario (" +
                                 std::to_string(sc.frame_count()) + " frames)");
    const DepthImage img = render_depth(sc, frame);
    const fs::path out = out_path.empty()
                             ? fs::path(sc.name + "_frame" + std::to_string(frame) + ".pgm")
                             : fs::path(out_path);
    write_depth_pgm(out.string(), img);
    write_depth_metadata(out.string() + ".meta", img.intrinsics);
    int valid = 0;
    for (float d : img.data) valid += d > 0.0f ? 1 : 0;
    std::cout << "wrote " << out.string() << " (" << img.intrinsics.width << "x"
              << img.intrinsics.height << ", " << valid << " valid pixels)\n";
    return 0;
}

int cmd_bench(const ScenarioArgs& args, int repeat) {
    const Scenario sc = args.load();
    double render = 0.0, detection = 0.0, tracking = 0.0, prediction = 0.0;
    int frames = 0;
    for (int i = 0; i < repeat; ++i) {
        const PipelineResult result = run_pipeline(sc);
        for (const FrameRecord& f : result.records.frames) {
            render += f.render_ms;
            detection += f.detection_ms;
            tracking += f.tracking_ms;
            prediction += f.prediction_ms;
            ++frames;
        }
    }
    const double stage_total = detection + tracking + prediction;
    std::cout << std::setprecision(6);
    std::cout << "scenario " << sc.name << ": " << frames << " frames over " << repeat
              << " run(s), " << sc.camera.width << "x" << sc.camera.height << "\n";
    std::cout << "  render     " << render / frames << " ms/frame (excluded from portions)\n";
    std::cout << "  detection  " << detection / frames << " ms/frame  "
              << 100.0 * detection / stage_total << "%\n";
    std::cout << "  tracking   " << tracking / frames << " ms/frame  "
              << 100.0 * tracking / stage_total << "%\n";
    std::cout << "  prediction " << prediction / frames << " ms/frame  "
              << 100.0 * prediction / stage_total << "%\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Depth-camera obstacle tracking and prediction pipeline"};
    app.require_subcommand(1);

    ScenarioArgs run_args;
    std::string run_out, run_predictor = "markov";
    CLI::App* run = app.add_subcommand("run", "Run the pipeline and write records and metrics");
    run_args.attach(run);
    run->add_option("--out", run_out, "Output directory (default out/<scenario>)");
    run->add_option("--predictor", run_predictor, "Trajectory predictor: markov or linear");

    std::string eval_path;
    CLI::App* eval = app.add_subcommand("evaluate", "Score a records file against ground truth");
    eval->add_option("records", eval_path, "records.txt file or a run output directory")
        ->required();

    ScenarioArgs cmp_args;
    CLI::App* cmp = app.add_subcommand(
        "compare-predictors", "Run both predictors on one scenario and compare failure ratios");
    cmp_args.attach(cmp);

    ScenarioArgs prev_args;
    int prev_frame = 0;
    std::string prev_out;
    CLI::App* prev =
        app.add_subcommand("render-preview", "Render one frame to a 16-bit depth PGM");
    prev_args.attach(prev);
    prev->add_option("--frame", prev_frame, "Frame index")->required();
    prev->add_option("--out", prev_out, "Output PGM path");

    ScenarioArgs bench_args;
    int bench_repeat = 1;
    CLI::App* bench = app.add_subcommand("bench", "Report per-stage runtime of the pipeline");
    bench_args.attach(bench);
    bench->add_option("--repeat", bench_repeat, "Number of full pipeline runs to average")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args, run_out, run_predictor);
        if (eval->parsed()) return cmd_evaluate(eval_path);
        if (cmp->parsed()) return cmd_compare(cmp_args);
        if (prev->parsed()) return cmd_render_preview(prev_args, prev_frame, prev_out);
        if (bench->parsed()) return cmd_bench(bench_args, bench_repeat);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
