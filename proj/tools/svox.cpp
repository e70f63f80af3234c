// Command-line frontend for the sparse voxel inference engine.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svox/svox.hpp"

namespace fs = std::filesystem;
using namespace svox;

namespace {

struct CloudInput {
    std::vector<PointXYZR> points;
    std::vector<SceneBoxSpec> boxes;
};

// Resolves the configured input: an inline scene is generated, otherwise the
// cloud binary (and optional boxes file) are read.
CloudInput load_input(const EngineConfig& cfg) {
    CloudInput in;
    if (cfg.scene) {
        Scene scene = generate_scene(*cfg.scene);
        in.points = std::move(scene.points);
        in.boxes = std::move(scene.boxes);
        return in;
    }
    if (cfg.input_cloud.empty()) {
        throw ConfigError("config has no input: add an input.cloud path or an input.scene block");
    }
    in.points = read_cloud_bin(cfg.input_cloud);
    if (!cfg.input_boxes.empty()) in.boxes = load_boxes(cfg.input_boxes);
    return in;
}

ModelWeights resolve_model(const EngineConfig& cfg) {
    if (!cfg.model_path.empty()) {
        ModelWeights m = load_model(cfg.model_path);
        validate_model(cfg.pipeline, m);
        return m;
    }
    return build_random_model(cfg.pipeline);
}

PredictorNet resolve_predictor(const EngineConfig& cfg) {
    if (!cfg.predictor_weights.empty()) return load_predictor(cfg.predictor_weights);
    return PredictorNet::init(cfg.pipeline.predictor_seed);
}

// --seed overrides every random stream in the config.
void apply_seed_override(EngineConfig& cfg, const std::optional<std::uint64_t>& seed) {
    if (!seed) return;
    cfg.pipeline.seed = *seed;
    cfg.pipeline.predictor_seed = *seed + 1;
    if (cfg.scene) cfg.scene->seed = *seed;
    if (cfg.train_template) cfg.train_template->seed = *seed;
}

void ensure_outdir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

void write_run_artifacts(const std::string& dir, const PipelineResult& res,
                         bool rulebook_column) {
    write_text_file(dir + "/ledger.csv", res.ledger.to_csv(rulebook_column));
    write_text_file(dir + "/density.csv", to_csv(res.density));
    write_text_file(dir + "/density.pgm", to_pgm(res.density));
    for (const FilterRecord& f : res.filters) {
        write_text_file(dir + "/mask_" + f.layer + ".csv", to_csv(f.mask));
        write_text_file(dir + "/mask_" + f.layer + ".pgm", to_pgm(f.mask));
        write_text_file(dir + "/pred_" + f.layer + ".csv", to_csv(f.pred));
        write_text_file(dir + "/pred_" + f.layer + ".pgm", to_pgm(f.pred));
    }
    std::ostringstream sum;
    sum << "flops_3d=" << res.ledger.total_flops(Domain::kThreeD) << "\n"
        << "flops_2d=" << res.ledger.total_flops(Domain::kTwoD) << "\n"
        << "flops_predictor=" << res.ledger.total_flops(Domain::kPredictor) << "\n"
        << "activation_bytes_3d=" << res.ledger.total_activation_bytes(Domain::kThreeD) << "\n"
        << "activation_bytes_2d=" << res.ledger.total_activation_bytes(Domain::kTwoD) << "\n"
        << "final_3d_voxels=" << res.out3d.size() << "\n"
        << "final_2d_pixels=" << res.out2d.size() << "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", res.out2d.dense_rate());
    sum << "final_2d_dense_rate=" << buf << "\n";
    write_text_file(dir + "/summary.txt", sum.str());
}

std::vector<TrainSample> build_training_set(const EngineConfig& cfg, const SceneSpec& tmpl,
                                            int count, std::uint64_t seed_offset) {
    std::vector<TrainSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = tmpl;
        spec.seed = tmpl.seed + seed_offset + static_cast<std::uint64_t>(i);
        Scene scene = generate_scene(spec);
        TrainSample s;
        s.bev = input_bev_features(scene.points, cfg.pipeline.grid, cfg.pipeline.reduce);
        s.boxes = boxes_to_cells(scene.boxes, cfg.pipeline.grid);
        out.push_back(std::move(s));
    }
    return out;
}

int cmd_voxelize(const std::string& cloud_path, const std::string& cfg_path,
                 const std::string& reduce_name, std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    if (!reduce_name.empty()) cfg.pipeline.reduce = reduce_from_string(reduce_name);
    const auto points = read_cloud_bin(cloud_path);
    const SparseVoxelTensor t = voxelize(points, cfg.pipeline.grid, cfg.pipeline.reduce);
    ensure_outdir(cfg.output_dir);
    write_text_file(cfg.output_dir + "/voxels.csv", voxels_csv(t));
    const double cells = static_cast<double>(cfg.pipeline.grid.extent[0]) *
                         cfg.pipeline.grid.extent[1] * cfg.pipeline.grid.extent[2];
    std::cout << "voxels=" << t.size() << " channels=" << t.channels()
              << " dense_rate=" << static_cast<double>(t.size()) / cells << "\n";
    return 0;
}

int cmd_run(const std::string& cfg_path, std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    CloudInput in = load_input(cfg);
    ModelWeights model = resolve_model(cfg);
    PredictorNet net = resolve_predictor(cfg);
    PipelineResult res = run_pipeline(cfg.pipeline, model, net, in.points);
    ensure_outdir(cfg.output_dir);
    write_run_artifacts(cfg.output_dir, res, cfg.pipeline.report_rulebook_memory);
    std::cout << "run complete: flops=" << res.ledger.total_flops()
              << " activation_bytes=" << res.ledger.total_activation_bytes()
              << " artifacts=" << cfg.output_dir << "\n";
    return 0;
}

int cmd_profile(const std::string& cfg_path, bool with_baseline,
                std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    CloudInput in = load_input(cfg);
    ModelWeights model = resolve_model(cfg);
    PredictorNet net = resolve_predictor(cfg);
    ensure_outdir(cfg.output_dir);

    PipelineResult optimized = run_pipeline(cfg.pipeline, model, net, in.points);
    write_text_file(cfg.output_dir + "/ledger_optimized.csv",
                    optimized.ledger.to_csv(cfg.pipeline.report_rulebook_memory));

    if (with_baseline) {
        const PipelineConfig base_cfg = baseline_config(cfg.pipeline);
        PredictorNet base_net = resolve_predictor(cfg);
        PipelineResult baseline = run_pipeline(base_cfg, model, base_net, in.points);
        write_text_file(cfg.output_dir + "/ledger_baseline.csv",
                        baseline.ledger.to_csv(cfg.pipeline.report_rulebook_memory));
        const CostReport rep = report_costs(optimized.ledger, baseline.ledger);
        write_text_file(cfg.output_dir + "/report.csv", rep.to_csv());
        write_text_file(cfg.output_dir + "/report.txt", rep.to_text());
        std::cout << rep.to_text();
    } else {
        std::cout << "flops_total=" << optimized.ledger.total_flops() << " activation_bytes_total="
                  << optimized.ledger.total_activation_bytes() << "\n";
    }
    return 0;
}

int cmd_train(const std::string& cfg_path, std::optional<int> epochs, std::optional<double> lr,
              const std::string& schedule_name, std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    if (!cfg.train_template) {
        throw ConfigError("training.scene_template is required for train-predictor");
    }
    const int n_epochs = epochs.value_or(cfg.epochs);
    const double peak_lr = lr.value_or(cfg.lr);
    const LrSchedule schedule =
        schedule_name.empty() ? cfg.schedule : schedule_from_string(schedule_name);

    const auto dataset = build_training_set(cfg, *cfg.train_template, cfg.train_scenes, 0);
    PredictorNet net = resolve_predictor(cfg);
    const std::vector<double> trace =
        train_predictor(net, dataset, n_epochs, peak_lr, schedule, cfg.pipeline.sigma);

    ensure_outdir(cfg.output_dir);
    save_predictor(cfg.output_dir + "/predictor.json", net);
    std::ostringstream csv;
    csv << "epoch,mse\n";
    char buf[32];
    for (std::size_t e = 0; e < trace.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.9g", trace[e]);
        csv << (e + 1) << ',' << buf << "\n";
    }
    write_text_file(cfg.output_dir + "/loss_trace.csv", csv.str());
    std::cout << "trained " << n_epochs << " epochs on " << dataset.size()
              << " scenes: mse " << trace.front() << " -> " << trace.back() << "\n";
    return 0;
}

int cmd_gen_scene(const std::string& spec_path, const std::string& out_dir,
                  std::optional<std::uint64_t> seed) {
    SceneSpec spec = load_scene_spec(spec_path);
    if (seed) spec.seed = *seed;
    Scene scene = generate_scene(spec);
    ensure_outdir(out_dir);
    write_cloud_bin(out_dir + "/cloud.bin", scene.points);
    save_boxes(out_dir + "/boxes.json", scene.boxes);
    std::ostringstream labels;
    labels << "label\n";
    for (PointLabel l : scene.labels) labels << static_cast<int>(l) << "\n";
    write_text_file(out_dir + "/labels.csv", labels.str());
    std::cout << "points=" << scene.points.size() << " boxes=" << scene.boxes.size()
              << " out=" << out_dir << "\n";
    return 0;
}

int cmd_calibrate(const std::string& cfg_path, std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    if (!cfg.train_template) {
        throw ConfigError("training.scene_template is required for calibrate-beta");
    }
    std::vector<double> grid = cfg.beta_grid;
    if (grid.empty()) {
        for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
    }

    PredictorNet net = resolve_predictor(cfg);
    std::vector<std::pair<SparseBEVTensor, DensityHeatmap>> scenes;
    for (int i = 0; i < cfg.calib_scenes; ++i) {
        SceneSpec spec = *cfg.train_template;
        spec.seed = cfg.train_template->seed + 5000 + static_cast<std::uint64_t>(i);
        Scene scene = generate_scene(spec);
        SparseBEVTensor bev = input_bev_features(scene.points, cfg.pipeline.grid, cfg.pipeline.reduce);
        net.ensure_compress(static_cast<int>(bev.channels()));
        DensityHeatmap d =
            density_heatmap(scene.points, cfg.pipeline.grid, cfg.pipeline.filter.density_pool);
        scenes.emplace_back(std::move(bev), std::move(d));
    }
    const double beta = calibrate_beta(scenes, net, grid);
    ensure_outdir(cfg.output_dir);
    json j{{"beta", beta}};
    write_text_file(cfg.output_dir + "/beta.json", j.dump(2) + "\n");
    std::cout << "beta=" << beta << "\n";
    return 0;
}

int cmd_stats(const std::string& cloud_path, const std::string& cfg_path,
              std::optional<std::uint64_t> seed) {
    EngineConfig cfg = load_engine_config(cfg_path);
    apply_seed_override(cfg, seed);
    const auto points = read_cloud_bin(cloud_path);
    const SparseVoxelTensor t = voxelize(points, cfg.pipeline.grid, cfg.pipeline.reduce);
    const SparseBEVTensor bev = project_3d_to_2d(t, cfg.pipeline.grid.bev_extent());

    const auto& g = cfg.pipeline.grid;
    const double cells3 = static_cast<double>(g.extent[0]) * g.extent[1] * g.extent[2];
    std::cout << "points=" << points.size() << "\n"
              << "voxels=" << t.size() << "\n"
              << "dense_rate_3d=" << static_cast<double>(t.size()) / cells3 << "\n"
              << "bev_pixels=" << bev.size() << "\n"
              << "dense_rate_bev=" << bev.dense_rate() << "\n";

    // radial histogram over 10 equal-area annuli centered on the grid middle
    const double cx = g.origin[0] + 0.5 * g.voxel_size[0] * g.extent[0];
    const double cy = g.origin[1] + 0.5 * g.voxel_size[1] * g.extent[1];
    const double r_max = 0.5 * std::min(g.voxel_size[0] * g.extent[0], g.voxel_size[1] * g.extent[1]);
    std::vector<std::int64_t> annuli(10, 0);
    std::int64_t in_range = 0;
    for (const PointXYZR& p : points) {
        const double rr = std::hypot(p.x - cx, p.y - cy);
        if (rr >= r_max) continue;
        const int bin = std::min(9, static_cast<int>((rr * rr) / (r_max * r_max) * 10.0));
        ++annuli[bin];
        ++in_range;
    }
    std::cout << "annulus,count,fraction\n";
    for (int i = 0; i < 10; ++i) {
        std::cout << i << ',' << annuli[i] << ','
                  << (in_range > 0 ? static_cast<double>(annuli[i]) / in_range : 0.0) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse voxel inference engine with adaptive spatial filtering"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override every random seed in the config");

    std::string cloud_path, cfg_path, reduce_name, out_dir = "out", schedule_name, spec_path;
    std::optional<int> epochs;
    std::optional<double> lr;
    bool with_baseline = false;

    auto* vox = app.add_subcommand("voxelize", "quantize a point cloud into sparse voxels");
    vox->add_option("cloud", cloud_path, "point cloud binary (f32 x,y,z,r quadruples)")->required();
    vox->add_option("--grid", cfg_path, "engine config supplying the voxel grid")->required();
    vox->add_option("--reduce", reduce_name, "per-voxel reduction: mean|max|count");

    auto* run = app.add_subcommand("run", "run the full adaptive-inference pipeline");
    run->add_option("config", cfg_path, "engine config json")->required();

    auto* prof = app.add_subcommand("profile", "run and report FLOP/memory costs");
    prof->add_option("config", cfg_path, "engine config json")->required();
    prof->add_flag("--baseline", with_baseline,
                   "also run the unfiltered dense-BN baseline and emit compression ratios");

    auto* train = app.add_subcommand("train-predictor", "train the importance predictor");
    train->add_option("config", cfg_path, "engine config json")->required();
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "peak learning rate");
    train->add_option("--schedule", schedule_name, "constant|one-cycle");

    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene");
    gen->add_option("scenespec", spec_path, "scene spec json")->required();
    gen->add_option("--out", out_dir, "output directory");

    auto* calib = app.add_subcommand("calibrate-beta", "select the density-guidance exponent");
    calib->add_option("config", cfg_path, "engine config json")->required();

    auto* stats = app.add_subcommand("stats", "dense-rate and density-histogram report");
    stats->add_option("cloud", cloud_path, "point cloud binary")->required();
    stats->add_option("--grid", cfg_path, "engine config supplying the voxel grid")->required();

    for (CLI::App* sub : {vox, run, prof, train, gen, calib, stats}) {
        sub->fallthrough();  // lets --seed appear after the subcommand
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (vox->parsed()) return cmd_voxelize(cloud_path, cfg_path, reduce_name, seed);
        if (run->parsed()) return cmd_run(cfg_path, seed);
        if (prof->parsed()) return cmd_profile(cfg_path, with_baseline, seed);
        if (train->parsed()) return cmd_train(cfg_path, epochs, lr, schedule_name, seed);
        if (gen->parsed()) return cmd_gen_scene(spec_path, out_dir, seed);
        if (calib->parsed()) return cmd_calibrate(cfg_path, seed);
        if (stats->parsed()) return cmd_stats(cloud_path, cfg_path, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
