#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "support/oracles.hpp"
#include "svox/io.hpp"
#include "svox/pipeline.hpp"
#include "svox/scene.hpp"

using namespace svox;

namespace {

// Small desk config: 3 sparse 3D layers (one strided), 3 2D layers.
PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.grid.origin[0] = cfg.grid.origin[1] = -16.0;
    cfg.grid.origin[2] = -0.2;
    cfg.grid.voxel_size[0] = cfg.grid.voxel_size[1] = 0.5;
    cfg.grid.voxel_size[2] = 0.5;
    cfg.grid.extent[0] = cfg.grid.extent[1] = 64;
    cfg.grid.extent[2] = 8;
    cfg.backbone3d = {
        {"3d_conv_1", 3, 1, ConvKind::kSubmanifold, 8, NormVariant::kSp},
        {"3d_conv_2", 3, 2, ConvKind::kGenerative, 16, NormVariant::kSp},
        {"3d_conv_3", 3, 1, ConvKind::kSubmanifold, 16, NormVariant::kSp},
    };
    cfg.backbone2d = {
        {"2d_conv_1", 3, 1, ConvKind::kGenerative, 16, NormVariant::kSp},
        {"2d_conv_2", 3, 1, ConvKind::kGenerative, 16, NormVariant::kSp},
        {"2d_conv_3", 3, 1, ConvKind::kGenerative, 16, NormVariant::kSp},
    };
    cfg.filter.r_drop = 0.25;
    cfg.filter.beta = 0.5;
    cfg.filter.density_pool = 5;
    cfg.filter.layers_3d = {2};
    cfg.filter.layers_2d = {2};
    cfg.seed = 5;
    return cfg;
}

SceneSpec small_scene(std::uint64_t seed = 3) {
    SceneSpec s;
    s.extent_m[0] = s.extent_m[1] = 32.0;
    s.extent_m[2] = 3.5;
    s.ground_points = 6000;
    s.clutter_points = 1500;
    s.seed = seed;
    s.boxes.push_back({4.0, 2.0, 1.0, 2.0, 0.4, 1.6, 300});
    s.boxes.push_back({-8.0, -6.0, 1.0, 1.5, 1.2, 1.6, 250});
    return s;
}

}  // namespace

TEST_CASE("zero drop rate reproduces the unfiltered ledger exactly") {
    const Scene scene = generate_scene(small_scene());

    PipelineConfig with_filters = small_config();
    with_filters.filter.r_drop = 0.0;
    PipelineConfig no_filters = small_config();
    no_filters.filter.layers_3d.clear();
    no_filters.filter.layers_2d.clear();

    ModelWeights model = build_random_model(with_filters);
    PredictorNet net_a = PredictorNet::init(1);
    PredictorNet net_b = PredictorNet::init(1);
    auto a = run_pipeline(with_filters, model, net_a, scene.points);
    auto b = run_pipeline(no_filters, model, net_b, scene.points);

    REQUIRE(a.ledger.entries().size() == b.ledger.entries().size());
    for (std::size_t i = 0; i < a.ledger.entries().size(); ++i) {
        const auto& ea = a.ledger.entries()[i];
        const auto& eb = b.ledger.entries()[i];
        CHECK(ea.name == eb.name);
        CHECK(ea.flops == eb.flops);
        CHECK(ea.activation_bytes == eb.activation_bytes);
        CHECK(ea.rulebook_pairs == eb.rulebook_pairs);
        CHECK(ea.dense_rate_pre == eb.dense_rate_pre);
        CHECK(ea.dense_rate_post == eb.dense_rate_post);
    }
    CHECK(a.out2d == b.out2d);
}

TEST_CASE("pipeline runs are bit-identical under a fixed seed") {
    const Scene scene = generate_scene(small_scene());
    PipelineConfig cfg = small_config();
    ModelWeights model = build_random_model(cfg);
    PredictorNet na = PredictorNet::init(1);
    PredictorNet nb = PredictorNet::init(1);
    auto a = run_pipeline(cfg, model, na, scene.points);
    auto b = run_pipeline(cfg, model, nb, scene.points);
    CHECK(a.ledger.to_csv() == b.ledger.to_csv());
    CHECK(a.out2d == b.out2d);
    CHECK(a.out3d == b.out3d);
    REQUIRE(a.filters.size() == b.filters.size());
    for (std::size_t i = 0; i < a.filters.size(); ++i) {
        CHECK(a.filters[i].mask.kept == b.filters[i].mask.kept);
    }
}

TEST_CASE("filtering lowers 3D backbone FLOPs against the unfiltered run") {
    const Scene scene = generate_scene(small_scene());
    PipelineConfig cfg = small_config();
    PipelineConfig unfiltered = cfg;
    unfiltered.filter.layers_3d.clear();
    unfiltered.filter.layers_2d.clear();

    ModelWeights model = build_random_model(cfg);
    PredictorNet na = PredictorNet::init(1);
    PredictorNet nb = PredictorNet::init(1);
    auto opt = run_pipeline(cfg, model, na, scene.points);
    auto base = run_pipeline(unfiltered, model, nb, scene.points);
    CHECK(opt.ledger.total_flops(Domain::kThreeD) < base.ledger.total_flops(Domain::kThreeD));
    CHECK(opt.ledger.total_flops(Domain::kTwoD) < base.ledger.total_flops(Domain::kTwoD));
}

TEST_CASE("ledger FLOPs match brute-force pair recounts through a filtered stack") {
    const Scene scene = generate_scene(small_scene(9));
    PipelineConfig cfg = small_config();
    SparseVoxelTensor t = voxelize(scene.points, cfg.grid);
    DensityHeatmap density = density_heatmap(scene.points, cfg.grid, 5);

    auto k1 = KernelWeights::random(3, 3, 1, ConvKind::kSubmanifold, 4, 8, 31);
    auto r1 = conv3_run(t, k1);
    CHECK(r1.stats.pairs == oracles::count_pairs(t.coords, r1.rulebook.out_coords, k1));
    CHECK(r1.stats.flops == 2ull * 4 * 8 * r1.stats.pairs);

    PredictorNet net = PredictorNet::init(2);
    net.ensure_compress(8);
    FilterConfig fcfg;
    fcfg.r_drop = 0.4;
    SparseVoxelTensor filtered = filter_3d(r1.out, fcfg, net, density);

    auto k2 = KernelWeights::random(3, 3, 1, ConvKind::kSubmanifold, 8, 8, 32);
    auto r2 = conv3_run(filtered, k2);
    CHECK(r2.stats.pairs == oracles::count_pairs(filtered.coords, r2.rulebook.out_coords, k2));
    CHECK(r2.stats.flops == 2ull * 8 * 8 * r2.stats.pairs);
    CHECK(r2.stats.flops < 2ull * 8 * 8 * oracles::count_pairs(r1.out.coords, r1.out.coords, k2));
}

TEST_CASE("raising the drop rate never raises downstream layer costs") {
    const Scene scene = generate_scene(small_scene(13));
    ModelWeights model = build_random_model(small_config());
    std::vector<CostLedger> ledgers;
    for (double r : {0.1, 0.25, 0.5, 0.8}) {
        PipelineConfig cfg = small_config();
        cfg.filter.r_drop = r;
        PredictorNet net = PredictorNet::init(1);
        ledgers.push_back(run_pipeline(cfg, model, net, scene.points).ledger);
    }
    for (std::size_t i = 1; i < ledgers.size(); ++i) {
        const auto& lo = ledgers[i - 1].entries();
        const auto& hi = ledgers[i].entries();
        REQUIRE(lo.size() == hi.size());
        for (std::size_t e = 0; e < lo.size(); ++e) {
            if (lo[e].domain == Domain::kPredictor) continue;
            CHECK(hi[e].flops <= lo[e].flops);
            CHECK(hi[e].activation_bytes <= lo[e].activation_bytes);
        }
    }
}

TEST_CASE("normal BN drives the first 2D layer dense, sp keeps it sparse") {
    const Scene scene = generate_scene(small_scene(17));

    PipelineConfig dense_cfg = small_config();
    dense_cfg.filter.layers_3d.clear();
    dense_cfg.filter.layers_2d.clear();
    for (LayerSpec& l : dense_cfg.backbone2d) l.norm = NormVariant::kNormal;
    ModelWeights model = build_random_model(dense_cfg);
    PredictorNet na = PredictorNet::init(1);
    auto dense_run = run_pipeline(dense_cfg, model, na, scene.points);
    for (const auto& e : dense_run.ledger.entries()) {
        if (e.name == "2d_conv_1") {
            CHECK(e.dense_rate_pre == 1.0);  // sparsity collapses after the first BN
        }
        if (e.name == "bev_project") CHECK(e.dense_rate_pre < 1.0);
    }

    // with sp and heavy 2D filtering, the layers beyond the filter stay sparse
    PipelineConfig sp_cfg = small_config();
    sp_cfg.filter.layers_3d.clear();
    sp_cfg.filter.layers_2d = {2};
    sp_cfg.filter.r_drop = 0.8;
    PredictorNet nb = PredictorNet::init(1);
    auto sp_run = run_pipeline(sp_cfg, model, nb, scene.points);
    for (const auto& e : sp_run.ledger.entries()) {
        if (e.name == "2d_conv_2") CHECK(e.dense_rate_post < 0.25);
        if (e.name == "2d_conv_3") {
            CHECK(e.dense_rate_pre < 1.0);
            CHECK(e.dense_rate_post < 1.0);
        }
    }
}

TEST_CASE("ledger totals equal the sum of their entries") {
    const Scene scene = generate_scene(small_scene(21));
    PipelineConfig cfg = small_config();
    ModelWeights model = build_random_model(cfg);
    PredictorNet net = PredictorNet::init(1);
    auto res = run_pipeline(cfg, model, net, scene.points);
    std::uint64_t flops = 0, bytes = 0;
    for (const auto& e : res.ledger.entries()) {
        flops += e.flops;
        bytes += e.activation_bytes;
    }
    CHECK(flops == res.ledger.total_flops());
    CHECK(bytes == res.ledger.total_activation_bytes());
    CHECK(res.ledger.total_flops() ==
          res.ledger.total_flops(Domain::kThreeD) + res.ledger.total_flops(Domain::kTwoD) +
              res.ledger.total_flops(Domain::kPredictor));
}

TEST_CASE("report_costs ratios") {
    CostLedger a, b;
    a.log({"l1", Domain::kThreeD, 100, 40, 0, 0, 0.5, 0.5});
    a.log({"l2", Domain::kTwoD, 200, 100, 0, 0, 1.0, 1.0});
    b.log({"l1", Domain::kThreeD, 100, 40, 0, 0, 0.5, 0.5});
    b.log({"l2", Domain::kTwoD, 200, 100, 0, 0, 1.0, 1.0});
    auto rep = report_costs(a, b);
    for (const auto& row : rep.rows) {
        CHECK(row.flops_ratio == 1.0);
        CHECK(row.activation_ratio == 1.0);
    }
    CHECK(rep.flops_ratio_total == 1.0);

    CostLedger opt;
    opt.log({"l1", Domain::kThreeD, 100, 40, 0, 0, 0.5, 0.5});
    opt.log({"l2", Domain::kTwoD, 200, 20, 0, 0, 1.0, 1.0});
    auto rep2 = report_costs(opt, b);
    CHECK(rep2.activation_ratio_2d == 5.0);

    CostLedger mismatched;
    mismatched.log({"other", Domain::kThreeD, 1, 1, 0, 0, 0, 0});
    CHECK_THROWS_AS(report_costs(mismatched, b), ShapeError);
}

TEST_CASE("generated scenes are deterministic and respect their spec") {
    const SceneSpec spec = small_scene(33);
    Scene a = generate_scene(spec);
    Scene b = generate_scene(spec);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
        CHECK(a.points[i].r == b.points[i].r);
    }

    SceneSpec box_only;
    box_only.extent_m[0] = box_only.extent_m[1] = 20.0;
    box_only.extent_m[2] = 3.0;
    box_only.ground_points = 0;
    box_only.clutter_points = 0;
    box_only.boxes.push_back({3.0, -2.0, 1.0, 2.0, 0.7, 1.5, 500});
    Scene boxed = generate_scene(box_only);
    REQUIRE(boxed.points.size() == 500);
    for (const auto& p : boxed.points) {
        CHECK(oracles::point_in_box_loop(p.x, p.y, 3.0, -2.0, 1.0, 2.0, 0.7));
    }
}

TEST_CASE("zero radial exponent gives a uniform equal-area histogram") {
    SceneSpec spec;
    spec.extent_m[0] = spec.extent_m[1] = 40.0;
    spec.extent_m[2] = 3.0;
    spec.ground_points = 0;
    spec.clutter_points = 20000;
    spec.radial_exponent = 0.0;
    spec.seed = 44;
    Scene scene = generate_scene(spec);

    // ten equal-area annuli between r=1 (the generator's inner radius) and r=20
    const double r0 = 1.0, r1 = 20.0;
    std::vector<std::int64_t> counts(10, 0);
    for (const auto& p : scene.points) {
        const double rr = std::hypot(p.x, p.y);
        if (rr < r0 || rr >= r1) continue;
        const double frac = (rr * rr - r0 * r0) / (r1 * r1 - r0 * r0);
        counts[std::min(9, static_cast<int>(frac * 10.0))]++;
    }
    // chi-squared with 9 dof: p > 0.01 means the statistic stays under 21.666
    CHECK(oracles::chi2_uniform(counts) < 21.666);
}

TEST_CASE("cloud binary round-trips through float32") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "svox_cloud_test.bin").string();
    Scene scene = generate_scene(small_scene(55));
    write_cloud_bin(path, scene.points);
    auto loaded = read_cloud_bin(path);
    REQUIRE(loaded.size() == scene.points.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].x == static_cast<double>(static_cast<float>(scene.points[i].x)));
        CHECK(loaded[i].r == static_cast<double>(static_cast<float>(scene.points[i].r)));
    }
    write_text_file(path, "12345");  // 5 bytes: not a whole quadruple
    CHECK_THROWS_AS(read_cloud_bin(path), InvalidInput);
    fs::remove(path);
}

TEST_CASE("model file round-trips and is validated against the config") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "svox_model_test.json").string();
    PipelineConfig cfg = small_config();
    ModelWeights m = build_random_model(cfg);
    Rng rng(5);
    m.norm2d[0] = fit_stats(
        std::vector<SparseBEVTensor>{oracles::random_bev_tensor(rng, Extent2{8, 8}, 16, 0.5)},
        NormVariant::kSp);
    save_model(path, m, cfg);
    ModelWeights loaded = load_model(path);
    validate_model(cfg, loaded);
    REQUIRE(loaded.w3d.size() == m.w3d.size());
    CHECK(loaded.w3d[1].weights[3] == m.w3d[1].weights[3]);
    REQUIRE(loaded.norm2d[0].has_value());
    CHECK(loaded.norm2d[0]->variance == m.norm2d[0]->variance);

    // a kernel that no longer matches the config must be rejected
    PipelineConfig other = cfg;
    other.backbone3d[0].c_out = 4;
    CHECK_THROWS_AS(validate_model(other, loaded), ConfigError);
    fs::remove(path);
}

TEST_CASE("engine config parsing rejects malformed input") {
    CHECK_THROWS_AS(engine_config_from_json(json::parse(R"({"schema_version": 2})")),
                    ConfigError);
    CHECK_THROWS_AS(engine_config_from_json(json::parse(R"({"grid": {}})")), ConfigError);

    json ok = {
        {"grid",
         {{"origin", {0.0, 0.0, 0.0}}, {"voxel_size", {1.0, 1.0, 1.0}}, {"extent", {8, 8, 4}}}},
        {"backbone3d",
         json::array({{{"name", "a"}, {"out_channels", 8}, {"kind", "submanifold"}}})},
        {"backbone2d", json::array({{{"name", "b"}, {"out_channels", 8}}})},
        {"filter",
         {{"r_drop", 0.25}, {"layers_3d", {1}}, {"layers_2d", {1}}}},
    };
    EngineConfig cfg = engine_config_from_json(ok);
    CHECK(cfg.pipeline.backbone3d.size() == 1);
    CHECK(cfg.pipeline.filter.layers_3d == std::vector<int>{1});

    json bad_layer = ok;
    bad_layer["filter"]["layers_3d"] = {7};
    CHECK_THROWS_AS(engine_config_from_json(bad_layer), ConfigError);
}
