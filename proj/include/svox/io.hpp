#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svox/bev.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/heatmap.hpp"
#include "svox/pipeline.hpp"
#include "svox/predictor.hpp"
#include "svox/scene.hpp"

namespace svox {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// point cloud binary: little-endian float32 (x, y, z, r) quadruples, no header
// ---------------------------------------------------------------------------

inline std::vector<PointXYZR> read_cloud_bin(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open point cloud file: " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff bytes = f.tellg();
    f.seekg(0, std::ios::beg);
    if (bytes % 16 != 0) {
        throw InvalidInput("point cloud file size is not a multiple of 16 bytes: " + path);
    }
    const std::size_t n = static_cast<std::size_t>(bytes / 16);
    std::vector<float> raw(n * 4);
    f.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (!f) throw IoError("failed reading point cloud file: " + path);
    std::vector<PointXYZR> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts[i] = PointXYZR{raw[i * 4 + 0], raw[i * 4 + 1], raw[i * 4 + 2], raw[i * 4 + 3]};
    }
    return pts;
}

inline void write_cloud_bin(const std::string& path, const std::vector<PointXYZR>& pts) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write point cloud file: " + path);
    std::vector<float> raw(pts.size() * 4);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        raw[i * 4 + 0] = static_cast<float>(pts[i].x);
        raw[i * 4 + 1] = static_cast<float>(pts[i].y);
        raw[i * 4 + 2] = static_cast<float>(pts[i].z);
        raw[i * 4 + 3] = static_cast<float>(pts[i].r);
    }
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!f) throw IoError("failed writing point cloud file: " + path);
}

// ---------------------------------------------------------------------------
// text / image exports
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write file: " + path);
    f << content;
    if (!f) throw IoError("failed writing file: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

namespace detail {

inline std::string grid_csv(Extent2 e, const std::vector<double>& vals) {
    std::ostringstream os;
    char buf[32];
    for (std::int32_t v = 0; v < e.h; ++v) {
        for (std::int32_t u = 0; u < e.w; ++u) {
            std::snprintf(buf, sizeof(buf), "%.9g", vals[static_cast<std::size_t>(v) * e.w + u]);
            os << buf;
            if (u + 1 < e.w) os << ',';
        }
        os << '\n';
    }
    return os.str();
}

inline std::string grid_pgm(Extent2 e, const std::vector<double>& vals) {
    std::string out = "P5\n" + std::to_string(e.w) + " " + std::to_string(e.h) + "\n255\n";
    out.reserve(out.size() + vals.size());
    for (double x : vals) {
        const double c = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    return out;
}

}  // namespace detail

inline std::string to_csv(const Heatmap& h) { return detail::grid_csv(h.extent, h.values); }
inline std::string to_csv(const DensityHeatmap& d) { return detail::grid_csv(d.extent, d.values); }
inline std::string to_pgm(const Heatmap& h) { return detail::grid_pgm(h.extent, h.values); }
inline std::string to_pgm(const DensityHeatmap& d) { return detail::grid_pgm(d.extent, d.values); }

inline std::vector<double> mask_grid(const BEVMask& m) {
    std::vector<double> vals(static_cast<std::size_t>(m.extent.w) * m.extent.h, 0.0);
    for (const Coord2& c : m.kept) {
        vals[static_cast<std::size_t>(c.v) * m.extent.w + c.u] = 1.0;
    }
    return vals;
}

inline std::string to_csv(const BEVMask& m) { return detail::grid_csv(m.extent, mask_grid(m)); }
inline std::string to_pgm(const BEVMask& m) { return detail::grid_pgm(m.extent, mask_grid(m)); }

inline std::string voxels_csv(const SparseVoxelTensor& t) {
    std::ostringstream os;
    os << "x,y,z";
    for (std::int64_t c = 0; c < t.channels(); ++c) os << ",f" << c;
    os << '\n';
    char buf[32];
    for (std::int64_t i = 0; i < t.size(); ++i) {
        os << t.coords[i].x << ',' << t.coords[i].y << ',' << t.coords[i].z;
        for (std::int64_t c = 0; c < t.channels(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", t.feats(i, c));
            os << ',' << buf;
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

inline json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open json file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError("invalid json in " + path + ": " + e.what());
    }
    return j;
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw ConfigError(ctx + ": missing required field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError(ctx + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError("field '" + key + "' has the wrong type");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// scene spec and box files
// ---------------------------------------------------------------------------

inline json scene_box_to_json(const SceneBoxSpec& b) {
    return json{{"center", {b.center_x, b.center_y}}, {"half", {b.half_x, b.half_y}},
                {"yaw", b.yaw},      {"height", b.height},
                {"points", b.points}};
}

inline SceneBoxSpec scene_box_from_json(const json& j) {
    SceneBoxSpec b;
    const auto center = detail::require<std::vector<double>>(j, "center", "box");
    const auto half = detail::require<std::vector<double>>(j, "half", "box");
    if (center.size() != 2 || half.size() != 2) {
        throw ConfigError("box center/half must have 2 components");
    }
    b.center_x = center[0];
    b.center_y = center[1];
    b.half_x = half[0];
    b.half_y = half[1];
    b.yaw = detail::get_or(j, "yaw", 0.0);
    b.height = detail::get_or(j, "height", 1.6);
    b.points = detail::get_or(j, "points", 400);
    return b;
}

inline json scene_spec_to_json(const SceneSpec& s) {
    json j{{"extent_m", {s.extent_m[0], s.extent_m[1], s.extent_m[2]}},
           {"ground_points", s.ground_points},
           {"clutter_points", s.clutter_points},
           {"radial_exponent", s.radial_exponent},
           {"seed", s.seed},
           {"random_boxes", s.random_boxes},
           {"boxes", json::array()}};
    for (const SceneBoxSpec& b : s.boxes) j["boxes"].push_back(scene_box_to_json(b));
    return j;
}

inline SceneSpec scene_spec_from_json(const json& j) {
    SceneSpec s;
    const auto ext = detail::require<std::vector<double>>(j, "extent_m", "scene");
    if (ext.size() != 3) throw ConfigError("scene extent_m must have 3 components");
    for (int a = 0; a < 3; ++a) s.extent_m[a] = ext[a];
    s.ground_points = detail::get_or(j, "ground_points", 20000);
    s.clutter_points = detail::get_or(j, "clutter_points", 5000);
    s.radial_exponent = detail::get_or(j, "radial_exponent", 2.0);
    s.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    s.random_boxes = detail::get_or(j, "random_boxes", 0);
    if (j.contains("boxes")) {
        for (const auto& bj : j.at("boxes")) s.boxes.push_back(scene_box_from_json(bj));
    }
    s.validate();
    return s;
}

inline SceneSpec load_scene_spec(const std::string& path) {
    return scene_spec_from_json(detail::parse_json_file(path));
}

inline void save_boxes(const std::string& path, const std::vector<SceneBoxSpec>& boxes) {
    json j{{"boxes", json::array()}};
    for (const SceneBoxSpec& b : boxes) j["boxes"].push_back(scene_box_to_json(b));
    write_text_file(path, j.dump(2) + "\n");
}

inline std::vector<SceneBoxSpec> load_boxes(const std::string& path) {
    const json j = detail::parse_json_file(path);
    std::vector<SceneBoxSpec> out;
    for (const auto& bj : detail::require<json>(j, "boxes", "boxes file")) {
        out.push_back(scene_box_from_json(bj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// model file: backbone kernels (+ optional pinned normalization stats)
// ---------------------------------------------------------------------------

inline json kernel_to_json(const KernelWeights& k) {
    json w = json::array();
    for (const Matrix& m : k.weights) {
        json rows = json::array();
        for (std::int64_t r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (std::int64_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        w.push_back(std::move(rows));
    }
    return json{{"kernel_size", k.kernel_size},
                {"stride", k.stride},
                {"conv_kind", conv_kind_name(k.kind)},
                {"dim", k.dim},
                {"c_in", k.c_in},
                {"c_out", k.c_out},
                {"padding", "zero-same"},
                {"weights", std::move(w)}};
}

inline KernelWeights kernel_from_json(const json& j, const std::string& ctx) {
    KernelWeights k;
    k.kernel_size = detail::require<int>(j, "kernel_size", ctx);
    k.stride = detail::require<int>(j, "stride", ctx);
    k.kind = conv_kind_from_string(detail::require<std::string>(j, "conv_kind", ctx));
    k.dim = detail::require<int>(j, "dim", ctx);
    k.c_in = detail::require<int>(j, "c_in", ctx);
    k.c_out = detail::require<int>(j, "c_out", ctx);
    const json& w = detail::require<json>(j, "weights", ctx);
    if (!w.is_array() || static_cast<int>(w.size()) != k.offset_count()) {
        throw ConfigError(ctx + ": weights must be an offset-major array of K^D matrices");
    }
    for (const auto& mj : w) {
        if (!mj.is_array() || static_cast<int>(mj.size()) != k.c_in) {
            throw ConfigError(ctx + ": weight matrix row count must equal c_in");
        }
        Matrix m(k.c_in, k.c_out);
        for (int r = 0; r < k.c_in; ++r) {
            const auto& row = mj.at(r);
            if (!row.is_array() || static_cast<int>(row.size()) != k.c_out) {
                throw ConfigError(ctx + ": weight matrix column count must equal c_out");
            }
            for (int c = 0; c < k.c_out; ++c) m(r, c) = row.at(c).get<double>();
        }
        k.weights.push_back(std::move(m));
    }
    k.validate();
    return k;
}

inline json norm_params_to_json(const NormParams& p) {
    return json{{"variant", norm_variant_name(p.variant)}, {"epsilon", p.epsilon},
                {"variance", p.variance},                  {"mean", p.mean},
                {"gamma", p.gamma},                        {"beta_affine", p.beta_affine}};
}

inline NormParams norm_params_from_json(const json& j) {
    NormParams p;
    p.variant = norm_variant_from_string(detail::require<std::string>(j, "variant", "norm"));
    p.epsilon = detail::require<double>(j, "epsilon", "norm");
    p.variance = detail::require<std::vector<double>>(j, "variance", "norm");
    p.mean = detail::require<std::vector<double>>(j, "mean", "norm");
    p.gamma = detail::require<std::vector<double>>(j, "gamma", "norm");
    p.beta_affine = detail::require<std::vector<double>>(j, "beta_affine", "norm");
    p.validate();
    return p;
}

inline void save_model(const std::string& path, const ModelWeights& m,
                       const PipelineConfig& cfg) {
    json j{{"schema_version", 1}, {"layers3d", json::array()}, {"layers2d", json::array()}};
    for (std::size_t i = 0; i < m.w3d.size(); ++i) {
        json lj = kernel_to_json(m.w3d[i]);
        lj["name"] = cfg.backbone3d[i].name;
        if (m.norm3d[i]) lj["norm"] = norm_params_to_json(*m.norm3d[i]);
        j["layers3d"].push_back(std::move(lj));
    }
    for (std::size_t i = 0; i < m.w2d.size(); ++i) {
        json lj = kernel_to_json(m.w2d[i]);
        lj["name"] = cfg.backbone2d[i].name;
        if (m.norm2d[i]) lj["norm"] = norm_params_to_json(*m.norm2d[i]);
        j["layers2d"].push_back(std::move(lj));
    }
    write_text_file(path, j.dump(2) + "\n");
}

inline ModelWeights load_model(const std::string& path) {
    const json j = detail::parse_json_file(path);
    if (detail::get_or(j, "schema_version", 1) != 1) {
        throw ConfigError("unsupported model schema_version in " + path);
    }
    ModelWeights m;
    for (const auto& lj : detail::require<json>(j, "layers3d", "model")) {
        m.w3d.push_back(kernel_from_json(lj, "model 3d layer"));
        m.norm3d.push_back(lj.contains("norm")
                               ? std::optional<NormParams>(norm_params_from_json(lj.at("norm")))
                               : std::nullopt);
    }
    for (const auto& lj : detail::require<json>(j, "layers2d", "model")) {
        m.w2d.push_back(kernel_from_json(lj, "model 2d layer"));
        m.norm2d.push_back(lj.contains("norm")
                               ? std::optional<NormParams>(norm_params_from_json(lj.at("norm")))
                               : std::nullopt);
    }
    return m;
}

// ---------------------------------------------------------------------------
// predictor weights file
// ---------------------------------------------------------------------------

inline void save_predictor(const std::string& path, const PredictorNet& net) {
    json j{{"schema_version", 1},
           {"pool_factor", net.pool_factor},
           {"seed", net.seed},
           {"layers", json::array()}};
    for (const std::string& id : net.layer_ids()) {
        const ConvLayer& l = net.layer(id);
        j["layers"].push_back(json{{"id", id},
                                   {"c_in", l.c_in},
                                   {"c_out", l.c_out},
                                   {"ksize", l.ksize},
                                   {"groups", l.groups},
                                   {"w", l.w},
                                   {"b", l.b}});
    }
    write_text_file(path, j.dump(2) + "\n");
}

inline PredictorNet load_predictor(const std::string& path) {
    const json j = detail::parse_json_file(path);
    if (detail::get_or(j, "schema_version", 1) != 1) {
        throw ConfigError("unsupported predictor schema_version in " + path);
    }
    PredictorNet net;
    net.pool_factor = detail::get_or(j, "pool_factor", 8);
    net.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
    bool have[4] = {false, false, false, false};
    for (const auto& lj : detail::require<json>(j, "layers", "predictor")) {
        ConvLayer l;
        const std::string id = detail::require<std::string>(lj, "id", "predictor layer");
        l.c_in = detail::require<int>(lj, "c_in", id);
        l.c_out = detail::require<int>(lj, "c_out", id);
        l.ksize = detail::require<int>(lj, "ksize", id);
        l.groups = detail::require<int>(lj, "groups", id);
        l.w = detail::require<std::vector<double>>(lj, "w", id);
        l.b = detail::require<std::vector<double>>(lj, "b", id);
        try {
            l.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("predictor layer " + id + ": " + e.what());
        }
        if (id == "trunk1") {
            net.trunk1 = std::move(l);
            have[0] = true;
        } else if (id == "trunk2") {
            net.trunk2 = std::move(l);
            have[1] = true;
        } else if (id == "trunk3") {
            net.trunk3 = std::move(l);
            have[2] = true;
        } else if (id == "head") {
            net.head = std::move(l);
            have[3] = true;
        } else if (id.rfind("compress_", 0) == 0) {
            net.compress.emplace(std::stoi(id.substr(9)), std::move(l));
        } else {
            throw ConfigError("unknown predictor layer id in file: " + id);
        }
    }
    if (!(have[0] && have[1] && have[2] && have[3])) {
        throw ConfigError("predictor file is missing trunk or head layers: " + path);
    }
    if (net.trunk1.c_in != 16 || net.trunk2.c_in != net.trunk1.c_out ||
        net.trunk3.c_in != net.trunk2.c_out || net.head.c_in != net.trunk3.c_out ||
        net.head.c_out != 1) {
        throw ConfigError("predictor layer shapes do not chain: " + path);
    }
    for (const auto& kv : net.compress) {
        if (kv.second.c_in != kv.first || kv.second.c_out != 16) {
            throw ConfigError("predictor compression layer shape mismatch: " + path);
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// engine config file
// ---------------------------------------------------------------------------

struct EngineConfig {
    PipelineConfig pipeline;
    std::string output_dir = "out";
    std::string input_cloud;              // binary cloud path (may be empty)
    std::string input_boxes;              // optional boxes json path
    std::optional<SceneSpec> scene;       // inline scene generation
    std::string model_path;               // optional backbone weights
    std::string predictor_weights;        // optional predictor weights
    // training block
    int train_scenes = 20;
    std::optional<SceneSpec> train_template;
    int epochs = 10;
    double lr = 0.003;
    LrSchedule schedule = LrSchedule::kOneCycle;
    // calibration block
    int calib_scenes = 10;
    std::vector<double> beta_grid;
};

inline LayerSpec layer_spec_from_json(const json& j, int dim) {
    LayerSpec l;
    l.name = detail::require<std::string>(j, "name", "layer");
    l.kernel = detail::get_or(j, "kernel", 3);
    l.stride = detail::get_or(j, "stride", 1);
    l.kind = conv_kind_from_string(detail::get_or<std::string>(
        j, "kind", dim == 3 ? "submanifold" : "generative"));
    l.c_out = detail::require<int>(j, "out_channels", l.name);
    const std::string norm = detail::get_or<std::string>(j, "norm", "none");
    if (norm != "none") l.norm = norm_variant_from_string(norm);
    return l;
}

inline json layer_spec_to_json(const LayerSpec& l) {
    return json{{"name", l.name},
                {"kernel", l.kernel},
                {"stride", l.stride},
                {"kind", conv_kind_name(l.kind)},
                {"out_channels", l.c_out},
                {"norm", l.norm ? norm_variant_name(*l.norm) : "none"}};
}

inline EngineConfig engine_config_from_json(const json& j) {
    EngineConfig cfg;
    if (detail::get_or(j, "schema_version", 1) != 1) {
        throw ConfigError("unsupported config schema_version");
    }

    const json& gj = detail::require<json>(j, "grid", "config");
    const auto origin = detail::require<std::vector<double>>(gj, "origin", "grid");
    const auto vsize = detail::require<std::vector<double>>(gj, "voxel_size", "grid");
    const auto ext = detail::require<std::vector<std::int32_t>>(gj, "extent", "grid");
    if (origin.size() != 3 || vsize.size() != 3 || ext.size() != 3) {
        throw ConfigError("grid origin/voxel_size/extent must have 3 components");
    }
    for (int a = 0; a < 3; ++a) {
        cfg.pipeline.grid.origin[a] = origin[a];
        cfg.pipeline.grid.voxel_size[a] = vsize[a];
        cfg.pipeline.grid.extent[a] = ext[a];
    }

    cfg.pipeline.reduce = reduce_from_string(detail::get_or<std::string>(j, "reduce", "mean"));
    for (const auto& lj : detail::require<json>(j, "backbone3d", "config")) {
        cfg.pipeline.backbone3d.push_back(layer_spec_from_json(lj, 3));
    }
    for (const auto& lj : detail::require<json>(j, "backbone2d", "config")) {
        cfg.pipeline.backbone2d.push_back(layer_spec_from_json(lj, 2));
    }

    if (j.contains("filter")) {
        const json& fj = j.at("filter");
        cfg.pipeline.filter.r_drop = detail::get_or(fj, "r_drop", 0.25);
        cfg.pipeline.filter.beta = detail::get_or(fj, "beta", 0.5);
        cfg.pipeline.filter.density_pool = detail::get_or(fj, "density_pool", 5);
        cfg.pipeline.filter.layers_3d = detail::get_or(fj, "layers_3d", std::vector<int>{});
        cfg.pipeline.filter.layers_2d = detail::get_or(fj, "layers_2d", std::vector<int>{});
        const std::string tb = detail::get_or<std::string>(fj, "tie_break", "coord-lex");
        if (tb != "coord-lex") throw ConfigError("unknown tie_break rule: " + tb);
    }

    cfg.pipeline.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    cfg.pipeline.report_rulebook_memory = detail::get_or(j, "report_rulebook_memory", false);
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
    cfg.model_path = detail::get_or<std::string>(j, "model", "");

    if (j.contains("predictor")) {
        const json& pj = j.at("predictor");
        cfg.predictor_weights = detail::get_or<std::string>(pj, "weights", "");
        cfg.pipeline.sigma = detail::get_or(pj, "sigma", 5.0);
        cfg.pipeline.predictor_seed = detail::get_or<std::uint64_t>(pj, "seed", 1);
    }

    if (j.contains("input")) {
        const json& ij = j.at("input");
        cfg.input_cloud = detail::get_or<std::string>(ij, "cloud", "");
        cfg.input_boxes = detail::get_or<std::string>(ij, "boxes", "");
        if (ij.contains("scene")) cfg.scene = scene_spec_from_json(ij.at("scene"));
        if (cfg.input_cloud.empty() && !cfg.scene) {
            throw ConfigError("input block needs either a cloud path or an inline scene");
        }
    }

    if (j.contains("training")) {
        const json& tj = j.at("training");
        cfg.train_scenes = detail::get_or(tj, "scenes", 20);
        if (tj.contains("scene_template")) {
            cfg.train_template = scene_spec_from_json(tj.at("scene_template"));
        }
        cfg.epochs = detail::get_or(tj, "epochs", 10);
        cfg.lr = detail::get_or(tj, "lr", 0.003);
        cfg.schedule = schedule_from_string(
            detail::get_or<std::string>(tj, "schedule", "one-cycle"));
    }

    if (j.contains("calibration")) {
        const json& cj = j.at("calibration");
        cfg.calib_scenes = detail::get_or(cj, "scenes", 10);
        cfg.beta_grid = detail::get_or(cj, "beta_grid", std::vector<double>{});
    }

    cfg.pipeline.validate();
    return cfg;
}

inline EngineConfig load_engine_config(const std::string& path) {
    return engine_config_from_json(detail::parse_json_file(path));
}

}  // namespace svox
