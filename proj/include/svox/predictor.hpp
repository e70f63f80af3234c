#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/heatmap.hpp"
#include "svox/ledger.hpp"
#include "svox/rng.hpp"

namespace svox {

// Dense multi-channel image used inside the predictor, layout [c][v][u].
struct DenseImage {
    std::int32_t w = 0;
    std::int32_t h = 0;
    std::int32_t c = 0;
    std::vector<double> v;

    DenseImage() = default;
    DenseImage(std::int32_t w, std::int32_t h, std::int32_t c)
        : w(w), h(h), c(c), v(static_cast<std::size_t>(w) * h * c, 0.0) {}

    double at(std::int32_t ch, std::int32_t x, std::int32_t y) const {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    double& at(std::int32_t ch, std::int32_t x, std::int32_t y) {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
};

// One dense 2D convolution layer, stride 1, zero padding "same". Weight
// layout is [c_out][c_in/groups][k][k] row-major.
struct ConvLayer {
    int c_in = 0;
    int c_out = 0;
    int ksize = 1;
    int groups = 1;
    std::vector<double> w;
    std::vector<double> b;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(c_out) * (c_in / groups) * ksize * ksize;
    }

    void validate() const {
        if (groups < 1 || c_in % groups != 0 || c_out % groups != 0) {
            throw ConfigError("conv channels must be divisible by group count");
        }
        if (w.size() != weight_count() || b.size() != static_cast<std::size_t>(c_out)) {
            throw ConfigError("conv layer parameter size mismatch");
        }
    }

    // Uniform init in +-sqrt(1 / fan_in), zero bias.
    static ConvLayer init(int c_in, int c_out, int ksize, int groups, Rng& rng) {
        ConvLayer l;
        l.c_in = c_in;
        l.c_out = c_out;
        l.ksize = ksize;
        l.groups = groups;
        l.w.resize(l.weight_count());
        l.b.assign(c_out, 0.0);
        const double bound = std::sqrt(1.0 / ((c_in / groups) * ksize * ksize));
        for (double& x : l.w) x = rng.uniform(-bound, bound);
        l.validate();
        return l;
    }

    std::uint64_t flops_per_pixel() const {
        return 2ull * ksize * ksize * (c_in / groups) * c_out;
    }
};

namespace detail {

inline DenseImage conv2d(const DenseImage& in, const ConvLayer& l) {
    if (in.c != l.c_in) throw ShapeError("conv input channel mismatch");
    DenseImage out(in.w, in.h, l.c_out);
    const int half = l.ksize / 2;
    const int cig = l.c_in / l.groups;
    const int cog = l.c_out / l.groups;
    for (int co = 0; co < l.c_out; ++co) {
        const int g = co / cog;
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                double acc = l.b[co];
                for (int ci = 0; ci < cig; ++ci) {
                    const int cin = g * cig + ci;
                    for (int ky = -half; ky <= half; ++ky) {
                        const int sy = y + ky;
                        if (sy < 0 || sy >= in.h) continue;
                        for (int kx = -half; kx <= half; ++kx) {
                            const int sx = x + kx;
                            if (sx < 0 || sx >= in.w) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(co) * cig + ci) * l.ksize +
                                 (ky + half)) *
                                    l.ksize +
                                (kx + half);
                            acc += l.w[wi] * in.at(cin, sx, sy);
                        }
                    }
                }
                out.at(co, x, y) = acc;
            }
        }
    }
    return out;
}

struct ConvGrads {
    std::vector<double> w;
    std::vector<double> b;
    DenseImage in;
};

inline ConvGrads conv2d_backward(const DenseImage& in, const ConvLayer& l,
                                 const DenseImage& grad_out) {
    ConvGrads g;
    g.w.assign(l.w.size(), 0.0);
    g.b.assign(l.b.size(), 0.0);
    g.in = DenseImage(in.w, in.h, in.c);
    const int half = l.ksize / 2;
    const int cig = l.c_in / l.groups;
    const int cog = l.c_out / l.groups;
    for (int co = 0; co < l.c_out; ++co) {
        const int grp = co / cog;
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                const double go = grad_out.at(co, x, y);
                if (go == 0.0) continue;
                g.b[co] += go;
                for (int ci = 0; ci < cig; ++ci) {
                    const int cin = grp * cig + ci;
                    for (int ky = -half; ky <= half; ++ky) {
                        const int sy = y + ky;
                        if (sy < 0 || sy >= in.h) continue;
                        for (int kx = -half; kx <= half; ++kx) {
                            const int sx = x + kx;
                            if (sx < 0 || sx >= in.w) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(co) * cig + ci) * l.ksize +
                                 (ky + half)) *
                                    l.ksize +
                                (kx + half);
                            g.w[wi] += go * in.at(cin, sx, sy);
                            g.in.at(cin, sx, sy) += go * l.w[wi];
                        }
                    }
                }
            }
        }
    }
    return g;
}

// Max pooling by an integer factor; border windows cover the valid cells only.
inline DenseImage maxpool(const DenseImage& in, int factor) {
    const std::int32_t ow = (in.w + factor - 1) / factor;
    const std::int32_t oh = (in.h + factor - 1) / factor;
    DenseImage out(ow, oh, in.c);
    for (std::int32_t c = 0; c < in.c; ++c) {
        for (std::int32_t y = 0; y < oh; ++y) {
            for (std::int32_t x = 0; x < ow; ++x) {
                double m = -std::numeric_limits<double>::infinity();
                const std::int32_t y1 = std::min<std::int32_t>((y + 1) * factor, in.h);
                const std::int32_t x1 = std::min<std::int32_t>((x + 1) * factor, in.w);
                for (std::int32_t sy = y * factor; sy < y1; ++sy) {
                    for (std::int32_t sx = x * factor; sx < x1; ++sx) {
                        m = std::max(m, in.at(c, sx, sy));
                    }
                }
                out.at(c, x, y) = m;
            }
        }
    }
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline DenseImage densify_image(const SparseBEVTensor& t) {
    DenseImage img(t.extent.w, t.extent.h, static_cast<std::int32_t>(t.channels()));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        for (std::int64_t c = 0; c < t.channels(); ++c) {
            img.at(static_cast<std::int32_t>(c), t.coords[i].u, t.coords[i].v) = t.feats(i, c);
        }
    }
    return img;
}

}  // namespace detail

struct LayerGrads {
    std::vector<double> w;
    std::vector<double> b;
};
using GradMap = std::map<std::string, LayerGrads>;

// The importance predictor: input BEV features are densified, max-pooled by 8
// and compressed to 16 channels by a per-width 1x1 layer, then run through a
// shared trunk of three grouped 3x3 convolutions (widths 16, 32, 16, groups
// 8) and a 1-channel 1x1 projection with sigmoid output.
struct PredictorNet {
    int pool_factor = 8;
    ConvLayer trunk1, trunk2, trunk3, head;
    std::map<int, ConvLayer> compress;  // keyed by input channel count
    std::uint64_t seed = 1;

    static PredictorNet init(std::uint64_t seed) {
        PredictorNet n;
        n.seed = seed;
        Rng rng(seed);
        n.trunk1 = ConvLayer::init(16, 16, 3, 8, rng);
        n.trunk2 = ConvLayer::init(16, 32, 3, 8, rng);
        n.trunk3 = ConvLayer::init(32, 16, 3, 8, rng);
        n.head = ConvLayer::init(16, 1, 1, 1, rng);
        return n;
    }

    bool has_compress(int channels) const { return compress.count(channels) > 0; }

    // Creates the 1x1 compression layer for a new input width (seeded).
    void ensure_compress(int channels) {
        if (has_compress(channels)) return;
        Rng rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(channels + 1)));
        compress.emplace(channels, ConvLayer::init(channels, 16, 1, 1, rng));
    }

    std::vector<std::string> layer_ids() const {
        std::vector<std::string> ids;
        for (const auto& kv : compress) ids.push_back("compress_" + std::to_string(kv.first));
        ids.insert(ids.end(), {"trunk1", "trunk2", "trunk3", "head"});
        return ids;
    }

    ConvLayer& layer(const std::string& id) {
        if (id == "trunk1") return trunk1;
        if (id == "trunk2") return trunk2;
        if (id == "trunk3") return trunk3;
        if (id == "head") return head;
        if (id.rfind("compress_", 0) == 0) {
            const int c = std::stoi(id.substr(9));
            auto it = compress.find(c);
            if (it != compress.end()) return it->second;
        }
        throw ConfigError("unknown predictor layer id: " + id);
    }
    const ConvLayer& layer(const std::string& id) const {
        return const_cast<PredictorNet*>(this)->layer(id);
    }

    Extent2 output_extent(Extent2 in) const {
        return Extent2{(in.w + pool_factor - 1) / pool_factor,
                       (in.h + pool_factor - 1) / pool_factor};
    }

    // Analytic forward cost at a given input shape; the ledger logs exactly
    // this value when the forward pass runs.
    std::uint64_t forward_flops(Extent2 in, int channels) const {
        const Extent2 oe = output_extent(in);
        const std::uint64_t pixels = static_cast<std::uint64_t>(oe.w) * oe.h;
        const std::uint64_t per_pixel = 2ull * channels * 16 + trunk1.flops_per_pixel() +
                                        trunk2.flops_per_pixel() + trunk3.flops_per_pixel() +
                                        head.flops_per_pixel();
        return pixels * per_pixel;
    }

    std::uint64_t forward_activation_bytes(Extent2 in, int channels) const {
        const Extent2 oe = output_extent(in);
        const std::uint64_t pixels = static_cast<std::uint64_t>(oe.w) * oe.h;
        const std::uint64_t ch = static_cast<std::uint64_t>(channels) + 16 + trunk1.c_out +
                                 trunk2.c_out + trunk3.c_out + head.c_out;
        return pixels * ch * 4ull;
    }
};

struct ForwardCache {
    DenseImage pooled, compressed, a1, a2, a3, logits;
    Heatmap out;
    int c_in = 0;
};

inline ForwardCache predictor_forward_cache(const SparseBEVTensor& x, const PredictorNet& net) {
    const int c = static_cast<int>(x.channels());
    if (!net.has_compress(c)) {
        throw ShapeError("predictor has no compression layer for " + std::to_string(c) +
                         " input channels");
    }
    ForwardCache fc;
    fc.c_in = c;
    fc.pooled = detail::maxpool(detail::densify_image(x), net.pool_factor);
    fc.compressed = detail::conv2d(fc.pooled, net.compress.at(c));
    fc.a1 = detail::conv2d(fc.compressed, net.trunk1);
    fc.a2 = detail::conv2d(fc.a1, net.trunk2);
    fc.a3 = detail::conv2d(fc.a2, net.trunk3);
    fc.logits = detail::conv2d(fc.a3, net.head);
    fc.out = Heatmap(Extent2{fc.logits.w, fc.logits.h});
    for (std::int32_t y = 0; y < fc.logits.h; ++y) {
        for (std::int32_t x2 = 0; x2 < fc.logits.w; ++x2) {
            fc.out.at(x2, y) = detail::sigmoid(fc.logits.at(0, x2, y));
        }
    }
    return fc;
}

// Forward pass producing the single-channel importance heatmap at 1/8 of the
// input resolution. Upsampling back to full resolution is the consumer's job
// (nearest-neighbor).
inline Heatmap predictor_forward(const SparseBEVTensor& x, const PredictorNet& net,
                                 CostLedger* ledger = nullptr) {
    ForwardCache fc = predictor_forward_cache(x, net);
    if (ledger != nullptr) {
        ledger->log(LayerCost{"predictor", Domain::kPredictor,
                              net.forward_flops(x.extent, fc.c_in),
                              net.forward_activation_bytes(x.extent, fc.c_in), 0, 0, 1.0, 1.0});
    }
    return fc.out;
}

// Gradients of mse_loss(forward(x), gt) with respect to every parameter.
inline GradMap predictor_backward_mse(const ForwardCache& fc, const Heatmap& gt,
                                      const PredictorNet& net) {
    if (!(fc.out.extent == gt.extent)) throw ShapeError("gt heatmap extent mismatch");
    const double inv_n = 1.0 / static_cast<double>(fc.out.values.size());

    DenseImage gz(fc.logits.w, fc.logits.h, 1);
    for (std::int32_t y = 0; y < fc.logits.h; ++y) {
        for (std::int32_t x = 0; x < fc.logits.w; ++x) {
            const double s = fc.out.at(x, y);
            gz.at(0, x, y) = 2.0 * inv_n * (s - gt.at(x, y)) * s * (1.0 - s);
        }
    }

    GradMap grads;
    auto gh = detail::conv2d_backward(fc.a3, net.head, gz);
    grads["head"] = LayerGrads{std::move(gh.w), std::move(gh.b)};
    auto g3 = detail::conv2d_backward(fc.a2, net.trunk3, gh.in);
    grads["trunk3"] = LayerGrads{std::move(g3.w), std::move(g3.b)};
    auto g2 = detail::conv2d_backward(fc.a1, net.trunk2, g3.in);
    grads["trunk2"] = LayerGrads{std::move(g2.w), std::move(g2.b)};
    auto g1 = detail::conv2d_backward(fc.compressed, net.trunk1, g2.in);
    grads["trunk1"] = LayerGrads{std::move(g1.w), std::move(g1.b)};
    auto gc = detail::conv2d_backward(fc.pooled, net.compress.at(fc.c_in), g1.in);
    grads["compress_" + std::to_string(fc.c_in)] = LayerGrads{std::move(gc.w), std::move(gc.b)};
    return grads;
}

enum class LrSchedule { kConstant, kOneCycle };

inline LrSchedule schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::kConstant;
    if (s == "one-cycle") return LrSchedule::kOneCycle;
    throw ConfigError("unknown lr schedule: " + s);
}

// One-cycle: linear ramp to the peak over the first 30% of steps, then
// linear decay to peak/25 by the final step.
inline double lr_at_step(LrSchedule schedule, double peak, std::int64_t step,
                         std::int64_t total_steps) {
    if (schedule == LrSchedule::kConstant) return peak;
    const std::int64_t warm = std::max<std::int64_t>(1, (total_steps * 3) / 10);
    if (step < warm) return peak * static_cast<double>(step + 1) / static_cast<double>(warm);
    const std::int64_t den = std::max<std::int64_t>(1, total_steps - 1 - warm);
    const double u = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(den));
    return peak * (1.0 - u) + (peak / 25.0) * u;
}

struct TrainSample {
    SparseBEVTensor bev;
    std::vector<GroundTruthBox> boxes;  // in full-resolution cells of bev.extent
};

// Adam on the analytic gradient of mse_loss(forward(x), gt), one sample per
// step, dataset iterated in order each epoch. Returns the per-epoch mean
// loss trace.
inline std::vector<double> train_predictor(PredictorNet& net,
                                           const std::vector<TrainSample>& dataset, int epochs,
                                           double lr, LrSchedule schedule, double sigma = 5.0) {
    if (dataset.empty()) throw EmptyBatch("training dataset is empty");
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;

    for (const TrainSample& s : dataset) {
        net.ensure_compress(static_cast<int>(s.bev.channels()));
    }

    struct AdamSlot {
        std::vector<double> mw, vw, mb, vb;
    };
    std::map<std::string, AdamSlot> state;

    const std::int64_t total_steps = static_cast<std::int64_t>(epochs) * dataset.size();
    std::vector<double> trace;
    trace.reserve(epochs);
    std::int64_t step = 0;
    double b1t = 1.0, b2t = 1.0;

    for (int e = 0; e < epochs; ++e) {
        double epoch_loss = 0.0;
        for (const TrainSample& s : dataset) {
            ForwardCache fc = predictor_forward_cache(s.bev, net);
            std::vector<GroundTruthBox> scaled;
            scaled.reserve(s.boxes.size());
            for (const GroundTruthBox& b : s.boxes) {
                scaled.push_back(b.scaled(1.0 / net.pool_factor));
            }
            const Heatmap gt = gt_heatmap(scaled, fc.out.extent, sigma);
            const double loss = mse_loss(fc.out, gt);
            if (!std::isfinite(loss)) {
                throw DivergedError("training loss became non-finite", step);
            }
            epoch_loss += loss;

            GradMap grads = predictor_backward_mse(fc, gt, net);
            const double cur_lr = lr_at_step(schedule, lr, step, total_steps);
            b1t *= kBeta1;
            b2t *= kBeta2;
            for (auto& [id, g] : grads) {
                ConvLayer& l = net.layer(id);
                AdamSlot& slot = state[id];
                if (slot.mw.empty()) {
                    slot.mw.assign(l.w.size(), 0.0);
                    slot.vw.assign(l.w.size(), 0.0);
                    slot.mb.assign(l.b.size(), 0.0);
                    slot.vb.assign(l.b.size(), 0.0);
                }
                auto adam = [&](std::vector<double>& p, const std::vector<double>& grad,
                                std::vector<double>& m, std::vector<double>& v) {
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
                        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
                        const double mhat = m[i] / (1.0 - b1t);
                        const double vhat = v[i] / (1.0 - b2t);
                        p[i] -= cur_lr * mhat / (std::sqrt(vhat) + kEps);
                    }
                };
                adam(l.w, g.w, slot.mw, slot.vw);
                adam(l.b, g.b, slot.mb, slot.vb);
            }
            ++step;
        }
        trace.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return trace;
}

}  // namespace svox
