#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "svox/error.hpp"

namespace svox {

enum class Domain { kThreeD, kTwoD, kPredictor };

inline const char* domain_name(Domain d) {
    switch (d) {
        case Domain::kThreeD: return "3d";
        case Domain::kTwoD: return "2d";
        default: return "predictor";
    }
}

// One accounted layer. FLOPs follow the multiply-accumulate-times-two rule;
// activation size is stored element count x channels x 4 bytes (accounting
// convention, independent of in-memory representation). Rulebook bytes cover
// the input-output mapping and are reported in a separate optional column.
struct LayerCost {
    std::string name;
    Domain domain = Domain::kThreeD;
    std::uint64_t flops = 0;
    std::uint64_t activation_bytes = 0;
    std::uint64_t rulebook_pairs = 0;
    std::uint64_t rulebook_bytes = 0;
    double dense_rate_pre = 0.0;   // before any filtering at this layer
    double dense_rate_post = 0.0;  // after filtering (equal to pre when unfiltered)
};

// Running FLOP and activation-size totals per layer.
class CostLedger {
public:
    void log(LayerCost entry) { entries_.push_back(std::move(entry)); }

    const std::vector<LayerCost>& entries() const { return entries_; }

    std::uint64_t total_flops(Domain d) const {
        std::uint64_t s = 0;
        for (const auto& e : entries_)
            if (e.domain == d) s += e.flops;
        return s;
    }

    std::uint64_t total_activation_bytes(Domain d) const {
        std::uint64_t s = 0;
        for (const auto& e : entries_)
            if (e.domain == d) s += e.activation_bytes;
        return s;
    }

    std::uint64_t total_flops() const {
        std::uint64_t s = 0;
        for (const auto& e : entries_) s += e.flops;
        return s;
    }

    std::uint64_t total_activation_bytes() const {
        std::uint64_t s = 0;
        for (const auto& e : entries_) s += e.activation_bytes;
        return s;
    }

    // CSV, one row per layer plus per-domain total rows.
    std::string to_csv(bool include_rulebook_bytes = false) const {
        std::ostringstream os;
        os << "layer,domain,flops,activation_bytes,rulebook_pairs,dense_rate_pre,dense_rate_post";
        if (include_rulebook_bytes) os << ",rulebook_bytes";
        os << "\n";
        char buf[64];
        for (const auto& e : entries_) {
            os << e.name << ',' << domain_name(e.domain) << ',' << e.flops << ','
               << e.activation_bytes << ',' << e.rulebook_pairs << ',';
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g", e.dense_rate_pre, e.dense_rate_post);
            os << buf;
            if (include_rulebook_bytes) os << ',' << e.rulebook_bytes;
            os << "\n";
        }
        for (Domain d : {Domain::kThreeD, Domain::kTwoD, Domain::kPredictor}) {
            os << "total_" << domain_name(d) << ",," << total_flops(d) << ','
               << total_activation_bytes(d) << ",,,";
            if (include_rulebook_bytes) os << ',';
            os << "\n";
        }
        return os.str();
    }

private:
    std::vector<LayerCost> entries_;
};

// Per-layer and total baseline/optimized compression ratios.
struct CostReport {
    struct Row {
        std::string name;
        Domain domain;
        double flops_ratio;       // baseline / optimized
        double activation_ratio;  // baseline / optimized
    };
    std::vector<Row> rows;
    double flops_ratio_3d = 1.0;
    double flops_ratio_2d = 1.0;
    double activation_ratio_3d = 1.0;
    double activation_ratio_2d = 1.0;
    double flops_ratio_total = 1.0;
    double activation_ratio_total = 1.0;

    std::string to_csv() const {
        std::ostringstream os;
        os << "layer,domain,flops_ratio,activation_ratio\n";
        char buf[64];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%.6g,%.6g", r.flops_ratio, r.activation_ratio);
            os << r.name << ',' << domain_name(r.domain) << ',' << buf << "\n";
        }
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g", flops_ratio_3d, activation_ratio_3d);
        os << "total_3d,," << buf << "\n";
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g", flops_ratio_2d, activation_ratio_2d);
        os << "total_2d,," << buf << "\n";
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g", flops_ratio_total, activation_ratio_total);
        os << "total,," << buf << "\n";
        return os.str();
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "layer                 domain  flops_ratio  activation_ratio\n";
        char buf[128];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%-20s  %-6s  %11.3f  %16.3f\n", r.name.c_str(),
                          domain_name(r.domain), r.flops_ratio, r.activation_ratio);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), "%-20s  %-6s  %11.3f  %16.3f\n", "total_3d", "",
                      flops_ratio_3d, activation_ratio_3d);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-20s  %-6s  %11.3f  %16.3f\n", "total_2d", "",
                      flops_ratio_2d, activation_ratio_2d);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-20s  %-6s  %11.3f  %16.3f\n", "total", "",
                      flops_ratio_total, activation_ratio_total);
        os << buf;
        return os.str();
    }
};

namespace detail {
inline double safe_ratio(std::uint64_t baseline, std::uint64_t optimized) {
    if (optimized == 0) return baseline == 0 ? 1.0 : 0.0;
    return static_cast<double>(baseline) / static_cast<double>(optimized);
}
}  // namespace detail

// Compression ratios baseline/optimized per layer and per domain. Both
// ledgers must carry the same backbone layer structure; predictor entries
// (present only on the optimized side) are folded into the grand total.
inline CostReport report_costs(const CostLedger& optimized, const CostLedger& baseline) {
    auto backbone = [](const CostLedger& l) {
        std::vector<const LayerCost*> rows;
        for (const auto& e : l.entries()) {
            if (e.domain != Domain::kPredictor) rows.push_back(&e);
        }
        return rows;
    };
    const auto a = backbone(optimized);
    const auto b = backbone(baseline);
    if (a.size() != b.size()) {
        throw ShapeError("ledger layer structure mismatch");
    }
    CostReport rep;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i]->name != b[i]->name || a[i]->domain != b[i]->domain) {
            throw ShapeError("ledger layer structure mismatch at " + a[i]->name);
        }
        rep.rows.push_back({a[i]->name, a[i]->domain, detail::safe_ratio(b[i]->flops, a[i]->flops),
                             detail::safe_ratio(b[i]->activation_bytes, a[i]->activation_bytes)});
    }
    rep.flops_ratio_3d =
        detail::safe_ratio(baseline.total_flops(Domain::kThreeD), optimized.total_flops(Domain::kThreeD));
    rep.flops_ratio_2d =
        detail::safe_ratio(baseline.total_flops(Domain::kTwoD), optimized.total_flops(Domain::kTwoD));
    rep.activation_ratio_3d = detail::safe_ratio(baseline.total_activation_bytes(Domain::kThreeD),
                                                  optimized.total_activation_bytes(Domain::kThreeD));
    rep.activation_ratio_2d = detail::safe_ratio(baseline.total_activation_bytes(Domain::kTwoD),
                                                  optimized.total_activation_bytes(Domain::kTwoD));
    rep.flops_ratio_total = detail::safe_ratio(baseline.total_flops(), optimized.total_flops());
    rep.activation_ratio_total =
        detail::safe_ratio(baseline.total_activation_bytes(), optimized.total_activation_bytes());
    return rep;
}

}  // namespace svox
