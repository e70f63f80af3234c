#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "support/oracles.hpp"
#include "svox/core.hpp"
#include "svox/norm.hpp"
#include "svox/rng.hpp"

using namespace svox;

namespace {

SparseBEVTensor bev_from_values(const std::vector<double>& values, Extent2 extent) {
    std::vector<Coord2> coords;
    Matrix feats(static_cast<std::int64_t>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        coords.push_back(Coord2{static_cast<std::int32_t>(i % extent.w),
                                static_cast<std::int32_t>(i / extent.w)});
        feats(static_cast<std::int64_t>(i), 0) = values[i];
    }
    return SparseBEVTensor::canonical(coords, feats, extent);
}

}  // namespace

TEST_CASE("sp variant divides by the standard deviation without mean subtraction") {
    auto t = bev_from_values({4.0}, Extent2{2, 2});
    NormParams p = NormParams::unit(1, NormVariant::kSp, 0.0);
    p.variance[0] = 4.0;
    p.mean[0] = 100.0;  // must be ignored by sp
    auto out = normalize(t, p);
    CHECK(out.feats(0, 0) == 2.0);
    CHECK(out.coords == t.coords);
}

TEST_CASE("sp normalization preserves strict per-channel order") {
    Rng rng(41);
    std::vector<double> values(1000);
    for (double& v : values) v = rng.uniform(-50.0, 50.0);
    auto t = bev_from_values(values, Extent2{40, 25});
    NormParams p = fit_stats({t}, NormVariant::kSp);
    p.gamma[0] = 0.7;
    auto out = normalize(t, p);
    for (std::size_t a = 0; a < values.size(); ++a) {
        for (std::size_t b = a + 1; b < std::min(values.size(), a + 5); ++b) {
            if (t.feats(a, 0) > t.feats(b, 0)) {
                CHECK(out.feats(a, 0) > out.feats(b, 0));
            } else if (t.feats(a, 0) < t.feats(b, 0)) {
                CHECK(out.feats(a, 0) < out.feats(b, 0));
            }
        }
    }
}

TEST_CASE("sp maps stored zeros to beta_affine and leaves absent cells absent") {
    auto t = bev_from_values({0.0, 5.0}, Extent2{4, 4});
    NormParams p = NormParams::unit(1, NormVariant::kSp);
    p.variance[0] = 3.0;
    p.gamma[0] = 2.0;
    p.beta_affine[0] = 0.25;
    auto out = normalize(t, p);
    CHECK(out.size() == 2);  // stored set unchanged: sparsity preserved
    CHECK(out.feats(0, 0) == 0.25);
    CHECK(out.dense_rate() == t.dense_rate());
}

TEST_CASE("nonzero BN can push positive values below the absent-zero background") {
    auto t = bev_from_values({1.0, 100.0}, Extent2{4, 4});
    NormParams p = fit_stats({t}, NormVariant::kNonzero);
    auto out = normalize(t, p);
    CHECK(t.feats(0, 0) > 0.0);
    CHECK(out.feats(0, 0) < 0.0);  // relative order against background zeros inverted
}

TEST_CASE("normal BN densifies: dense rate becomes exactly 1") {
    auto t = bev_from_values({3.0}, Extent2{4, 4});
    NormParams p = fit_stats({t}, NormVariant::kNormal);
    auto out = normalize(t, p);
    CHECK(out.dense_rate() == 1.0);
    CHECK(out.size() == 16);

    auto sp = normalize(t, fit_stats({t}, NormVariant::kSp));
    CHECK(sp.dense_rate() == t.dense_rate());
    auto nz = normalize(t, fit_stats({t}, NormVariant::kNonzero));
    CHECK(nz.dense_rate() == t.dense_rate());
}

TEST_CASE("fit_stats two-point example for the nonzero variant") {
    auto t = bev_from_values({1.0, 3.0}, Extent2{2, 2});
    NormParams p = fit_stats({t}, NormVariant::kNonzero);
    CHECK(p.mean[0] == 2.0);
    CHECK(p.variance[0] == 1.0);
}

TEST_CASE("fit_stats for the normal variant includes the absent zeros") {
    auto t = bev_from_values({1.0, 3.0}, Extent2{2, 2});
    NormParams p = fit_stats({t}, NormVariant::kNormal);
    CHECK(p.mean[0] == 1.0);
    CHECK(p.variance[0] == 1.5);  // population variance over 4 positions
}

TEST_CASE("fit_stats matches a flat reference recomputation on a random batch") {
    Rng rng(42);
    std::vector<SparseBEVTensor> batch;
    for (int i = 0; i < 4; ++i) {
        batch.push_back(oracles::random_bev_tensor(rng, Extent2{9, 7}, 3, 0.4));
    }
    for (NormVariant variant : {NormVariant::kNonzero, NormVariant::kSp, NormVariant::kNormal}) {
        NormParams p = fit_stats(batch, variant);
        for (int c = 0; c < 3; ++c) {
            std::vector<double> flat;
            for (const auto& t : batch) {
                for (std::int64_t i = 0; i < t.size(); ++i) flat.push_back(t.feats(i, c));
                if (variant == NormVariant::kNormal) {
                    for (std::int64_t i = t.size(); i < t.extent.cells(); ++i) flat.push_back(0.0);
                }
            }
            const auto [mu, var] = oracles::flat_mean_var(flat);
            CHECK_THAT(p.mean[c], Catch::Matchers::WithinAbs(mu, 1e-9));
            CHECK_THAT(p.variance[c], Catch::Matchers::WithinAbs(var, 1e-9));
        }
    }
}

TEST_CASE("normalize matches a flat reference on random tensors") {
    Rng rng(43);
    auto t = oracles::random_bev_tensor(rng, Extent2{8, 8}, 2, 0.5);
    for (NormVariant variant : {NormVariant::kNonzero, NormVariant::kSp}) {
        NormParams p = fit_stats({t}, variant);
        p.gamma = {1.5, 0.5};
        p.beta_affine = {-0.25, 2.0};
        auto out = normalize(t, p);
        for (std::int64_t i = 0; i < t.size(); ++i) {
            for (int c = 0; c < 2; ++c) {
                const double mu = variant == NormVariant::kSp ? 0.0 : p.mean[c];
                const double want =
                    (t.feats(i, c) - mu) / std::sqrt(p.variance[c] + p.epsilon) * p.gamma[c] +
                    p.beta_affine[c];
                CHECK_THAT(out.feats(i, c), Catch::Matchers::WithinAbs(want, 1e-12));
            }
        }
    }
}

TEST_CASE("normalization error paths") {
    auto t = bev_from_values({1.0}, Extent2{2, 2});
    NormParams p = NormParams::unit(3, NormVariant::kSp);
    CHECK_THROWS_AS(normalize(t, p), ShapeError);
    CHECK_THROWS_AS(fit_stats(std::vector<SparseBEVTensor>{}, NormVariant::kSp), EmptyBatch);

    SparseVoxelTensor v3 = SparseVoxelTensor::canonical({{0, 0, 0}}, Matrix(1, 1));
    NormParams pn = NormParams::unit(1, NormVariant::kNormal);
    CHECK_THROWS_AS(normalize(v3, pn), ConfigError);
}
