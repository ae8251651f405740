#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "gacnet/geometry.hpp"

using namespace gacnet;

TEST_CASE("back projection matches the pinhole model pixel by pixel") {
    CameraIntrinsics cam{50.0, 60.0, 4.0, 3.0, 8, 6};
    SparseDepthMap d(6, 8);
    d.at(2, 5) = 4.0;
    d.at(0, 0) = 2.5;
    PointCloud pc = back_project(d, cam);
    REQUIRE(pc.size() == 2);
    // row-major scan order: (0,0) first
    CHECK(pc.points[0][0] == doctest::Approx((0 - 4.0) * 2.5 / 50.0));
    CHECK(pc.points[0][1] == doctest::Approx((0 - 3.0) * 2.5 / 60.0));
    CHECK(pc.points[0][2] == doctest::Approx(2.5));
    CHECK(pc.points[1][0] == doctest::Approx((5 - 4.0) * 4.0 / 50.0));
    CHECK(pc.points[1][1] == doctest::Approx((2 - 3.0) * 4.0 / 60.0));
    CHECK(pc.points[1][2] == doctest::Approx(4.0));
}

TEST_CASE("back projection reprojects onto the original pixels") {
    CameraIntrinsics cam{100.0, 100.0, 8.0, 6.0, 16, 12};
    SparseDepthMap d(12, 16);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dz(1.0, 10.0);
    std::vector<std::pair<int, int>> px;
    for (int i = 0; i < 20; ++i) {
        int v = int(rng() % 12), u = int(rng() % 16);
        if (d.at(v, u) > 0) continue;
        d.at(v, u) = dz(rng);
        px.emplace_back(v, u);
    }
    std::sort(px.begin(), px.end());
    PointCloud pc = back_project(d, cam);
    REQUIRE(pc.size() == px.size());
    for (size_t i = 0; i < px.size(); ++i) {
        double u = pc.points[i][0] * cam.fx / pc.points[i][2] + cam.cx;
        double v = pc.points[i][1] * cam.fy / pc.points[i][2] + cam.cy;
        CHECK(u == doctest::Approx(double(px[i].second)).epsilon(1e-12));
        CHECK(v == doctest::Approx(double(px[i].first)).epsilon(1e-12));
    }
}

TEST_CASE("point sampling is deterministic and identity when small") {
    PointCloud pc;
    for (int i = 0; i < 40; ++i) pc.points.push_back({double(i), 2.0 * i, 3.0 * i});
    PointCloud same = sample_point_cloud(pc, 64, 7);
    REQUIRE(same.size() == 40);
    for (int i = 0; i < 40; ++i) CHECK(same.points[i] == pc.points[i]);

    PointCloud a = sample_point_cloud(pc, 16, 7);
    PointCloud b = sample_point_cloud(pc, 16, 7);
    PointCloud c = sample_point_cloud(pc, 16, 8);
    REQUIRE(a.size() == 16);
    bool identical = true, differs = false;
    for (int i = 0; i < 16; ++i) {
        identical = identical && a.points[i] == b.points[i];
        differs = differs || a.points[i] != c.points[i];
    }
    CHECK(identical);
    CHECK(differs);  // seed changes the draw
}

TEST_CASE("normalization centers the cloud and bounds it by the unit sphere") {
    PointCloud pc;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dd(-5.0, 9.0);
    for (int i = 0; i < 50; ++i) pc.points.push_back({dd(rng), dd(rng), dd(rng)});
    NormalizedCloud nc = normalize_point_cloud(pc);
    double sx = 0, sy = 0, sz = 0, maxd = 0;
    for (int i = 0; i < 50; ++i) {
        const auto& p = nc.cloud.points[i];
        sx += p[0];
        sy += p[1];
        sz += p[2];
        maxd = std::max(maxd, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
    }
    CHECK(std::abs(sx / 50) < 1e-12);
    CHECK(std::abs(sy / 50) < 1e-12);
    CHECK(std::abs(sz / 50) < 1e-12);
    CHECK(maxd == doctest::Approx(1.0).epsilon(1e-12));
    // round trip
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(nc.cloud.points[i][k] * nc.scale + nc.centroid[k] ==
                  doctest::Approx(pc.points[i][k]));
}

TEST_CASE("degenerate single point cloud normalizes with scale one") {
    PointCloud pc;
    pc.points.push_back({1.0, 2.0, 3.0});
    NormalizedCloud nc = normalize_point_cloud(pc);
    CHECK(nc.scale == 1.0);
    CHECK(nc.cloud.points[0] == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("intrinsics validation rejects nonpositive focal lengths") {
    CameraIntrinsics bad{0.0, 10.0, 1.0, 1.0, 4, 4};
    CHECK_THROWS(bad.validate());
    CameraIntrinsics ok{10.0, 10.0, 0.0, 0.0, 4, 4};
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("validity mask marks exactly the nonzero pixels") {
    SparseDepthMap d(3, 3);
    d.at(1, 1) = 5.0;
    d.at(2, 0) = 1.0;
    ValidityMask m = ValidityMask::from_sparse(d);
    int ones = 0;
    for (int v = 0; v < 3; ++v)
        for (int u = 0; u < 3; ++u) ones += m.at(v, u) ? 1 : 0;
    CHECK(ones == 2);
    CHECK(m.at(1, 1));
    CHECK(m.at(2, 0));
    CHECK(d.count_valid() == 2);
}
