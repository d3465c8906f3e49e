#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ktrace/clustering.hpp"
#include "ktrace/rng.hpp"
#include "test_util.hpp"

using namespace ktrace;

TEST_CASE("k equal to the number of distinct points fits exactly") {
    std::vector<Vec> points{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {5.0, 5.0}};
    ClusterModel model = kmeans_fit(points, 4, 7);
    CHECK(model.inertia == 0.0);
    std::set<Vec> centroids(model.centroids.begin(), model.centroids.end());
    CHECK(centroids == std::set<Vec>(points.begin(), points.end()));
}

TEST_CASE("two planted blobs are recovered with ARI 1") {
    Rng rng(123);
    std::vector<Vec> points;
    std::vector<int> planted;
    for (int i = 0; i < 50; ++i) {
        points.push_back({rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
        planted.push_back(0);
    }
    for (int i = 0; i < 50; ++i) {
        points.push_back({rng.normal(10.0, 0.3), rng.normal(10.0, 0.3)});
        planted.push_back(1);
    }
    ClusterModel model = kmeans_fit(points, 2, 5);
    std::vector<int> assigned;
    for (const Vec& p : points) assigned.push_back(assign_cluster(p, model));
    CHECK(testutil::adjusted_rand_index(planted, assigned) == doctest::Approx(1.0));
}

TEST_CASE("fitting is deterministic in the seed") {
    Rng rng(9);
    std::vector<Vec> points;
    for (int i = 0; i < 60; ++i) points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    ClusterModel a = kmeans_fit(points, 5, 31);
    ClusterModel b = kmeans_fit(points, 5, 31);
    REQUIRE(a.centroids.size() == b.centroids.size());
    for (std::size_t c = 0; c < a.centroids.size(); ++c) CHECK(a.centroids[c] == b.centroids[c]);
}

TEST_CASE("fewer distinct points than clusters is an error") {
    std::vector<Vec> points{{1.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}};
    CHECK_THROWS_WITH_AS(kmeans_fit(points, 3, 1),
                         doctest::Contains("insufficient distinct points"), std::invalid_argument);
}

TEST_CASE("inertia is non-increasing across Lloyd iterations") {
    Rng rng(77);
    std::vector<Vec> points;
    for (int i = 0; i < 300; ++i) {
        points.push_back({rng.normal(rng.uniform_int(4) * 3.0, 1.0),
                          rng.normal(rng.uniform_int(4) * 3.0, 1.0)});
    }
    ClusterModel model = kmeans_fit(points, 6, 2);
    REQUIRE(model.inertia_history.size() >= 2);
    for (std::size_t i = 1; i < model.inertia_history.size(); ++i) {
        CHECK(model.inertia_history[i] <= model.inertia_history[i - 1]);
    }
}

TEST_CASE("assign_cluster picks the nearest centroid") {
    ClusterModel model;
    model.k = 3;
    model.dim = 2;
    model.centroids = {{0.0, 3.0}, {1.0, 0.0}, {4.0, 4.0}};

    SUBCASE("a vector equal to a centroid maps to it") {
        CHECK(assign_cluster({4.0, 4.0}, model) == 2);
    }
    SUBCASE("the zero vector goes to the centroid nearest the origin") {
        // distances^2: 9, 1, 32 -> centroid 1
        CHECK(assign_cluster({0.0, 0.0}, model) == 1);
    }
    SUBCASE("dimension mismatch throws") {
        CHECK_THROWS_AS(assign_cluster({1.0, 2.0, 3.0}, model), std::invalid_argument);
    }
}

TEST_CASE("ties break toward the lowest centroid index") {
    ClusterModel model;
    model.k = 5;
    model.dim = 2;
    model.centroids = {{50.0, 50.0}, {1.0, 0.0}, {40.0, -40.0}, {60.0, 0.0}, {-1.0, 0.0}};
    // (0,0) is equidistant from centroids 1 and 4
    CHECK(assign_cluster({0.0, 0.0}, model) == 1);
}

TEST_CASE("assign_cluster agrees with exhaustive minimization") {
    Rng rng(404);
    ClusterModel model;
    model.k = 8;
    model.dim = 4;
    for (int c = 0; c < model.k; ++c) {
        model.centroids.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    }
    for (int trial = 0; trial < 500; ++trial) {
        Vec p{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        int best = 0;
        double best_d = squared_distance(p, model.centroids[0]);
        for (int c = 1; c < model.k; ++c) {
            double d = squared_distance(p, model.centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        CHECK(assign_cluster(p, model) == best);
    }
}

namespace {

AbilityTimeline timeline_with_cumulative(std::vector<Vec> cumulative) {
    AbilityTimeline timeline;
    timeline.student_id = "s";
    for (const Vec& c : cumulative) {
        AbilityVector vec;
        vec.values = c;
        timeline.per_segment.push_back(vec);  // per-segment values unused by assignment
    }
    timeline.cumulative = std::move(cumulative);
    return timeline;
}

}  // namespace

TEST_CASE("assignment traces use the previous segment's cumulative ability") {
    ClusterModel model;
    model.k = 2;
    model.dim = 2;
    model.centroids = {{0.0, 0.0}, {10.0, 10.0}};

    SUBCASE("zero ability stays in the zero cluster") {
        AbilityTimeline timeline =
            timeline_with_cumulative({{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}});
        AssignmentTrace trace = build_assignment_trace(timeline, model);
        CHECK(trace.per_segment_cluster == std::vector<int>{0, 0, 0});
    }
    SUBCASE("a jump after segment 2 moves the assignment at segment 3") {
        AbilityTimeline timeline = timeline_with_cumulative(
            {{0.0, 0.0}, {0.5, 0.5}, {9.0, 9.0}, {9.5, 9.5}});
        AssignmentTrace trace = build_assignment_trace(timeline, model);
        // segment s is assigned from cumulative[s-1]; the jump lands at index 3
        CHECK(trace.per_segment_cluster == std::vector<int>{0, 0, 0, 1});
    }
    SUBCASE("single-segment student gets a length-1 trace") {
        AbilityTimeline timeline = timeline_with_cumulative({{3.0, 3.0}});
        AssignmentTrace trace = build_assignment_trace(timeline, model);
        CHECK(trace.per_segment_cluster.size() == 1);
        CHECK(trace.per_segment_cluster[0] == 0);  // zero vector, not cumulative[0]
    }
}

TEST_CASE("assignments never look ahead") {
    // truncating the timeline after segment s leaves assignments 0..s unchanged
    Rng rng(88);
    ClusterModel model;
    model.k = 3;
    model.dim = 2;
    model.centroids = {{0.0, 0.0}, {2.0, 2.0}, {5.0, 0.0}};
    std::vector<Vec> cumulative;
    Vec running{0.0, 0.0};
    for (int s = 0; s < 10; ++s) {
        running[0] += rng.uniform();
        running[1] += rng.uniform();
        cumulative.push_back(running);
    }
    AssignmentTrace full = build_assignment_trace(timeline_with_cumulative(cumulative), model);
    for (std::size_t cut = 1; cut <= cumulative.size(); ++cut) {
        std::vector<Vec> prefix(cumulative.begin(), cumulative.begin() + cut);
        AssignmentTrace truncated =
            build_assignment_trace(timeline_with_cumulative(prefix), model);
        for (std::size_t s = 0; s < cut; ++s) {
            CHECK(truncated.per_segment_cluster[s] == full.per_segment_cluster[s]);
        }
    }
}
