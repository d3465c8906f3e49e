#include "ktrace/clustering.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

#include "ktrace/rng.hpp"

namespace ktrace {

namespace {

int nearest_centroid(const Vec& point, const std::vector<Vec>& centroids, double* dist_out) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = squared_distance(point, centroids[c]);
        if (d < best_dist) {  // strict: ties keep the lowest index
            best_dist = d;
            best = static_cast<int>(c);
        }
    }
    if (dist_out) *dist_out = best_dist;
    return best;
}

ClusterModel lloyd_once(const std::vector<Vec>& points, int k_clusters, std::uint64_t seed,
                        std::uint64_t stream, int max_iter, double tol) {
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();

    ClusterModel model;
    model.k = k_clusters;
    model.dim = static_cast<int>(dim);
    model.seed = seed;

    // k-means++ seeding
    Rng rng(stream);
    model.centroids.push_back(points[rng.uniform_int(static_cast<int>(n))]);
    std::vector<double> d2(n);
    while (model.centroids.size() < static_cast<std::size_t>(k_clusters)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest_centroid(points[i], model.centroids, &d2[i]);
            total += d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc) {
                    chosen = i;
                    break;
                }
            }
        }
        model.centroids.push_back(points[chosen]);
    }

    // Lloyd iterations
    std::vector<int> assignment(n, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            assignment[i] = nearest_centroid(points[i], model.centroids, &d);
            inertia += d;
        }
        model.inertia_history.push_back(inertia);
        model.inertia = inertia;

        std::vector<Vec> sums(k_clusters, Vec(dim, 0.0));
        std::vector<int> counts(k_clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, points[i], sums[assignment[i]]);
            ++counts[assignment[i]];
        }
        std::vector<Vec> updated(k_clusters);
        std::vector<char> stolen(n, 0);
        for (int c = 0; c < k_clusters; ++c) {
            if (counts[c] > 0) {
                updated[c] = sums[c];
                for (double& v : updated[c]) v /= counts[c];
            } else {
                // reseed an empty cluster to the point farthest from its centroid
                double worst = -1.0;
                std::size_t pick = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (stolen[i]) continue;
                    double d = squared_distance(points[i], model.centroids[assignment[i]]);
                    if (d > worst) {
                        worst = d;
                        pick = i;
                    }
                }
                stolen[pick] = 1;
                updated[c] = points[pick];
            }
        }
        double max_shift2 = 0.0;
        for (int c = 0; c < k_clusters; ++c) {
            max_shift2 = std::max(max_shift2, squared_distance(updated[c], model.centroids[c]));
        }
        model.centroids = std::move(updated);
        if (max_shift2 < tol * tol) break;
    }

    // final inertia against the frozen centroids
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        nearest_centroid(points[i], model.centroids, &d);
        inertia += d;
    }
    model.inertia_history.push_back(inertia);
    model.inertia = inertia;
    return model;
}

}  // namespace

ClusterModel kmeans_fit(const std::vector<Vec>& points, int k_clusters, std::uint64_t seed,
                        int max_iter, double tol) {
    if (points.empty()) throw std::invalid_argument("kmeans_fit: no points");
    if (k_clusters <= 0) throw std::invalid_argument("kmeans_fit: k_clusters must be positive");
    const std::size_t dim = points[0].size();
    for (const Vec& p : points) {
        if (p.size() != dim) throw std::invalid_argument("kmeans_fit: inconsistent dimensions");
    }
    std::set<Vec> distinct(points.begin(), points.end());
    if (distinct.size() < static_cast<std::size_t>(k_clusters)) {
        throw std::invalid_argument("insufficient distinct points for " +
                                    std::to_string(k_clusters) + " clusters");
    }

    // restarts guard against unlucky seeding; the lowest-inertia fit wins
    constexpr int kRestarts = 5;
    ClusterModel best;
    for (int r = 0; r < kRestarts; ++r) {
        std::uint64_t stream = mix_seed(seed, "kmeans++ restart " + std::to_string(r));
        ClusterModel candidate = lloyd_once(points, k_clusters, seed, stream, max_iter, tol);
        if (r == 0 || candidate.inertia < best.inertia) best = std::move(candidate);
    }
    return best;
}

int assign_cluster(const Vec& cumulative_ability, const ClusterModel& model) {
    if (static_cast<int>(cumulative_ability.size()) != model.dim) {
        throw std::invalid_argument("assign_cluster: expected dimension " +
                                    std::to_string(model.dim) + ", got " +
                                    std::to_string(cumulative_ability.size()));
    }
    return nearest_centroid(cumulative_ability, model.centroids, nullptr);
}

AssignmentTrace build_assignment_trace(const AbilityTimeline& timeline, const ClusterModel& model) {
    AssignmentTrace trace;
    trace.student_id = timeline.student_id;
    trace.chunk_index = timeline.chunk_index;
    const std::size_t segments = timeline.per_segment.size();
    if (segments == 0) return trace;
    trace.per_segment_cluster.reserve(segments);
    Vec zero(static_cast<std::size_t>(model.dim), 0.0);
    trace.per_segment_cluster.push_back(assign_cluster(zero, model));
    for (std::size_t s = 1; s < segments; ++s) {
        trace.per_segment_cluster.push_back(assign_cluster(timeline.cumulative[s - 1], model));
    }
    return trace;
}

}  // namespace ktrace
