#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktrace/ability.hpp"
#include "ktrace/linalg.hpp"

namespace ktrace {

/// Fitted K-means model over ability space. Centroids are frozen after
/// fitting; assignment happens per segment against these fixed centers.
struct ClusterModel {
    int k = 0;
    int dim = 0;
    std::vector<Vec> centroids;
    double inertia = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

/// Cluster membership of one sequence, one index per segment.
struct AssignmentTrace {
    std::string student_id;
    int chunk_index = 0;
    std::vector<int> per_segment_cluster;
};

/// Lloyd's algorithm with k-means++ initialization. Stops when the largest
/// centroid shift drops below tol or after max_iter iterations. Empty
/// clusters are reseeded to the point currently farthest from its centroid.
/// Throws std::invalid_argument when there are fewer distinct points than
/// clusters ("insufficient distinct points").
ClusterModel kmeans_fit(const std::vector<Vec>& points, int k_clusters, std::uint64_t seed,
                        int max_iter = 300, double tol = 1e-6);

/// Index of the nearest centroid under squared Euclidean distance; ties go to
/// the lowest index. Throws std::invalid_argument on dimension mismatch.
int assign_cluster(const Vec& cumulative_ability, const ClusterModel& model);

/// Assigns each segment using the cumulative ability through the previous
/// segment; segment 0 uses the zero vector (no history yet).
AssignmentTrace build_assignment_trace(const AbilityTimeline& timeline, const ClusterModel& model);

}  // namespace ktrace
