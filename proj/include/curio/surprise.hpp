#ifndef CURIO_SURPRISE_HPP
#define CURIO_SURPRISE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "curio/types.hpp"

namespace curio {

struct Cluster {
    std::vector<double> centroid;
    int member_count = 0;
};

struct HistoryClustering {
    UserId user_id = 0;
    std::vector<Cluster> clusters;
    double bandwidth = 0.0;

    int total_count() const {
        int n = 0;
        for (const auto& c : clusters) n += c.member_count;
        return n;
    }
};

// Flat-kernel mean shift: every point iterates to the mean of its neighbors
// within `bandwidth` until it moves less than 1e-6 (or 100 iterations), then
// converged modes closer than bandwidth/2 are merged and each point joins
// its nearest mode.
HistoryClustering mean_shift(std::span<const std::vector<double>> history_vectors,
                             double bandwidth);

// Cluster-size-weighted mean distance from the candidate to the centroids:
// sum_k d(candidate, centroid_k) * count_k / total.
double unexpectedness(const HistoryClustering& clustering, std::span<const double> candidate);

// Median pairwise Euclidean distance over a seeded sample of at most 1000
// pairs; all pairs are used when there are that few. Falls back to 1e-3 for
// fewer than two points or an all-coincident history.
double default_bandwidth(std::span<const std::vector<double>> history_vectors,
                         std::uint64_t seed);

}  // namespace curio

#endif
