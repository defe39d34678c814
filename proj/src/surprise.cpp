#include "curio/surprise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "curio/errors.hpp"
#include "curio/rng.hpp"
#include "curio/vecmath.hpp"

namespace curio {

namespace {

constexpr double kConvergence = 1e-6;
constexpr int kMaxIterations = 100;
constexpr std::size_t kBandwidthSamplePairs = 1000;

}  // namespace

HistoryClustering mean_shift(std::span<const std::vector<double>> history_vectors,
                             double bandwidth) {
    if (history_vectors.empty()) throw ArgumentError("mean_shift: no history vectors");
    if (!(bandwidth > 0.0)) throw ArgumentError("mean_shift: bandwidth must be positive");
    const std::size_t dim = history_vectors.front().size();
    for (const auto& v : history_vectors) {
        if (v.size() != dim) throw ArgumentError("mean_shift: ragged history vectors");
        if (!all_finite(v)) throw NumericError("mean_shift: non-finite history vector");
    }

    const double bw2 = bandwidth * bandwidth;
    const std::size_t n = history_vectors.size();

    // Shift every point to its local mode.
    std::vector<std::vector<double>> modes(n);
    std::vector<double> next(dim);
    for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> m = history_vectors[p];
        for (int iter = 0; iter < kMaxIterations; ++iter) {
            std::fill(next.begin(), next.end(), 0.0);
            int neighbors = 0;
            for (const auto& v : history_vectors) {
                if (squared_distance(m, v) <= bw2) {
                    for (std::size_t k = 0; k < dim; ++k) next[k] += v[k];
                    ++neighbors;
                }
            }
            // The point itself is always a neighbor, so neighbors >= 1.
            for (std::size_t k = 0; k < dim; ++k) next[k] /= neighbors;
            const double moved = euclidean_distance(m, next);
            m.assign(next.begin(), next.end());
            if (moved < kConvergence) break;
        }
        modes[p] = std::move(m);
    }

    // Collapse modes closer than bandwidth/2, count-weighted, repeating
    // until every surviving pair is separated.
    struct Mode {
        std::vector<double> center;
        int count;
    };
    std::vector<Mode> merged;
    const double merge2 = (bandwidth / 2.0) * (bandwidth / 2.0);
    for (std::size_t p = 0; p < n; ++p) {
        bool absorbed = false;
        for (auto& mo : merged) {
            if (squared_distance(mo.center, modes[p]) < merge2) {
                const double w = 1.0 / (mo.count + 1);
                for (std::size_t k = 0; k < dim; ++k)
                    mo.center[k] += w * (modes[p][k] - mo.center[k]);
                ++mo.count;
                absorbed = true;
                break;
            }
        }
        if (!absorbed) merged.push_back(Mode{modes[p], 1});
    }
    bool collapsed = true;
    while (collapsed && merged.size() > 1) {
        collapsed = false;
        for (std::size_t a = 0; a < merged.size() && !collapsed; ++a) {
            for (std::size_t b = a + 1; b < merged.size() && !collapsed; ++b) {
                if (squared_distance(merged[a].center, merged[b].center) < merge2) {
                    const double total = merged[a].count + merged[b].count;
                    for (std::size_t k = 0; k < dim; ++k)
                        merged[a].center[k] = (merged[a].center[k] * merged[a].count +
                                               merged[b].center[k] * merged[b].count) /
                                              total;
                    merged[a].count += merged[b].count;
                    merged.erase(merged.begin() + b);
                    collapsed = true;
                }
            }
        }
    }

    // Assign every point to its nearest surviving mode.
    std::vector<int> counts(merged.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < merged.size(); ++c) {
            const double d = squared_distance(modes[p], merged[c].center);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        ++counts[best];
    }

    HistoryClustering out;
    out.bandwidth = bandwidth;
    for (std::size_t c = 0; c < merged.size(); ++c) {
        if (counts[c] == 0) continue;  // mode lost all members to a closer one
        out.clusters.push_back(Cluster{std::move(merged[c].center), counts[c]});
    }
    return out;
}

double unexpectedness(const HistoryClustering& clustering, std::span<const double> candidate) {
    if (clustering.clusters.empty()) throw ArgumentError("unexpectedness: empty clustering");
    const double total = clustering.total_count();
    double score = 0.0;
    for (const auto& c : clustering.clusters) {
        if (c.centroid.size() != candidate.size())
            throw ArgumentError("unexpectedness: dimension mismatch");
        score += euclidean_distance(candidate, c.centroid) * (c.member_count / total);
    }
    return score;
}

double default_bandwidth(std::span<const std::vector<double>> history_vectors,
                         std::uint64_t seed) {
    constexpr double kFallback = 1e-3;
    const std::size_t n = history_vectors.size();
    if (n < 2) return kFallback;

    const std::size_t total_pairs = n * (n - 1) / 2;
    std::vector<double> distances;
    if (total_pairs <= kBandwidthSamplePairs) {
        distances.reserve(total_pairs);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                distances.push_back(euclidean_distance(history_vectors[i], history_vectors[j]));
    } else {
        Rng rng(derive_seed(seed, "bandwidth"));
        distances.reserve(kBandwidthSamplePairs);
        for (std::size_t s = 0; s < kBandwidthSamplePairs; ++s) {
            const std::size_t i = static_cast<std::size_t>(rng.below(n));
            std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
            if (j >= i) ++j;
            distances.push_back(euclidean_distance(history_vectors[i], history_vectors[j]));
        }
    }

    std::sort(distances.begin(), distances.end());
    const std::size_t m = distances.size();
    const double median =
        (m % 2 == 1) ? distances[m / 2] : 0.5 * (distances[m / 2 - 1] + distances[m / 2]);
    return median > 0.0 ? median : kFallback;
}

}  // namespace curio
