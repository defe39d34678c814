#ifndef CURIO_EVALHARNESS_HPP
#define CURIO_EVALHARNESS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "curio/reranker.hpp"
#include "curio/types.hpp"

namespace curio {

// precision = |top-k ∩ relevant| / k, recall = |top-k ∩ relevant| / |relevant|
std::pair<double, double> precision_recall_at_k(std::span<const ItemId> recommended,
                                                const std::set<ItemId>& relevant, int k);

// Mean over users of the mean unexpectedness of that user's top-k items.
double unexp_at_k(std::span<const RecommendationList> lists, int k);

// Mann-Whitney AUC with ties counted half.
double auc_from_scores(std::span<const double> positive_scores,
                       std::span<const double> negative_scores);

struct MetricRow {
    double precision = 0.0;
    double recall = 0.0;
    double unexp = 0.0;
};

struct EvalReport {
    // strategy name -> k -> metrics
    std::vector<std::string> strategies;
    std::map<std::string, std::map<int, MetricRow>> rows;
    std::size_t user_count = 0;
    double unexp_min = 0.0;  // observed over every evaluation candidate
    double unexp_max = 0.0;
};

// Per-user evaluation inputs: the scored candidate pool and the relevant set.
struct UserEvalInput {
    UserId user_id = 0;
    double curiosity = 0.0;
    std::vector<Candidate> candidates;
    std::set<ItemId> relevant;
};

inline const std::vector<int> kDefaultKs = {5, 10, 15, 20};

// Four strategies over identical candidate pools: curiosity-weighted
// (per-user curiosity), fixed-weight c=0.5, useful-only (c=0) and
// unexp-only (c=1).
EvalReport compare_strategies(std::span<const UserEvalInput> inputs,
                              std::span<const int> ks);

struct SweepResult {
    int x = 0;
    std::vector<CuriosityProfile> profiles;
    std::vector<std::size_t> histogram;  // ten 0.1-wide curiosity bins
    std::string error;                   // non-empty when this x failed
};

// Histogram helper: bin i covers [i/10, (i+1)/10), curiosity 1.0 goes into
// the last bin.
std::vector<std::size_t> curiosity_histogram(std::span<const CuriosityProfile> profiles);

// Re-derives curiosity profiles for each x via the supplied callback (the
// pipeline retrains the sequence model inside it). A failing x records its
// error and the sweep continues.
std::vector<SweepResult> sweep_x(
    std::span<const int> x_values,
    const std::function<std::vector<CuriosityProfile>(int x, std::uint64_t seed)>& run_for_x,
    std::uint64_t seed);

}  // namespace curio

#endif
