#ifndef CURIO_CURIOSITY_HPP
#define CURIO_CURIOSITY_HPP

#include <map>
#include <span>
#include <vector>

#include "curio/types.hpp"

namespace curio {

// Element-wise mean of the 20 preference vectors.
std::vector<double> aggregate_vector(const PreferenceSet& set);

struct PreferenceDifference {
    double raw = 0.0;   // Euclidean distance of the unit-normalized aggregates, in [0,2]
    double norm = 0.0;  // raw / 2
    bool degenerate = false;  // some aggregate had zero norm; difference defined as 0
};

// L2-normalizes both aggregates, then takes their Euclidean distance.
PreferenceDifference preference_difference(std::span<const double> long_vec,
                                           std::span<const double> short_vec);

// For each item, the set of users whose short-term preference set contains
// it. Users are stored as dense indices so intersections stay cheap.
class CooccurrenceIndex {
public:
    static CooccurrenceIndex build(std::span<const PreferenceSet> short_sets);

    // |U_m ∩ U_n| / (sqrt(|U_m|) * sqrt(|U_n|)), in [0,1].
    double cooccurrence_cosine(ItemId m, ItemId n) const;

    bool contains(ItemId id) const { return users_.count(id) != 0; }
    std::size_t item_count() const { return users_.size(); }

private:
    std::map<ItemId, std::vector<int>> users_;  // sorted dense user indices
};

// Diversity of one short-term set: 1 - mean cooccurrence cosine over all
// C(20,2) unordered pairs.
double short_term_diversity(const CooccurrenceIndex& index, const PreferenceSet& set);

// (diff_norm + div) / 2; both inputs must lie in [0,1].
double curiosity_score(double diff_norm, double div);

// Full profile for one user given both preference sets and the population
// index.
CuriosityProfile build_curiosity_profile(const PreferenceSet& long_set,
                                         const PreferenceSet& short_set,
                                         const CooccurrenceIndex& index, int x_used);

}  // namespace curio

#endif
