#include "curio/curiosity.hpp"

#include <algorithm>
#include <cmath>

#include "curio/errors.hpp"
#include "curio/vecmath.hpp"

namespace curio {

std::vector<double> aggregate_vector(const PreferenceSet& set) {
    if (set.items.size() != static_cast<std::size_t>(kPreferenceSetSize) ||
        set.vectors.size() != set.items.size())
        throw ArgumentError("aggregate_vector: preference set must hold exactly " +
                            std::to_string(kPreferenceSetSize) + " items");
    const std::size_t dim = set.vectors.front().size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& v : set.vectors) {
        if (v.size() != dim) throw ArgumentError("aggregate_vector: ragged vectors");
        for (std::size_t k = 0; k < dim; ++k) mean[k] += v[k];
    }
    for (double& m : mean) m /= static_cast<double>(kPreferenceSetSize);
    return mean;
}

PreferenceDifference preference_difference(std::span<const double> long_vec,
                                           std::span<const double> short_vec) {
    if (long_vec.size() != short_vec.size())
        throw ArgumentError("preference_difference: dimension mismatch");
    if (!all_finite(long_vec) || !all_finite(short_vec))
        throw NumericError("preference_difference: non-finite input");

    const double nl = norm2(long_vec);
    const double ns = norm2(short_vec);
    PreferenceDifference out;
    if (nl == 0.0 || ns == 0.0) {
        out.degenerate = true;  // no evidence of divergence
        return out;
    }
    double sq = 0.0;
    for (std::size_t k = 0; k < long_vec.size(); ++k) {
        const double d = long_vec[k] / nl - short_vec[k] / ns;
        sq += d * d;
    }
    out.raw = std::sqrt(sq);
    out.norm = out.raw / 2.0;
    return out;
}

CooccurrenceIndex CooccurrenceIndex::build(std::span<const PreferenceSet> short_sets) {
    CooccurrenceIndex index;
    int user_idx = 0;
    for (const auto& set : short_sets) {
        for (ItemId item : set.items) index.users_[item].push_back(user_idx);
        ++user_idx;
    }
    for (auto& [item, users] : index.users_) {
        std::sort(users.begin(), users.end());
        users.erase(std::unique(users.begin(), users.end()), users.end());
    }
    return index;
}

double CooccurrenceIndex::cooccurrence_cosine(ItemId m, ItemId n) const {
    const auto im = users_.find(m);
    const auto in = users_.find(n);
    if (im == users_.end()) throw ArgumentError("item " + std::to_string(m) + " not in index");
    if (in == users_.end()) throw ArgumentError("item " + std::to_string(n) + " not in index");

    const auto& um = im->second;
    const auto& un = in->second;
    std::size_t common = 0;
    auto a = um.begin();
    auto b = un.begin();
    while (a != um.end() && b != un.end()) {
        if (*a < *b)
            ++a;
        else if (*b < *a)
            ++b;
        else {
            ++common;
            ++a;
            ++b;
        }
    }
    return static_cast<double>(common) /
           (std::sqrt(static_cast<double>(um.size())) * std::sqrt(static_cast<double>(un.size())));
}

double short_term_diversity(const CooccurrenceIndex& index, const PreferenceSet& set) {
    if (set.items.size() != static_cast<std::size_t>(kPreferenceSetSize))
        throw ArgumentError("short_term_diversity: preference set must hold exactly " +
                            std::to_string(kPreferenceSetSize) + " items");
    const std::size_t n = set.items.size();
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sum += index.cooccurrence_cosine(set.items[i], set.items[j]);
            ++pairs;
        }
    }
    const double ils = sum / static_cast<double>(pairs);  // 190 pairs for 20 items
    return 1.0 - ils;
}

double curiosity_score(double diff_norm, double div) {
    if (!(diff_norm >= 0.0 && diff_norm <= 1.0))
        throw ArgumentError("curiosity_score: diff_norm outside [0,1]");
    if (!(div >= 0.0 && div <= 1.0)) throw ArgumentError("curiosity_score: div outside [0,1]");
    return (diff_norm + div) / 2.0;
}

CuriosityProfile build_curiosity_profile(const PreferenceSet& long_set,
                                         const PreferenceSet& short_set,
                                         const CooccurrenceIndex& index, int x_used) {
    const auto long_vec = aggregate_vector(long_set);
    const auto short_vec = aggregate_vector(short_set);
    const auto diff = preference_difference(long_vec, short_vec);
    const double div = short_term_diversity(index, short_set);

    CuriosityProfile profile;
    profile.user_id = short_set.user_id;
    profile.diff_raw = diff.raw;
    profile.diff_norm = diff.norm;
    profile.div = div;
    profile.curiosity = curiosity_score(diff.norm, div);
    profile.x_used = x_used;
    return profile;
}

}  // namespace curio
