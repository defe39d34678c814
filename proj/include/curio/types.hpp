#ifndef CURIO_TYPES_HPP
#define CURIO_TYPES_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace curio {

using UserId = std::int64_t;
using ItemId = std::int64_t;

// One (user, item, rating, timestamp) event; the atomic input record.
struct Interaction {
    UserId user_id = 0;
    ItemId item_id = 0;
    int rating = 0;          // 1..5
    std::int64_t timestamp = 0;  // seconds since epoch

    bool operator==(const Interaction&) const = default;
};

// A user's events sorted ascending by timestamp (file order breaks ties).
struct UserSequence {
    UserId user_id = 0;
    std::vector<Interaction> events;
};

enum class PreferenceKind { kLong, kShort };

// Top-20 preferred items of one user with their shared latent vectors.
struct PreferenceSet {
    UserId user_id = 0;
    PreferenceKind kind = PreferenceKind::kLong;
    std::vector<ItemId> items;                      // descending score
    std::vector<std::vector<double>> vectors;       // vectors[i] belongs to items[i]
};

inline constexpr int kPreferenceSetSize = 20;

struct CuriosityProfile {
    UserId user_id = 0;
    double diff_raw = 0.0;   // Euclidean distance of normalized aggregates, in [0,2]
    double diff_norm = 0.0;  // diff_raw / 2, in [0,1]
    double div = 0.0;        // 1 - intra-list similarity, in [0,1]
    double curiosity = 0.0;  // (diff_norm + div) / 2
    int x_used = 0;          // session percentage behind the short-term set
};

struct ScoredCandidate {
    UserId user_id = 0;
    ItemId item_id = 0;
    double useful = 0.0;
    double unexp = 0.0;
    double serendipity = 0.0;
};

struct RecommendationList {
    UserId user_id = 0;
    double curiosity = 0.0;
    std::vector<ScoredCandidate> ranked;  // descending serendipity, item id breaks ties
};

}  // namespace curio

#endif
