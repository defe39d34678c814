#include "curio/reranker.hpp"

#include <algorithm>

#include "curio/errors.hpp"

namespace curio {

double serendipity_score(double curiosity, double useful, double unexp) {
    if (!(curiosity >= 0.0 && curiosity <= 1.0))
        throw ArgumentError("serendipity_score: curiosity outside [0,1]");
    return (1.0 - curiosity) * useful + curiosity * unexp;
}

RecommendationList rerank(const CuriosityProfile& profile, std::span<const Candidate> candidates,
                          int n) {
    if (candidates.empty()) throw ArgumentError("rerank: empty candidate list");
    if (n < 1 || static_cast<std::size_t>(n) > candidates.size())
        throw ArgumentError("rerank: n must lie in [1, |candidates|]");

    RecommendationList out;
    out.user_id = profile.user_id;
    out.curiosity = profile.curiosity;
    out.ranked.reserve(candidates.size());
    for (const auto& c : candidates) {
        ScoredCandidate sc;
        sc.user_id = profile.user_id;
        sc.item_id = c.item_id;
        sc.useful = c.useful;
        sc.unexp = c.unexp;
        sc.serendipity = serendipity_score(profile.curiosity, c.useful, c.unexp);
        out.ranked.push_back(sc);
    }
    std::sort(out.ranked.begin(), out.ranked.end(),
              [](const ScoredCandidate& a, const ScoredCandidate& b) {
                  if (a.serendipity != b.serendipity) return a.serendipity > b.serendipity;
                  return a.item_id < b.item_id;
              });
    out.ranked.resize(n);
    return out;
}

}  // namespace curio
