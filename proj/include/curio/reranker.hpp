#ifndef CURIO_RERANKER_HPP
#define CURIO_RERANKER_HPP

#include <span>
#include <vector>

#include "curio/types.hpp"

namespace curio {

// Candidate scores coming out of the relevance and surprise stages.
struct Candidate {
    ItemId item_id = 0;
    double useful = 0.0;
    double unexp = 0.0;
};

// (1 - curiosity) * useful + curiosity * unexp; curiosity must be in [0,1].
double serendipity_score(double curiosity, double useful, double unexp);

// Top-n candidates by serendipity, descending, ascending item id on ties.
RecommendationList rerank(const CuriosityProfile& profile, std::span<const Candidate> candidates,
                          int n);

}  // namespace curio

#endif
