#ifndef CURIO_CORPUS_HPP
#define CURIO_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "curio/types.hpp"

namespace curio {

struct CatalogItem {
    std::string title;
    std::vector<std::string> genres;
};

// Item metadata from movies.dat. std::map keeps iteration deterministic.
struct Catalog {
    std::map<ItemId, CatalogItem> items;

    bool contains(ItemId id) const { return items.count(id) != 0; }
    std::size_t size() const { return items.size(); }
    std::vector<ItemId> ids() const;
};

struct LoadResult {
    std::vector<UserSequence> sequences;  // ascending user id, events time-ordered
    Catalog catalog;
    std::size_t dropped_users = 0;  // users with fewer than 5 events
};

// Evaluation pool for one user: the held-out positive plus sampled negatives.
struct EvalPool {
    Interaction positive;
    std::vector<ItemId> negatives;
};

struct SplitDataset {
    std::map<UserId, std::vector<Interaction>> train;  // first N-2 events per user
    std::map<UserId, EvalPool> validation;             // (N-1)th event + 9 negatives
    std::map<UserId, EvalPool> test;                   // Nth event + 49 negatives
    std::vector<ItemId> catalog_ids;                   // sorted ascending
    Catalog catalog;
    std::size_t dropped_users = 0;
};

inline constexpr int kValidationNegatives = 9;
inline constexpr int kTestNegatives = 49;
inline constexpr std::size_t kMinSequenceLength = 5;

// Parses MovieLens `::`-separated .dat files into time-ordered sequences.
// Users with fewer than 5 events are dropped (counted in the result).
LoadResult load_movielens(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& movies_path);

// Per-user leave-last-out partition with seeded negative sampling. Negatives
// are drawn without replacement from catalog items the user never touched.
SplitDataset split_leave_last_out(const std::vector<UserSequence>& sequences,
                                  const Catalog& catalog, std::uint64_t seed);

// Last ceil(x/100 * |events|) events, order preserved, never empty.
// x must lie in [1, 100].
std::vector<Interaction> session_suffix(std::span<const Interaction> events, int x);

// JSON-lines split persistence (train.jsonl / val.jsonl / test.jsonl plus
// catalog.json), the ingest stage's on-disk format.
void write_split_jsonl(const SplitDataset& split, const std::filesystem::path& dir,
                       std::uint64_t seed, const std::string& config_hash);
SplitDataset read_split_jsonl(const std::filesystem::path& dir);

}  // namespace curio

#endif
