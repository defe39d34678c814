#include "curio/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "curio/errors.hpp"
#include "curio/rng.hpp"

namespace curio {

using nlohmann::json;

std::vector<ItemId> Catalog::ids() const {
    std::vector<ItemId> out;
    out.reserve(items.size());
    for (const auto& [id, _] : items) out.push_back(id);
    return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

std::int64_t parse_int(const std::string& s, const char* what, std::size_t line_no) {
    try {
        std::size_t consumed = 0;
        const std::int64_t v = std::stoll(s, &consumed);
        if (consumed != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string("bad ") + what + " field '" + s + "'", line_no);
    }
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

LoadResult load_movielens(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& movies_path) {
    std::ifstream movies(movies_path);
    if (!movies) throw IoError("cannot open movies file: " + movies_path.string());

    Catalog catalog;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(movies, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_fields(line, "::");
        if (fields.size() != 3) throw ParseError("expected MovieID::Title::Genres", line_no);
        const ItemId id = parse_int(fields[0], "movie id", line_no);
        CatalogItem item;
        item.title = fields[1];
        for (auto& g : split_fields(fields[2], "|"))
            if (!g.empty()) item.genres.push_back(g);
        catalog.items[id] = std::move(item);
    }

    std::ifstream ratings(ratings_path);
    if (!ratings) throw IoError("cannot open ratings file: " + ratings_path.string());

    std::map<UserId, std::vector<Interaction>> by_user;
    line_no = 0;
    while (std::getline(ratings, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_fields(line, "::");
        if (fields.size() != 4)
            throw ParseError("expected UserID::MovieID::Rating::Timestamp", line_no);
        Interaction e;
        e.user_id = parse_int(fields[0], "user id", line_no);
        e.item_id = parse_int(fields[1], "movie id", line_no);
        e.rating = static_cast<int>(parse_int(fields[2], "rating", line_no));
        e.timestamp = parse_int(fields[3], "timestamp", line_no);
        if (e.rating < 1 || e.rating > 5)
            throw ValidationError("rating " + std::to_string(e.rating) + " outside 1..5 at line " +
                                  std::to_string(line_no));
        if (e.timestamp <= 0)
            throw ValidationError("non-positive timestamp at line " + std::to_string(line_no));
        if (!catalog.contains(e.item_id))
            throw ValidationError("item " + std::to_string(e.item_id) +
                                  " referenced in ratings but absent from movies (line " +
                                  std::to_string(line_no) + ")");
        by_user[e.user_id].push_back(e);
    }

    LoadResult result;
    result.catalog = std::move(catalog);
    for (auto& [uid, events] : by_user) {
        if (events.size() < kMinSequenceLength) {
            ++result.dropped_users;
            continue;
        }
        // Stable sort keeps equal timestamps in file order.
        std::stable_sort(events.begin(), events.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
        result.sequences.push_back(UserSequence{uid, std::move(events)});
    }
    return result;
}

namespace {

// k distinct picks from `pool` via partial Fisher-Yates; pool is consumed.
std::vector<ItemId> sample_without_replacement(std::vector<ItemId>& pool, int k, Rng& rng) {
    std::vector<ItemId> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace

SplitDataset split_leave_last_out(const std::vector<UserSequence>& sequences,
                                  const Catalog& catalog, std::uint64_t seed) {
    SplitDataset split;
    split.catalog = catalog;
    split.catalog_ids = catalog.ids();

    for (const auto& seq : sequences) {
        if (seq.events.size() < kMinSequenceLength) {
            ++split.dropped_users;
            continue;
        }
        const std::size_t n = seq.events.size();
        std::vector<Interaction> train(seq.events.begin(), seq.events.end() - 2);

        std::vector<ItemId> seen;
        seen.reserve(n);
        for (const auto& e : seq.events) seen.push_back(e.item_id);
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());

        std::vector<ItemId> unseen;
        unseen.reserve(split.catalog_ids.size());
        std::set_difference(split.catalog_ids.begin(), split.catalog_ids.end(), seen.begin(),
                            seen.end(), std::back_inserter(unseen));
        if (unseen.size() < static_cast<std::size_t>(kValidationNegatives) ||
            unseen.size() < static_cast<std::size_t>(kTestNegatives))
            throw ValidationError("user " + std::to_string(seq.user_id) +
                                  " has too few unseen items for negative sampling");

        // Per-user sub-streams so sampling does not depend on user order.
        const std::string tag = std::to_string(seq.user_id);
        Rng val_rng(derive_seed(seed, "neg:val:" + tag));
        Rng test_rng(derive_seed(seed, "neg:test:" + tag));

        std::vector<ItemId> pool = unseen;
        EvalPool val{seq.events[n - 2], sample_without_replacement(pool, kValidationNegatives, val_rng)};
        pool = unseen;
        EvalPool test{seq.events[n - 1], sample_without_replacement(pool, kTestNegatives, test_rng)};

        split.train.emplace(seq.user_id, std::move(train));
        split.validation.emplace(seq.user_id, std::move(val));
        split.test.emplace(seq.user_id, std::move(test));
    }
    return split;
}

std::vector<Interaction> session_suffix(std::span<const Interaction> events, int x) {
    if (x < 1 || x > 100)
        throw ArgumentError("session percentage x must lie in [1,100], got " + std::to_string(x));
    if (events.empty()) throw ArgumentError("session_suffix needs at least one event");
    const std::size_t n = events.size();
    // ceil(x/100 * n), at least 1
    std::size_t take = (static_cast<std::size_t>(x) * n + 99) / 100;
    if (take == 0) take = 1;
    if (take > n) take = n;
    return std::vector<Interaction>(events.end() - take, events.end());
}

namespace {

json interaction_line(const Interaction& e, const char* role) {
    return json{{"user_id", e.user_id},
                {"item_id", e.item_id},
                {"rating", e.rating},
                {"timestamp", e.timestamp},
                {"role", role}};
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& lines,
                 std::uint64_t seed, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << json{{"meta", {{"version", 1}, {"seed", seed}, {"config_hash", config_hash}}}}.dump()
        << "\n";
    for (const auto& l : lines) out << l.dump() << "\n";
}

}  // namespace

void write_split_jsonl(const SplitDataset& split, const std::filesystem::path& dir,
                       std::uint64_t seed, const std::string& config_hash) {
    std::filesystem::create_directories(dir);

    std::vector<json> train_lines;
    for (const auto& [uid, events] : split.train)
        for (const auto& e : events) train_lines.push_back(interaction_line(e, "pos"));
    write_lines(dir / "train.jsonl", train_lines, seed, config_hash);

    const auto pool_lines = [](const std::map<UserId, EvalPool>& pools) {
        std::vector<json> lines;
        for (const auto& [uid, pool] : pools) {
            lines.push_back(interaction_line(pool.positive, "pos"));
            for (ItemId neg : pool.negatives)
                lines.push_back(interaction_line(Interaction{uid, neg, 0, 0}, "neg"));
        }
        return lines;
    };
    write_lines(dir / "val.jsonl", pool_lines(split.validation), seed, config_hash);
    write_lines(dir / "test.jsonl", pool_lines(split.test), seed, config_hash);

    json cat;
    cat["version"] = 1;
    cat["seed"] = seed;
    cat["config_hash"] = config_hash;
    json items = json::object();
    for (const auto& [id, item] : split.catalog.items)
        items[std::to_string(id)] = json{{"title", item.title}, {"genres", item.genres}};
    cat["items"] = std::move(items);
    cat["dropped_users"] = split.dropped_users;
    std::ofstream out(dir / "catalog.json");
    if (!out) throw IoError("cannot write " + (dir / "catalog.json").string());
    out << cat.dump(2) << "\n";
}

namespace {

std::vector<json> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("meta")) continue;
        out.push_back(std::move(j));
    }
    return out;
}

Interaction line_to_interaction(const json& j) {
    return Interaction{j.at("user_id").get<UserId>(), j.at("item_id").get<ItemId>(),
                       j.at("rating").get<int>(), j.at("timestamp").get<std::int64_t>()};
}

std::map<UserId, EvalPool> read_pools(const std::filesystem::path& path) {
    std::map<UserId, EvalPool> pools;
    for (const auto& j : read_lines(path)) {
        const auto uid = j.at("user_id").get<UserId>();
        if (j.at("role") == "pos") {
            pools[uid].positive = line_to_interaction(j);
        } else {
            pools[uid].negatives.push_back(j.at("item_id").get<ItemId>());
        }
    }
    return pools;
}

}  // namespace

SplitDataset read_split_jsonl(const std::filesystem::path& dir) {
    SplitDataset split;
    for (const auto& j : read_lines(dir / "train.jsonl"))
        split.train[j.at("user_id").get<UserId>()].push_back(line_to_interaction(j));
    split.validation = read_pools(dir / "val.jsonl");
    split.test = read_pools(dir / "test.jsonl");

    std::ifstream in(dir / "catalog.json");
    if (!in) throw IoError("cannot open " + (dir / "catalog.json").string());
    json cat = json::parse(in);
    for (const auto& [key, value] : cat.at("items").items()) {
        CatalogItem item;
        item.title = value.at("title").get<std::string>();
        item.genres = value.at("genres").get<std::vector<std::string>>();
        split.catalog.items[std::stoll(key)] = std::move(item);
    }
    split.dropped_users = cat.value("dropped_users", 0u);
    split.catalog_ids = split.catalog.ids();
    return split;
}

}  // namespace curio
