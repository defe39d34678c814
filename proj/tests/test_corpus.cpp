#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "curio/corpus.hpp"
#include "curio/errors.hpp"
#include "curio/rng.hpp"
#include "testutil.hpp"

using namespace curio;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("curio_corpus_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

// five events so the user survives the length filter
const std::string kFiveRatings =
    "1::10::5::100\n"
    "1::11::4::200\n"
    "1::12::3::300\n"
    "1::13::5::400\n"
    "1::14::2::500\n";

std::string movies_for(int n) {
    std::string out;
    for (int i = 1; i <= n; ++i)
        out += std::to_string(i) + "::Movie " + std::to_string(i) + " (1995)::Comedy|Drama\n";
    return out;
}

}  // namespace

TEST_CASE("load_movielens parses the documented record format") {
    const auto dir = temp_dir("parse");
    write_file(dir / "ratings.dat", "1::1193::5::978300760\n" + kFiveRatings);
    write_file(dir / "movies.dat", movies_for(20) + "1193::One Flew Over (1975)::Drama\n");

    const auto result = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    REQUIRE(result.sequences.size() == 1);
    // that timestamp sorts the record to the end of the sequence
    const auto& parsed = result.sequences[0].events.back();
    CHECK(parsed.user_id == 1);
    CHECK(parsed.item_id == 1193);
    CHECK(parsed.rating == 5);
    CHECK(parsed.timestamp == 978300760);
    CHECK(result.catalog.contains(1193));
    CHECK(result.catalog.items.at(1193).genres == std::vector<std::string>{"Drama"});
}

TEST_CASE("load_movielens on an empty ratings file yields no sequences") {
    const auto dir = temp_dir("empty");
    write_file(dir / "ratings.dat", "");
    write_file(dir / "movies.dat", movies_for(3));
    const auto result = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    CHECK(result.sequences.empty());
    CHECK(result.catalog.size() == 3);
}

TEST_CASE("equal timestamps keep file order") {
    const auto dir = temp_dir("ties");
    write_file(dir / "ratings.dat",
               "1::10::5::100\n"
               "1::11::4::100\n"
               "1::12::3::100\n"
               "1::13::5::100\n"
               "1::14::2::100\n");
    write_file(dir / "movies.dat", movies_for(20));
    const auto result = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    REQUIRE(result.sequences.size() == 1);
    const auto& ev = result.sequences[0].events;
    CHECK(ev[0].item_id == 10);
    CHECK(ev[1].item_id == 11);
    CHECK(ev[2].item_id == 12);
    CHECK(ev[3].item_id == 13);
    CHECK(ev[4].item_id == 14);
}

TEST_CASE("malformed line reports its line number") {
    const auto dir = temp_dir("malformed");
    write_file(dir / "ratings.dat", "1::10::5::100\nnot-a-line\n");
    write_file(dir / "movies.dat", movies_for(20));
    try {
        load_movielens(dir / "ratings.dat", dir / "movies.dat");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
    }
}

TEST_CASE("rating outside 1..5 is rejected") {
    const auto dir = temp_dir("badrating");
    write_file(dir / "ratings.dat", "1::10::6::100\n");
    write_file(dir / "movies.dat", movies_for(20));
    CHECK_THROWS_AS(load_movielens(dir / "ratings.dat", dir / "movies.dat"), ValidationError);
}

TEST_CASE("item missing from the movies file is rejected") {
    const auto dir = temp_dir("missingitem");
    write_file(dir / "ratings.dat", "1::999::5::100\n");
    write_file(dir / "movies.dat", movies_for(20));
    CHECK_THROWS_AS(load_movielens(dir / "ratings.dat", dir / "movies.dat"), ValidationError);
}

TEST_CASE("users with fewer than five events are dropped and counted") {
    const auto dir = temp_dir("short");
    write_file(dir / "ratings.dat", kFiveRatings + "2::10::5::100\n2::11::4::200\n");
    write_file(dir / "movies.dat", movies_for(20));
    const auto result = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    CHECK(result.sequences.size() == 1);
    CHECK(result.dropped_users == 1);
}

TEST_CASE("leave-last-out split uses the documented per-user partition") {
    // sequence [a,b,c,d,e] -> train {a,b,c}, val positive d, test positive e
    Catalog catalog;
    for (ItemId i = 1; i <= 100; ++i) catalog.items[i] = CatalogItem{"m", {"Drama"}};
    UserSequence seq{7, {}};
    for (int i = 0; i < 5; ++i) seq.events.push_back(Interaction{7, 10 + i, 4, 100 + i});

    const auto split = split_leave_last_out({seq}, catalog, 42);
    REQUIRE(split.train.count(7) == 1);
    const auto& train = split.train.at(7);
    REQUIRE(train.size() == 3);
    CHECK(train[0].item_id == 10);
    CHECK(train[1].item_id == 11);
    CHECK(train[2].item_id == 12);
    CHECK(split.validation.at(7).positive.item_id == 13);
    CHECK(split.test.at(7).positive.item_id == 14);
    CHECK(split.validation.at(7).negatives.size() == 9);
    CHECK(split.test.at(7).negatives.size() == 49);
}

TEST_CASE("negatives come from the unseen catalog, without replacement") {
    // catalog of 60 items, user saw 10 -> 49 test negatives from the 50 unseen
    Catalog catalog;
    for (ItemId i = 1; i <= 60; ++i) catalog.items[i] = CatalogItem{"m", {"Drama"}};
    UserSequence seq{1, {}};
    for (int i = 0; i < 10; ++i) seq.events.push_back(Interaction{1, 1 + i, 4, 100 + i});

    const auto split = split_leave_last_out({seq}, catalog, 9);
    const auto& negatives = split.test.at(1).negatives;
    REQUIRE(negatives.size() == 49);
    std::set<ItemId> unique(negatives.begin(), negatives.end());
    CHECK(unique.size() == 49);  // without replacement
    for (ItemId n : unique) {
        CHECK(n >= 11);
        CHECK(n <= 60);
    }
}

TEST_CASE("split is reproducible from its seed") {
    Catalog catalog;
    for (ItemId i = 1; i <= 200; ++i) catalog.items[i] = CatalogItem{"m", {"Drama"}};
    std::vector<UserSequence> seqs;
    for (UserId u = 1; u <= 5; ++u) {
        UserSequence s{u, {}};
        for (int i = 0; i < 12; ++i)
            s.events.push_back(
                Interaction{u, static_cast<ItemId>(1 + (u * 13 + i * 7) % 200), 3, 1000 + i});
        std::stable_sort(s.events.begin(), s.events.end(),
                         [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        seqs.push_back(s);
    }
    const auto a = split_leave_last_out(seqs, catalog, 1234);
    const auto b = split_leave_last_out(seqs, catalog, 1234);
    for (const auto& [uid, pool] : a.test) {
        CHECK(pool.negatives == b.test.at(uid).negatives);
        CHECK(pool.positive == b.test.at(uid).positive);
    }
    for (const auto& [uid, pool] : a.validation)
        CHECK(pool.negatives == b.validation.at(uid).negatives);
}

TEST_CASE("split properties hold on a synthetic corpus") {
    const auto dir = temp_dir("synth");
    testutil::SyntheticSpec spec;
    spec.n_users = 40;
    spec.n_items = 150;
    testutil::write_synthetic_movielens(dir, spec);
    const auto loaded = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    const auto split = split_leave_last_out(loaded.sequences, loaded.catalog, 77);

    for (const auto& seq : loaded.sequences) {
        const auto uid = seq.user_id;
        const auto& train = split.train.at(uid);

        // partition: train + val positive + test positive == the sequence
        REQUIRE(train.size() == seq.events.size() - 2);
        for (std::size_t i = 0; i < train.size(); ++i) CHECK(train[i] == seq.events[i]);
        CHECK(split.validation.at(uid).positive == seq.events[seq.events.size() - 2]);
        CHECK(split.test.at(uid).positive == seq.events.back());

        // no sampled negative appears anywhere in the user's sequence
        std::set<ItemId> seen;
        for (const auto& e : seq.events) seen.insert(e.item_id);
        for (ItemId n : split.validation.at(uid).negatives) CHECK(seen.count(n) == 0);
        for (ItemId n : split.test.at(uid).negatives) CHECK(seen.count(n) == 0);
    }
}

TEST_CASE("session_suffix follows the ceil rule") {
    std::vector<Interaction> events;
    for (int i = 0; i < 10; ++i) events.push_back(Interaction{1, 100 + i, 3, 1000 + i});

    SUBCASE("x=30 of 10 events keeps the last 3") {
        const auto suffix = session_suffix(events, 30);
        REQUIRE(suffix.size() == 3);
        CHECK(suffix[0].item_id == 107);
        CHECK(suffix[2].item_id == 109);
    }
    SUBCASE("x=100 keeps everything") {
        const auto suffix = session_suffix(events, 100);
        CHECK(suffix.size() == 10);
        CHECK(suffix.front().item_id == 100);
    }
    SUBCASE("ceil keeps at least one event") {
        std::vector<Interaction> seven(events.begin(), events.begin() + 7);
        const auto suffix = session_suffix(seven, 5);  // ceil(0.35) = 1
        REQUIRE(suffix.size() == 1);
        CHECK(suffix[0].item_id == 106);
    }
    SUBCASE("x outside [1,100] is rejected") {
        CHECK_THROWS_AS(session_suffix(events, 0), ArgumentError);
        CHECK_THROWS_AS(session_suffix(events, 101), ArgumentError);
    }
}

TEST_CASE("smaller-x sessions are suffixes of larger-x sessions") {
    Rng rng(5);
    std::vector<Interaction> events;
    for (int i = 0; i < 37; ++i)
        events.push_back(Interaction{1, static_cast<ItemId>(rng.below(1000)), 3, 1000 + i});
    for (int x1 = 1; x1 <= 100; x1 += 7) {
        for (int x2 = x1; x2 <= 100; x2 += 11) {
            const auto s1 = session_suffix(events, x1);
            const auto s2 = session_suffix(events, x2);
            REQUIRE(s1.size() <= s2.size());
            for (std::size_t i = 0; i < s1.size(); ++i)
                CHECK(s1[s1.size() - 1 - i] == s2[s2.size() - 1 - i]);
        }
    }
}

TEST_CASE("split round-trips through the jsonl files") {
    const auto dir = temp_dir("jsonl");
    testutil::SyntheticSpec spec;
    spec.n_users = 12;
    spec.n_items = 120;
    testutil::write_synthetic_movielens(dir, spec);
    const auto loaded = load_movielens(dir / "ratings.dat", dir / "movies.dat");
    const auto split = split_leave_last_out(loaded.sequences, loaded.catalog, 3);

    write_split_jsonl(split, dir / "split", 3, "abc");
    const auto back = read_split_jsonl(dir / "split");

    REQUIRE(back.train.size() == split.train.size());
    for (const auto& [uid, events] : split.train) {
        const auto& loaded_events = back.train.at(uid);
        REQUIRE(loaded_events.size() == events.size());
        for (std::size_t i = 0; i < events.size(); ++i) CHECK(loaded_events[i] == events[i]);
    }
    for (const auto& [uid, pool] : split.test) {
        CHECK(back.test.at(uid).positive == pool.positive);
        CHECK(back.test.at(uid).negatives == pool.negatives);
    }
    CHECK(back.catalog.size() == split.catalog.size());
}
