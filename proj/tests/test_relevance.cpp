#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "curio/errors.hpp"
#include "curio/evalharness.hpp"
#include "curio/relevance.hpp"
#include "curio/rng.hpp"
#include "testutil.hpp"

using namespace curio;

namespace {

CtrModel small_model(int n_users, int n_items, std::uint64_t seed, int emb = 5, int hidden = 4) {
    std::vector<UserId> users;
    for (UserId u = 1; u <= n_users; ++u) users.push_back(u);
    std::vector<ItemId> items;
    for (ItemId i = 1; i <= n_items; ++i) items.push_back(i);
    CtrHyper hyper;
    hyper.emb_dim = emb;
    hyper.hidden = hidden;
    return CtrModel(users, items, hyper, seed);
}

void zero_tensors(CtrModel& model) {
    for (auto& [name, data] : model.parameter_tensors())
        std::fill(data->begin(), data->end(), 0.0);
}

}  // namespace

TEST_CASE("a one-event history gets attention weight exactly 1") {
    auto model = small_model(2, 6, 3);
    std::vector<ItemId> history = {4};
    std::vector<double> weights;
    model.encode_history(history, &weights);
    REQUIRE(weights.size() == 1);
    CHECK(weights[0] == 1.0);
}

TEST_CASE("zero parameters collapse every history to the same encoding") {
    auto model = small_model(2, 8, 3);
    zero_tensors(model);
    const auto a = model.encode_history(std::vector<ItemId>{1, 2, 3});
    const auto b = model.encode_history(std::vector<ItemId>{7, 6, 5});
    CHECK(a == b);
    for (double v : a) CHECK(v == 0.0);
}

TEST_CASE("zero MLP gives exactly 0.5 and the bias moves it monotonically") {
    auto model = small_model(2, 6, 4);
    zero_tensors(model);
    std::vector<ItemId> history = {1, 2};
    const auto base = model.usefulness(1, 3, history);
    CHECK(base.value == 0.5);

    // nudge only the output bias: sigmoid is monotone in it
    auto tensors = model.parameter_tensors();
    for (auto& [name, data] : tensors)
        if (name == "mlp.b2") (*data)[0] = 0.25;
    const auto up = model.usefulness(1, 3, history);
    CHECK(up.value > base.value);
}

TEST_CASE("usefulness stays strictly inside (0,1) and flags cold entities") {
    auto model = small_model(3, 10, 9);
    std::vector<ItemId> history = {1, 5, 9, 2};
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const UserId u = 1 + static_cast<UserId>(rng.below(3));
        const ItemId i = 1 + static_cast<ItemId>(rng.below(10));
        const auto score = model.usefulness(u, i, history);
        CHECK(score.value > 0.0);
        CHECK(score.value < 1.0);
        CHECK_FALSE(score.cold_user);
        CHECK_FALSE(score.cold_item);
    }
    const auto cold = model.usefulness(999, 1, history);
    CHECK(cold.cold_user);
    CHECK_FALSE(cold.cold_item);
    const auto cold_item = model.usefulness(1, 999, history);
    CHECK(cold_item.cold_item);
}

TEST_CASE("encode_history rejects empty histories and unknown items") {
    auto model = small_model(2, 6, 3);
    std::vector<ItemId> empty;
    CHECK_THROWS_AS(model.encode_history(empty), ArgumentError);
    std::vector<ItemId> unknown = {1, 42};
    CHECK_THROWS_AS(model.encode_history(unknown), ValidationError);
}

TEST_CASE("attention weights sum to one for histories up to 512 events") {
    auto model = small_model(2, 30, 6);
    Rng rng(7);
    for (int len : {2, 33, 512}) {
        std::vector<ItemId> history;
        for (int i = 0; i < len; ++i) history.push_back(1 + static_cast<ItemId>(rng.below(30)));
        std::vector<double> weights;
        model.encode_history(history, &weights);
        double sum = 0.0;
        for (double w : weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("full network gradients match central finite differences") {
    auto model = small_model(2, 7, 21);
    std::vector<ItemId> history = {3, 1, 6, 2};
    const UserId user = 2;
    const ItemId item = 5;
    const double label = 1.0;

    std::map<std::string, std::vector<double>> analytic;
    model.example_loss_and_grad(user, item, history, label, analytic);

    const double h = 1e-5;
    for (auto& [name, data] : model.parameter_tensors()) {
        std::vector<double> numeric(data->size());
        for (std::size_t i = 0; i < data->size(); ++i) {
            const double saved = (*data)[i];
            (*data)[i] = saved + h;
            const double up = model.example_loss(user, item, history, label);
            (*data)[i] = saved - h;
            const double down = model.example_loss(user, item, history, label);
            (*data)[i] = saved;
            numeric[i] = (up - down) / (2.0 * h);
        }
        const double err = testutil::max_rel_err(analytic.at(name), numeric);
        INFO("tensor ", name);
        CHECK(err < 1e-4);
    }

    // the label-0 branch exercises the other half of the loss
    std::map<std::string, std::vector<double>> analytic0;
    model.example_loss_and_grad(user, item, history, 0.0, analytic0);
    auto tensors = model.parameter_tensors();
    auto& w2 = *tensors[tensors.size() - 2].second;  // mlp.w2
    std::vector<double> numeric(w2.size());
    for (std::size_t i = 0; i < w2.size(); ++i) {
        const double saved = w2[i];
        w2[i] = saved + h;
        const double up = model.example_loss(user, item, history, 0.0);
        w2[i] = saved - h;
        const double down = model.example_loss(user, item, history, 0.0);
        w2[i] = saved;
        numeric[i] = (up - down) / (2.0 * h);
    }
    CHECK(testutil::max_rel_err(analytic0.at("mlp.w2"), numeric) < 1e-4);
}

TEST_CASE("shared-weight mirror: backward states equal forward states of the reverse") {
    auto model = small_model(1, 9, 11, 6, 5);
    // copy forward GRU weights onto the backward GRU
    std::map<std::string, std::vector<double>*> by_name;
    for (auto& [name, data] : model.parameter_tensors()) by_name[name] = data;
    for (const char* suffix : {".w_z", ".w_r", ".w_n", ".u_z", ".u_r", ".u_n", ".b_z", ".b_r", ".b_n"})
        *by_name[std::string("bwd") + suffix] = *by_name[std::string("fwd") + suffix];

    std::vector<ItemId> history = {2, 7, 4};
    std::vector<ItemId> reversed = {4, 7, 2};
    const auto states = model.history_states(history);
    const auto mirror = model.history_states(reversed);
    const int hidden = model.hidden();
    const std::size_t m = history.size();
    for (std::size_t t = 0; t < m; ++t) {
        for (int k = 0; k < hidden; ++k) {
            // backward half at position t vs forward half at mirrored position
            CHECK(states[t][hidden + k] ==
                  doctest::Approx(mirror[m - 1 - t][k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("item_latent returns the live embedding row") {
    auto a = small_model(2, 6, 42);
    auto b = small_model(2, 6, 42);
    for (ItemId i = 1; i <= 6; ++i) CHECK(a.item_latent(i) == b.item_latent(i));  // seeded init
    CHECK(a.item_latent(1) != a.item_latent(2));
    CHECK(a.item_latent(3) == a.item_latent(3));  // stable across calls
    CHECK_THROWS_AS(a.item_latent(99), ArgumentError);
}

namespace {

// user u clicks items of their own half; the decision boundary is the
// (user type, item half) match
std::map<UserId, std::vector<Interaction>> separable_clicks(int users, int items_per_half,
                                                            int events_per_user,
                                                            std::uint64_t seed) {
    Rng rng(seed);
    std::map<UserId, std::vector<Interaction>> train;
    for (UserId u = 1; u <= users; ++u) {
        const bool type_a = (u % 2) == 1;
        std::vector<ItemId> own;
        for (int i = 0; i < items_per_half; ++i)
            own.push_back(type_a ? (i + 1) : (items_per_half + i + 1));
        rng.shuffle(own);
        std::int64_t ts = 1000;
        for (int e = 0; e < events_per_user && e < static_cast<int>(own.size()); ++e) {
            train[u].push_back(Interaction{u, own[e], 5, ts});
            ts += 1000;
        }
    }
    return train;
}

}  // namespace

TEST_CASE("training separates a linearly separable click corpus") {
    const int items_per_half = 20;
    const auto train = separable_clicks(24, items_per_half, 17, 5);
    std::vector<ItemId> catalog;
    for (ItemId i = 1; i <= 2 * items_per_half; ++i) catalog.push_back(i);

    CtrHyper hyper;
    hyper.emb_dim = 8;
    hyper.hidden = 8;
    hyper.lr = 0.1;
    hyper.epochs = 10;
    hyper.positions_per_user = 16;
    const auto model = CtrModel::train(train, catalog, hyper, 31);

    // held-out: unseen own-half items against the whole other half
    double auc_sum = 0.0;
    int counted = 0;
    for (const auto& [uid, events] : train) {
        std::set<ItemId> seen;
        std::vector<ItemId> history;
        for (const auto& e : events) {
            seen.insert(e.item_id);
            history.push_back(e.item_id);
        }
        const bool type_a = (uid % 2) == 1;
        const auto encoding = model.encode_history(history);
        std::vector<double> pos, neg;
        for (ItemId i = 1; i <= 2 * items_per_half; ++i) {
            if (seen.count(i)) continue;
            const bool item_a = i <= items_per_half;
            const double score = model.usefulness_from_encoding(encoding, uid, i).value;
            (item_a == type_a ? pos : neg).push_back(score);
        }
        if (pos.empty() || neg.empty()) continue;
        auc_sum += auc_from_scores(pos, neg);
        ++counted;
    }
    REQUIRE(counted > 0);
    const double mean_auc = auc_sum / counted;
    CHECK(mean_auc > 0.95);

    // loss should also have dropped
    CHECK(model.epoch_losses().back() < model.epoch_losses().front());
}

TEST_CASE("one repeated example is memorized") {
    std::map<UserId, std::vector<Interaction>> train;
    train[1] = {Interaction{1, 1, 5, 100}, Interaction{1, 2, 5, 200}};
    std::vector<ItemId> catalog = {1, 2, 3};
    CtrHyper hyper;
    hyper.emb_dim = 4;
    hyper.hidden = 4;
    hyper.lr = 0.05;
    hyper.epochs = 200;
    const auto model = CtrModel::train(train, catalog, hyper, 2);
    CHECK(model.epoch_losses().back() < 0.05);
}

TEST_CASE("training twice with one seed gives identical tensors") {
    const auto train = separable_clicks(6, 10, 8, 9);
    std::vector<ItemId> catalog;
    for (ItemId i = 1; i <= 20; ++i) catalog.push_back(i);
    CtrHyper hyper;
    hyper.emb_dim = 4;
    hyper.hidden = 4;
    hyper.epochs = 2;
    auto a = CtrModel::train(train, catalog, hyper, 55);
    auto b = CtrModel::train(train, catalog, hyper, 55);
    auto ta = a.parameter_tensors();
    auto tb = b.parameter_tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i].second == *tb[i].second);
}

TEST_CASE("ctr snapshots round-trip") {
    const auto train = separable_clicks(4, 8, 6, 3);
    std::vector<ItemId> catalog;
    for (ItemId i = 1; i <= 16; ++i) catalog.push_back(i);
    CtrHyper hyper;
    hyper.emb_dim = 4;
    hyper.hidden = 4;
    hyper.epochs = 1;
    const auto model = CtrModel::train(train, catalog, hyper, 13);

    const auto dir = std::filesystem::temp_directory_path() / "curio_ctr_snap";
    std::filesystem::create_directories(dir);
    model.save(dir / "ctr.json", 13, "f00d");
    const auto back = CtrModel::load(dir / "ctr.json");

    std::vector<ItemId> history = {1, 9, 2};
    CHECK(back.usefulness(1, 3, history).value == model.usefulness(1, 3, history).value);
    CHECK(back.item_latent(7) == model.item_latent(7));
}
