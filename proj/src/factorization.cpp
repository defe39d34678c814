#include "curio/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "curio/errors.hpp"
#include "curio/rng.hpp"
#include "curio/vecmath.hpp"

namespace curio {

using nlohmann::json;

FactorModel FactorModel::train(const std::map<UserId, std::vector<Interaction>>& train_events,
                               const MfHyper& hyper, std::uint64_t seed) {
    std::vector<Rating> ratings;
    for (const auto& [uid, events] : train_events)
        for (const auto& e : events)
            ratings.push_back(Rating{e.user_id, e.item_id, static_cast<double>(e.rating)});
    return train(ratings, hyper, seed);
}

FactorModel FactorModel::train(std::span<const Rating> ratings, const MfHyper& hyper,
                               std::uint64_t seed) {
    if (ratings.empty()) throw ArgumentError("train_factors: empty training set");
    if (hyper.dim < 1) throw ArgumentError("train_factors: dim must be positive");

    FactorModel model;
    model.dim_ = hyper.dim;

    double sum = 0.0;
    for (const auto& r : ratings) {
        sum += r.value;
        if (!model.user_index_.count(r.user))
            model.user_index_.emplace(r.user, static_cast<int>(model.user_index_.size()));
        if (!model.item_index_.count(r.item))
            model.item_index_.emplace(r.item, static_cast<int>(model.item_index_.size()));
    }
    model.global_mean_ = sum / static_cast<double>(ratings.size());

    const int d = hyper.dim;
    const std::size_t nu = model.user_index_.size();
    const std::size_t ni = model.item_index_.size();
    model.user_factors_.assign(nu * d, 0.0);
    model.item_factors_.assign(ni * d, 0.0);
    model.user_biases_.assign(nu, 0.0);
    model.item_biases_.assign(ni, 0.0);

    Rng rng(derive_seed(seed, "mf:init"));
    const double scale = hyper.init_scale / std::sqrt(static_cast<double>(d));
    for (auto& v : model.user_factors_) v = rng.uniform(-scale, scale);
    for (auto& v : model.item_factors_) v = rng.uniform(-scale, scale);

    std::vector<std::size_t> order(ratings.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Rng shuffler(derive_seed(seed, "mf:shuffle"));
    std::vector<double> old_user(d);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffler.shuffle(order);
        double sse = 0.0;
        for (std::size_t idx : order) {
            const Rating& r = ratings[idx];
            const int ui = model.user_index_.at(r.user);
            const int ii = model.item_index_.at(r.item);
            double* pu = model.user_factors_.data() + static_cast<std::size_t>(ui) * d;
            double* qi = model.item_factors_.data() + static_cast<std::size_t>(ii) * d;

            double pred = model.global_mean_ + model.user_biases_[ui] + model.item_biases_[ii];
            for (int k = 0; k < d; ++k) pred += pu[k] * qi[k];
            const double err = r.value - pred;
            sse += err * err;

            model.user_biases_[ui] += hyper.lr * (err - hyper.reg * model.user_biases_[ui]);
            model.item_biases_[ii] += hyper.lr * (err - hyper.reg * model.item_biases_[ii]);
            std::copy(pu, pu + d, old_user.begin());
            for (int k = 0; k < d; ++k) {
                pu[k] += hyper.lr * (err * qi[k] - hyper.reg * pu[k]);
                qi[k] += hyper.lr * (err * old_user[k] - hyper.reg * qi[k]);
            }
        }
        const double mse = sse / static_cast<double>(ratings.size());
        if (!std::isfinite(mse))
            throw NumericError("factorization diverged at epoch " + std::to_string(epoch));
        model.epoch_losses_.push_back(mse);
    }

    model.final_objective_ = model.objective(ratings, hyper.reg);
    return model;
}

double FactorModel::objective(std::span<const Rating> ratings, double reg) const {
    if (ratings.empty()) throw ArgumentError("objective: empty training set");
    double sse = 0.0;
    for (const auto& r : ratings) {
        const auto p = predict_affinity(r.user, r.item);
        const double err = r.value - p.value;
        sse += err * err;
    }
    double penalty = 0.0;
    for (double v : user_factors_) penalty += v * v;
    for (double v : item_factors_) penalty += v * v;
    for (double v : user_biases_) penalty += v * v;
    for (double v : item_biases_) penalty += v * v;
    return sse + reg * penalty;
}

FactorModel::Affinity FactorModel::predict_affinity(UserId user, ItemId item) const {
    const auto u = user_index_.find(user);
    const auto i = item_index_.find(item);
    Affinity out;
    out.value = global_mean_;
    out.cold = (u == user_index_.end()) || (i == item_index_.end());
    if (u != user_index_.end()) out.value += user_biases_[u->second];
    if (i != item_index_.end()) out.value += item_biases_[i->second];
    if (!out.cold) {
        const double* pu = user_factors_.data() + static_cast<std::size_t>(u->second) * dim_;
        const double* qi = item_factors_.data() + static_cast<std::size_t>(i->second) * dim_;
        double s = 0.0;
        for (int k = 0; k < dim_; ++k) s += pu[k] * qi[k];
        out.value += s;
    }
    return out;
}

PreferenceSet FactorModel::long_term_preferences(UserId user,
                                                 std::span<const ItemId> catalog) const {
    if (catalog.size() < static_cast<std::size_t>(kPreferenceSetSize))
        throw ArgumentError("long_term_preferences: catalog smaller than " +
                            std::to_string(kPreferenceSetSize) + " items");

    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(catalog.size());
    for (ItemId id : catalog) scored.emplace_back(predict_affinity(user, id).value, id);
    // Descending score, ascending item id on exact ties.
    std::partial_sort(scored.begin(), scored.begin() + kPreferenceSetSize, scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });

    PreferenceSet set;
    set.user_id = user;
    set.kind = PreferenceKind::kLong;
    for (int i = 0; i < kPreferenceSetSize; ++i) {
        const ItemId id = scored[i].second;
        set.items.push_back(id);
        if (has_item(id)) {
            const auto v = item_vector(id);
            set.vectors.emplace_back(v.begin(), v.end());
        } else {
            set.vectors.emplace_back(dim_, 0.0);
        }
    }
    return set;
}

std::vector<ItemId> FactorModel::known_items() const {
    std::vector<ItemId> out;
    out.reserve(item_index_.size());
    for (const auto& [id, _] : item_index_) out.push_back(id);
    return out;
}

std::span<const double> FactorModel::user_vector(UserId u) const {
    const auto it = user_index_.find(u);
    if (it == user_index_.end()) throw ArgumentError("unknown user " + std::to_string(u));
    return {user_factors_.data() + static_cast<std::size_t>(it->second) * dim_,
            static_cast<std::size_t>(dim_)};
}

std::span<const double> FactorModel::item_vector(ItemId i) const {
    const auto it = item_index_.find(i);
    if (it == item_index_.end()) throw ArgumentError("unknown item " + std::to_string(i));
    return {item_factors_.data() + static_cast<std::size_t>(it->second) * dim_,
            static_cast<std::size_t>(dim_)};
}

double FactorModel::user_bias(UserId u) const {
    const auto it = user_index_.find(u);
    if (it == user_index_.end()) throw ArgumentError("unknown user " + std::to_string(u));
    return user_biases_[it->second];
}

double FactorModel::item_bias(ItemId i) const {
    const auto it = item_index_.find(i);
    if (it == item_index_.end()) throw ArgumentError("unknown item " + std::to_string(i));
    return item_biases_[it->second];
}

void FactorModel::set_item_vector(ItemId i, std::span<const double> v) {
    const auto it = item_index_.find(i);
    if (it == item_index_.end()) {
        item_index_.emplace(i, static_cast<int>(item_index_.size()));
        item_factors_.resize(item_index_.size() * dim_, 0.0);
        item_biases_.resize(item_index_.size(), 0.0);
        set_item_vector(i, v);
        return;
    }
    if (v.size() != static_cast<std::size_t>(dim_))
        throw ArgumentError("set_item_vector: dimension mismatch");
    std::copy(v.begin(), v.end(),
              item_factors_.begin() + static_cast<std::size_t>(it->second) * dim_);
}

void FactorModel::set_user_vector(UserId u, std::span<const double> v) {
    const auto it = user_index_.find(u);
    if (it == user_index_.end()) {
        user_index_.emplace(u, static_cast<int>(user_index_.size()));
        user_factors_.resize(user_index_.size() * dim_, 0.0);
        user_biases_.resize(user_index_.size(), 0.0);
        set_user_vector(u, v);
        return;
    }
    if (v.size() != static_cast<std::size_t>(dim_))
        throw ArgumentError("set_user_vector: dimension mismatch");
    std::copy(v.begin(), v.end(),
              user_factors_.begin() + static_cast<std::size_t>(it->second) * dim_);
}

void FactorModel::set_biases(UserId u, ItemId i, double bu, double bi) {
    user_biases_.at(user_index_.at(u)) = bu;
    item_biases_.at(item_index_.at(i)) = bi;
}

void FactorModel::save(const std::filesystem::path& path, std::uint64_t seed,
                       const std::string& config_hash) const {
    json j;
    j["format"] = "curio-mf";
    j["version"] = 1;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["dim"] = dim_;
    j["global_mean"] = global_mean_;
    json users = json::array();
    for (const auto& [uid, idx] : user_index_) {
        const double* p = user_factors_.data() + static_cast<std::size_t>(idx) * dim_;
        users.push_back(json{{"id", uid},
                             {"bias", user_biases_[idx]},
                             {"factors", std::vector<double>(p, p + dim_)}});
    }
    j["users"] = std::move(users);
    json items = json::array();
    for (const auto& [iid, idx] : item_index_) {
        const double* p = item_factors_.data() + static_cast<std::size_t>(idx) * dim_;
        items.push_back(json{{"id", iid},
                             {"bias", item_biases_[idx]},
                             {"factors", std::vector<double>(p, p + dim_)}});
    }
    j["items"] = std::move(items);
    j["epoch_losses"] = epoch_losses_;
    j["final_objective"] = final_objective_;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump() << "\n";
}

FactorModel FactorModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j = json::parse(in);
    if (j.value("format", "") != "curio-mf")
        throw ValidationError("not a factorization snapshot: " + path.string());

    FactorModel model;
    model.dim_ = j.at("dim").get<int>();
    model.global_mean_ = j.at("global_mean").get<double>();
    for (const auto& u : j.at("users")) {
        const UserId id = u.at("id").get<UserId>();
        const int idx = static_cast<int>(model.user_index_.size());
        model.user_index_.emplace(id, idx);
        model.user_biases_.push_back(u.at("bias").get<double>());
        const auto f = u.at("factors").get<std::vector<double>>();
        model.user_factors_.insert(model.user_factors_.end(), f.begin(), f.end());
    }
    for (const auto& i : j.at("items")) {
        const ItemId id = i.at("id").get<ItemId>();
        const int idx = static_cast<int>(model.item_index_.size());
        model.item_index_.emplace(id, idx);
        model.item_biases_.push_back(i.at("bias").get<double>());
        const auto f = i.at("factors").get<std::vector<double>>();
        model.item_factors_.insert(model.item_factors_.end(), f.begin(), f.end());
    }
    model.epoch_losses_ = j.value("epoch_losses", std::vector<double>{});
    model.final_objective_ = j.value("final_objective", 0.0);
    return model;
}

}  // namespace curio
