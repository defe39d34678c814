#ifndef CURIO_FACTORIZATION_HPP
#define CURIO_FACTORIZATION_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "curio/types.hpp"

namespace curio {

struct MfHyper {
    int dim = 80;
    double lr = 0.005;
    double reg = 0.02;
    int epochs = 20;
    double init_scale = 0.1;  // factors start uniform in [-s,s]/sqrt(dim)
};

// One observed rating; values are real so synthetic corpora are not forced
// through the 1..5 integer grid.
struct Rating {
    UserId user = 0;
    ItemId item = 0;
    double value = 0.0;
};

// Biased regularized matrix factorization trained by SGD. Prediction is
// global_mean + user_bias + item_bias + dot(user_factors, item_factors).
class FactorModel {
public:
    struct Affinity {
        double value = 0.0;
        bool cold = false;  // user or item unknown, bias-only fallback used
    };

    static FactorModel train(std::span<const Rating> ratings, const MfHyper& hyper,
                             std::uint64_t seed);
    static FactorModel train(const std::map<UserId, std::vector<Interaction>>& train_events,
                             const MfHyper& hyper, std::uint64_t seed);

    Affinity predict_affinity(UserId user, ItemId item) const;

    // Top-20 catalog items by affinity, descending, ascending item id on
    // ties; the whole catalog is ranked, seen items included.
    PreferenceSet long_term_preferences(UserId user, std::span<const ItemId> catalog) const;

    int dim() const { return dim_; }
    double global_mean() const { return global_mean_; }
    bool has_user(UserId u) const { return user_index_.count(u) != 0; }
    bool has_item(ItemId i) const { return item_index_.count(i) != 0; }
    std::vector<ItemId> known_items() const;

    std::span<const double> user_vector(UserId u) const;
    std::span<const double> item_vector(ItemId i) const;
    double user_bias(UserId u) const;
    double item_bias(ItemId i) const;

    // Mean squared training error per epoch, residuals taken before each
    // update.
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }
    // Regularized objective captured right after the last epoch.
    double final_objective() const { return final_objective_; }
    // sum of squared errors + reg * (all factor and bias squares)
    double objective(std::span<const Rating> ratings, double reg) const;

    void save(const std::filesystem::path& path, std::uint64_t seed,
              const std::string& config_hash) const;
    static FactorModel load(const std::filesystem::path& path);

    // Test hook: overwrite one item's factors (dimension must match).
    void set_item_vector(ItemId i, std::span<const double> v);
    void set_user_vector(UserId u, std::span<const double> v);
    void set_biases(UserId u, ItemId i, double bu, double bi);

private:
    int dim_ = 0;
    double global_mean_ = 0.0;
    std::map<UserId, int> user_index_;
    std::map<ItemId, int> item_index_;
    std::vector<double> user_factors_;  // row-major, user_index * dim
    std::vector<double> item_factors_;
    std::vector<double> user_biases_;
    std::vector<double> item_biases_;
    std::vector<double> epoch_losses_;
    double final_objective_ = 0.0;
};

}  // namespace curio

#endif
