#ifndef CURIO_RELEVANCE_HPP
#define CURIO_RELEVANCE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "curio/types.hpp"
#include "curio/vecmath.hpp"

namespace curio {

struct CtrHyper {
    int emb_dim = 32;
    int hidden = 32;
    double lr = 0.1;
    int epochs = 2;
    int max_history = 100;        // history truncated to the most recent events
    int positions_per_user = 16;  // most recent training positions used per user
    double init_scale = 1.0;
};

struct GruParams {
    Matrix w_z, w_r, w_n;  // input weights, hidden x emb
    Matrix u_z, u_r, u_n;  // recurrent weights, hidden x hidden
    std::vector<double> b_z, b_r, b_n;

    void resize(int hidden, int input);
};

// Usefulness scorer: learned user/item embeddings, bidirectional GRU over
// the history with scaled dot-product attention pooling (query = final
// concatenated state), MLP head 128 -> 64 -> 1 with a sigmoid output.
class CtrModel {
public:
    CtrModel(std::span<const UserId> users, std::span<const ItemId> items, const CtrHyper& hyper,
             std::uint64_t seed);

    static CtrModel train(const std::map<UserId, std::vector<Interaction>>& train_events,
                          std::span<const ItemId> catalog, const CtrHyper& hyper,
                          std::uint64_t seed);

    // Bidirectional encoding of the history pooled into one 2*hidden vector.
    std::vector<double> encode_history(std::span<const ItemId> history,
                                       std::vector<double>* attention_weights = nullptr) const;

    // Per-position concatenated forward/backward states (tests use these).
    std::vector<std::vector<double>> history_states(std::span<const ItemId> history) const;

    struct Score {
        double value = 0.5;
        bool cold_user = false;
        bool cold_item = false;
    };
    Score usefulness(UserId user, ItemId item, std::span<const ItemId> history) const;
    // Same, reusing a precomputed history encoding for many candidates.
    Score usefulness_from_encoding(std::span<const double> encoding, UserId user,
                                   ItemId item) const;

    std::vector<double> item_latent(ItemId item) const;
    int emb_dim() const { return emb_dim_; }
    int hidden() const { return hidden_; }
    bool has_user(UserId u) const { return user_index_.count(u) != 0; }
    bool has_item(ItemId i) const { return item_index_.count(i) != 0; }

    // Mean binary cross-entropy per epoch.
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }

    // Loss of a single labeled example; the gradient variant accumulates
    // into flat tensors keyed like parameter_tensors().
    double example_loss(UserId user, ItemId item, std::span<const ItemId> history,
                        double label) const;
    double example_loss_and_grad(UserId user, ItemId item, std::span<const ItemId> history,
                                 double label,
                                 std::map<std::string, std::vector<double>>& grads) const;

    // Name -> flat parameter storage, the embedding tables included.
    std::vector<std::pair<std::string, std::vector<double>*>> parameter_tensors();

    void save(const std::filesystem::path& path, std::uint64_t seed,
              const std::string& config_hash) const;
    static CtrModel load(const std::filesystem::path& path);

private:
    int emb_dim_ = 0;
    int hidden_ = 0;
    std::map<UserId, int> user_index_;
    std::map<ItemId, int> item_index_;
    Matrix user_emb_, item_emb_;
    GruParams fwd_, bwd_;
    Matrix mlp_w1_;               // 2*hidden x (2*hidden + 2*emb_dim)
    std::vector<double> mlp_b1_;  // 2*hidden
    std::vector<double> mlp_w2_;  // 2*hidden
    std::vector<double> mlp_b2_;  // single element
    std::vector<double> epoch_losses_;

    CtrModel() = default;

    struct Trace;
    struct Gradients;
    struct AdagradState;
    void run_bigru(std::span<const ItemId> history, Trace& trace) const;
    double loss_core(UserId user, ItemId item, std::span<const ItemId> history, double label,
                     Gradients* grads) const;
    void apply_gradients(const Gradients& grads, double lr, AdagradState& state);
    std::span<const double> item_row_span(int idx) const;
    std::span<const double> user_row_span(int idx) const;
};

}  // namespace curio

#endif
