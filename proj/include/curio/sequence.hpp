#ifndef CURIO_SEQUENCE_HPP
#define CURIO_SEQUENCE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "curio/factorization.hpp"
#include "curio/types.hpp"
#include "curio/vecmath.hpp"

namespace curio {

struct SeqHyper {
    double lr = 0.01;
    int epochs = 10;
    double clip_norm = 5.0;
    double init_scale = 1.0;  // weights start uniform in [-s,s]/sqrt(hidden)
};

// LSTM cell with an extra time gate on the input contribution plus a learned
// query projection for attention pooling. Hidden size equals the frozen item
// embedding dimension.
struct SequenceParams {
    Matrix w_ix, w_ih, w_fx, w_fh, w_ox, w_oh, w_gx, w_gh;  // gate weights
    std::vector<double> b_i, b_f, b_o, b_g;
    Matrix w_tx;                 // time gate input weights
    std::vector<double> w_ts;    // per-unit scale on log1p(delta_t)
    std::vector<double> b_t;
    Matrix w_q;                  // attention query projection

    void resize(int hidden, int input);
    void for_each(const std::function<void(const std::string&, std::vector<double>&)>& fn);
    void scale(double factor);
    double squared_norm() const;
};

// Short-term preference model: time-aware recurrent encoder over the session
// suffix, scores catalog items against the attention-pooled state in the
// shared 80-dim item factor space.
class SequenceModel {
public:
    // Embeddings are copied in and stay frozen; params are seeded uniform.
    SequenceModel(int dim, std::map<ItemId, std::vector<double>> embeddings, std::uint64_t seed,
                  double init_scale = 1.0);

    static SequenceModel train(const std::map<UserId, std::vector<Interaction>>& sessions,
                               const FactorModel& factors, const SeqHyper& hyper,
                               std::uint64_t seed);

    // One recurrent update. delta_t is the gap in seconds to the previous
    // event and must be nonnegative.
    std::pair<std::vector<double>, std::vector<double>> cell_step(
        std::span<const double> prev_hidden, std::span<const double> prev_cell,
        std::span<const double> item_embedding, double delta_t) const;

    // Runs the cell over the whole session and pools hidden states with
    // attention (query = projected final hidden state). Weights, when
    // requested, are the softmax attention weights.
    std::vector<double> encode_session(std::span<const Interaction> session,
                                       std::vector<double>* attention_weights = nullptr) const;

    double score(std::span<const double> pooled, ItemId item) const;

    PreferenceSet short_term_preferences(UserId user, std::span<const Interaction> session,
                                         std::span<const ItemId> catalog) const;

    // Mean pairwise-ranking loss over the session's next-item steps with the
    // given per-step negatives (|negatives| = session length - 1). The
    // gradient variant accumulates into `grads`, which must match shapes.
    double session_loss(std::span<const Interaction> session,
                        std::span<const ItemId> negatives) const;
    double session_loss_and_grad(std::span<const Interaction> session,
                                 std::span<const ItemId> negatives, SequenceParams& grads) const;

    int dim() const { return dim_; }
    bool has_item(ItemId id) const { return item_index_.count(id) != 0; }
    std::span<const double> embedding(ItemId id) const;
    std::vector<ItemId> known_items() const;

    SequenceParams& params() { return params_; }
    const SequenceParams& params() const { return params_; }
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }

    void save(const std::filesystem::path& path, std::uint64_t seed,
              const std::string& config_hash) const;
    static SequenceModel load(const std::filesystem::path& path);

private:
    int dim_ = 0;
    SequenceParams params_;
    std::map<ItemId, int> item_index_;
    std::vector<double> embeddings_;  // row-major, item_index * dim
    std::vector<double> epoch_losses_;

    SequenceModel() = default;

    struct Trace;  // forward cache for backprop
    void forward(std::span<const Interaction> session, Trace& trace) const;
    double session_loss_impl(std::span<const Interaction> session,
                             std::span<const ItemId> negatives, SequenceParams* grads) const;
};

}  // namespace curio

#endif
