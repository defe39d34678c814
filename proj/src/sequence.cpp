#include "curio/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "curio/errors.hpp"
#include "curio/rng.hpp"

namespace curio {

using nlohmann::json;

namespace {

std::vector<std::pair<std::string, std::vector<double>*>> member_list(SequenceParams& p) {
    return {
        {"w_ix", &p.w_ix.data}, {"w_ih", &p.w_ih.data}, {"b_i", &p.b_i},
        {"w_fx", &p.w_fx.data}, {"w_fh", &p.w_fh.data}, {"b_f", &p.b_f},
        {"w_ox", &p.w_ox.data}, {"w_oh", &p.w_oh.data}, {"b_o", &p.b_o},
        {"w_gx", &p.w_gx.data}, {"w_gh", &p.w_gh.data}, {"b_g", &p.b_g},
        {"w_tx", &p.w_tx.data}, {"w_ts", &p.w_ts},      {"b_t", &p.b_t},
        {"w_q", &p.w_q.data},
    };
}

std::vector<std::pair<std::string, const std::vector<double>*>> member_list(
    const SequenceParams& p) {
    auto mutable_list = member_list(const_cast<SequenceParams&>(p));
    std::vector<std::pair<std::string, const std::vector<double>*>> out;
    out.reserve(mutable_list.size());
    for (auto& [name, vec] : mutable_list) out.emplace_back(name, vec);
    return out;
}

void param_axpy(SequenceParams& target, SequenceParams& delta, double alpha) {
    auto t = member_list(target);
    auto d = member_list(delta);
    for (std::size_t m = 0; m < t.size(); ++m) {
        auto& tv = *t[m].second;
        const auto& dv = *d[m].second;
        for (std::size_t k = 0; k < tv.size(); ++k) tv[k] += alpha * dv[k];
    }
}

}  // namespace

void SequenceParams::resize(int hidden, int input) {
    w_ix = Matrix(hidden, input);
    w_ih = Matrix(hidden, hidden);
    w_fx = Matrix(hidden, input);
    w_fh = Matrix(hidden, hidden);
    w_ox = Matrix(hidden, input);
    w_oh = Matrix(hidden, hidden);
    w_gx = Matrix(hidden, input);
    w_gh = Matrix(hidden, hidden);
    w_tx = Matrix(hidden, input);
    w_q = Matrix(hidden, hidden);
    b_i.assign(hidden, 0.0);
    b_f.assign(hidden, 0.0);
    b_o.assign(hidden, 0.0);
    b_g.assign(hidden, 0.0);
    w_ts.assign(hidden, 0.0);
    b_t.assign(hidden, 0.0);
}

void SequenceParams::for_each(
    const std::function<void(const std::string&, std::vector<double>&)>& fn) {
    for (auto& [name, vec] : member_list(*this)) fn(name, *vec);
}

void SequenceParams::scale(double factor) {
    for (auto& [name, vec] : member_list(*this))
        for (double& v : *vec) v *= factor;
}

double SequenceParams::squared_norm() const {
    double s = 0.0;
    for (const auto& [name, vec] : member_list(*this))
        for (double v : *vec) s += v * v;
    return s;
}

SequenceModel::SequenceModel(int dim, std::map<ItemId, std::vector<double>> embeddings,
                             std::uint64_t seed, double init_scale)
    : dim_(dim) {
    params_.resize(dim, dim);
    Rng rng(seed);
    const double a = init_scale / std::sqrt(static_cast<double>(dim));
    params_.for_each([&](const std::string&, std::vector<double>& v) {
        for (double& x : v) x = rng.uniform(-a, a);
    });
    for (auto& [id, vec] : embeddings) {
        if (vec.size() != static_cast<std::size_t>(dim))
            throw ArgumentError("embedding for item " + std::to_string(id) +
                                " has wrong dimension");
        item_index_.emplace(id, static_cast<int>(item_index_.size()));
        embeddings_.insert(embeddings_.end(), vec.begin(), vec.end());
    }
}

std::span<const double> SequenceModel::embedding(ItemId id) const {
    const auto it = item_index_.find(id);
    if (it == item_index_.end())
        throw ValidationError("item " + std::to_string(id) + " has no embedding");
    return {embeddings_.data() + static_cast<std::size_t>(it->second) * dim_,
            static_cast<std::size_t>(dim_)};
}

std::vector<ItemId> SequenceModel::known_items() const {
    std::vector<ItemId> out;
    out.reserve(item_index_.size());
    for (const auto& [id, _] : item_index_) out.push_back(id);
    return out;
}

namespace {

struct StepCache {
    std::vector<double> i, f, o, g, s, gate_t, c, tanh_c, h;
    double tau = 0.0;
};

// gate preactivation: w_x * x + w_h * h_prev + b
void gate_preact(const Matrix& wx, const Matrix& wh, const std::vector<double>& b,
                 std::span<const double> x, std::span<const double> h_prev,
                 std::vector<double>& out) {
    const int hidden = wx.rows;
    out.assign(hidden, 0.0);
    matvec(wx, x, out);
    for (int r = 0; r < hidden; ++r) {
        const double* wr = wh.row(r);
        double s = 0.0;
        for (int c = 0; c < wh.cols; ++c) s += wr[c] * h_prev[c];
        out[r] += s + b[r];
    }
}

}  // namespace

struct SequenceModel::Trace {
    std::vector<std::span<const double>> x;  // frozen embeddings per step
    std::vector<StepCache> steps;
};

void SequenceModel::forward(std::span<const Interaction> session, Trace& trace) const {
    const int hidden = dim_;
    trace.x.clear();
    trace.steps.clear();
    trace.x.reserve(session.size());
    trace.steps.reserve(session.size());

    std::vector<double> h_prev(hidden, 0.0), c_prev(hidden, 0.0);
    std::int64_t prev_ts = 0;
    bool first = true;
    for (const auto& event : session) {
        const auto x = embedding(event.item_id);
        const double delta = first ? 0.0 : static_cast<double>(event.timestamp - prev_ts);
        if (delta < 0.0)
            throw ArgumentError("negative time gap in session for item " +
                                std::to_string(event.item_id));
        prev_ts = event.timestamp;
        first = false;

        StepCache sc;
        sc.tau = std::log1p(delta);
        gate_preact(params_.w_ix, params_.w_ih, params_.b_i, x, h_prev, sc.i);
        gate_preact(params_.w_fx, params_.w_fh, params_.b_f, x, h_prev, sc.f);
        gate_preact(params_.w_ox, params_.w_oh, params_.b_o, x, h_prev, sc.o);
        gate_preact(params_.w_gx, params_.w_gh, params_.b_g, x, h_prev, sc.g);

        sc.s.resize(hidden);
        sc.gate_t.assign(hidden, 0.0);
        matvec(params_.w_tx, x, sc.gate_t);
        for (int k = 0; k < hidden; ++k) {
            sc.i[k] = sigmoid(sc.i[k]);
            sc.f[k] = sigmoid(sc.f[k]);
            sc.o[k] = sigmoid(sc.o[k]);
            sc.g[k] = std::tanh(sc.g[k]);
            sc.s[k] = sigmoid(params_.w_ts[k] * sc.tau);
            sc.gate_t[k] = sigmoid(sc.gate_t[k] + sc.s[k] + params_.b_t[k]);
        }
        sc.c.resize(hidden);
        sc.tanh_c.resize(hidden);
        sc.h.resize(hidden);
        for (int k = 0; k < hidden; ++k) {
            sc.c[k] = sc.f[k] * c_prev[k] + sc.i[k] * sc.gate_t[k] * sc.g[k];
            sc.tanh_c[k] = std::tanh(sc.c[k]);
            sc.h[k] = sc.o[k] * sc.tanh_c[k];
        }
        h_prev = sc.h;
        c_prev = sc.c;
        trace.x.push_back(x);
        trace.steps.push_back(std::move(sc));
    }
}

std::pair<std::vector<double>, std::vector<double>> SequenceModel::cell_step(
    std::span<const double> prev_hidden, std::span<const double> prev_cell,
    std::span<const double> item_embedding, double delta_t) const {
    if (delta_t < 0.0) throw ArgumentError("cell_step: delta_t must be nonnegative");
    if (prev_hidden.size() != static_cast<std::size_t>(dim_) ||
        prev_cell.size() != static_cast<std::size_t>(dim_) ||
        item_embedding.size() != static_cast<std::size_t>(dim_))
        throw ArgumentError("cell_step: dimension mismatch");

    const int hidden = dim_;
    const double tau = std::log1p(delta_t);
    std::vector<double> ai, af, ao, ag;
    gate_preact(params_.w_ix, params_.w_ih, params_.b_i, item_embedding, prev_hidden, ai);
    gate_preact(params_.w_fx, params_.w_fh, params_.b_f, item_embedding, prev_hidden, af);
    gate_preact(params_.w_ox, params_.w_oh, params_.b_o, item_embedding, prev_hidden, ao);
    gate_preact(params_.w_gx, params_.w_gh, params_.b_g, item_embedding, prev_hidden, ag);
    std::vector<double> at(hidden, 0.0);
    matvec(params_.w_tx, item_embedding, at);

    std::vector<double> cell(hidden), hid(hidden);
    for (int k = 0; k < hidden; ++k) {
        const double i = sigmoid(ai[k]);
        const double f = sigmoid(af[k]);
        const double o = sigmoid(ao[k]);
        const double g = std::tanh(ag[k]);
        const double t = sigmoid(at[k] + sigmoid(params_.w_ts[k] * tau) + params_.b_t[k]);
        cell[k] = f * prev_cell[k] + i * t * g;
        hid[k] = o * std::tanh(cell[k]);
    }
    return {std::move(hid), std::move(cell)};
}

namespace {

// softmax over scores, numerically stabilized
void softmax_inplace(std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

}  // namespace

std::vector<double> SequenceModel::encode_session(std::span<const Interaction> session,
                                                  std::vector<double>* attention_weights) const {
    if (session.empty()) throw ArgumentError("encode_session: empty session");
    Trace trace;
    forward(session, trace);

    const int hidden = dim_;
    const std::size_t last = trace.steps.size() - 1;
    std::vector<double> query(hidden, 0.0);
    matvec(params_.w_q, trace.steps[last].h, query);

    std::vector<double> scores(trace.steps.size());
    for (std::size_t j = 0; j < trace.steps.size(); ++j)
        scores[j] = dot(query, trace.steps[j].h);
    softmax_inplace(scores);

    std::vector<double> pooled(hidden, 0.0);
    for (std::size_t j = 0; j < trace.steps.size(); ++j)
        axpy(scores[j], trace.steps[j].h, pooled);
    if (attention_weights) *attention_weights = scores;
    return pooled;
}

double SequenceModel::score(std::span<const double> pooled, ItemId item) const {
    return dot(pooled, embedding(item));
}

PreferenceSet SequenceModel::short_term_preferences(UserId user,
                                                    std::span<const Interaction> session,
                                                    std::span<const ItemId> catalog) const {
    if (session.empty()) throw ArgumentError("short_term_preferences: empty session");
    if (catalog.size() < static_cast<std::size_t>(kPreferenceSetSize))
        throw ArgumentError("short_term_preferences: catalog smaller than " +
                            std::to_string(kPreferenceSetSize) + " items");

    const auto pooled = encode_session(session);
    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(catalog.size());
    for (ItemId id : catalog) scored.emplace_back(score(pooled, id), id);
    std::partial_sort(scored.begin(), scored.begin() + kPreferenceSetSize, scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });

    PreferenceSet set;
    set.user_id = user;
    set.kind = PreferenceKind::kShort;
    for (int i = 0; i < kPreferenceSetSize; ++i) {
        const ItemId id = scored[i].second;
        set.items.push_back(id);
        const auto v = embedding(id);
        set.vectors.emplace_back(v.begin(), v.end());
    }
    return set;
}

double SequenceModel::session_loss(std::span<const Interaction> session,
                                   std::span<const ItemId> negatives) const {
    return session_loss_impl(session, negatives, nullptr);
}

double SequenceModel::session_loss_and_grad(std::span<const Interaction> session,
                                            std::span<const ItemId> negatives,
                                            SequenceParams& grads) const {
    return session_loss_impl(session, negatives, &grads);
}

double SequenceModel::session_loss_impl(std::span<const Interaction> session,
                                        std::span<const ItemId> negatives,
                                        SequenceParams* grads) const {
    if (session.size() < 2)
        throw ArgumentError("session_loss: session must contain at least two events");
    const std::size_t steps = session.size() - 1;
    if (negatives.size() != steps)
        throw ArgumentError("session_loss: need one negative per next-item step");

    // Only the first |session|-1 events are consumed; the tail events are
    // prediction targets.
    Trace trace;
    forward(session.first(steps), trace);

    const int hidden = dim_;
    const double inv_steps = 1.0 / static_cast<double>(steps);
    double loss = 0.0;

    std::vector<std::vector<double>> dh_acc;
    if (grads) dh_acc.assign(steps, std::vector<double>(hidden, 0.0));

    std::vector<double> query(hidden), weights, pooled(hidden), dpooled(hidden), dq(hidden);
    for (std::size_t t = 0; t < steps; ++t) {
        // attention pool over h_0..h_t, query projected from h_t
        std::fill(query.begin(), query.end(), 0.0);
        matvec(params_.w_q, trace.steps[t].h, query);
        weights.assign(t + 1, 0.0);
        for (std::size_t j = 0; j <= t; ++j) weights[j] = dot(query, trace.steps[j].h);
        softmax_inplace(weights);
        std::fill(pooled.begin(), pooled.end(), 0.0);
        for (std::size_t j = 0; j <= t; ++j) axpy(weights[j], trace.steps[j].h, pooled);

        const auto e_pos = embedding(session[t + 1].item_id);
        const auto e_neg = embedding(negatives[t]);
        const double margin = dot(pooled, e_pos) - dot(pooled, e_neg);
        loss += softplus(-margin) * inv_steps;

        if (!grads) continue;

        // d loss / d margin = -sigmoid(-margin)
        const double gm = -sigmoid(-margin) * inv_steps;
        for (int k = 0; k < hidden; ++k) dpooled[k] = gm * (e_pos[k] - e_neg[k]);

        // softmax attention backward
        double sum_wdw = 0.0;
        std::vector<double> dw(t + 1);
        for (std::size_t j = 0; j <= t; ++j) {
            dw[j] = dot(dpooled, trace.steps[j].h);
            sum_wdw += weights[j] * dw[j];
        }
        std::fill(dq.begin(), dq.end(), 0.0);
        for (std::size_t j = 0; j <= t; ++j) {
            axpy(weights[j], dpooled, dh_acc[j]);  // value path
            const double du = weights[j] * (dw[j] - sum_wdw);
            axpy(du, query, dh_acc[j]);
            axpy(du, trace.steps[j].h, dq);
        }
        outer_add(grads->w_q, dq, trace.steps[t].h);
        matvec_transposed_add(params_.w_q, dq, dh_acc[t]);
    }

    if (!grads) return loss;

    // BPTT through the cell
    std::vector<double> dh(hidden), dc(hidden, 0.0), da_i(hidden), da_f(hidden), da_o(hidden),
        da_g(hidden), da_t(hidden), dh_prev(hidden, 0.0);
    const std::vector<double> zeros(hidden, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
        const StepCache& sc = trace.steps[t];
        const auto& h_prev = (t == 0) ? zeros : trace.steps[t - 1].h;
        const auto& c_prev = (t == 0) ? zeros : trace.steps[t - 1].c;

        for (int k = 0; k < hidden; ++k) dh[k] = dh_acc[t][k] + dh_prev[k];

        for (int k = 0; k < hidden; ++k) {
            const double do_ = dh[k] * sc.tanh_c[k];
            da_o[k] = do_ * sc.o[k] * (1.0 - sc.o[k]);
            const double dck = dc[k] + dh[k] * sc.o[k] * (1.0 - sc.tanh_c[k] * sc.tanh_c[k]);
            const double df = dck * c_prev[k];
            da_f[k] = df * sc.f[k] * (1.0 - sc.f[k]);
            const double di = dck * sc.gate_t[k] * sc.g[k];
            da_i[k] = di * sc.i[k] * (1.0 - sc.i[k]);
            const double dt = dck * sc.i[k] * sc.g[k];
            da_t[k] = dt * sc.gate_t[k] * (1.0 - sc.gate_t[k]);
            const double dg = dck * sc.i[k] * sc.gate_t[k];
            da_g[k] = dg * (1.0 - sc.g[k] * sc.g[k]);
            dc[k] = dck * sc.f[k];  // carry to step t-1
            grads->w_ts[k] += da_t[k] * sc.s[k] * (1.0 - sc.s[k]) * sc.tau;
            grads->b_t[k] += da_t[k];
            grads->b_i[k] += da_i[k];
            grads->b_f[k] += da_f[k];
            grads->b_o[k] += da_o[k];
            grads->b_g[k] += da_g[k];
        }
        outer_add(grads->w_ix, da_i, trace.x[t]);
        outer_add(grads->w_fx, da_f, trace.x[t]);
        outer_add(grads->w_ox, da_o, trace.x[t]);
        outer_add(grads->w_gx, da_g, trace.x[t]);
        outer_add(grads->w_tx, da_t, trace.x[t]);
        outer_add(grads->w_ih, da_i, h_prev);
        outer_add(grads->w_fh, da_f, h_prev);
        outer_add(grads->w_oh, da_o, h_prev);
        outer_add(grads->w_gh, da_g, h_prev);

        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        matvec_transposed_add(params_.w_ih, da_i, dh_prev);
        matvec_transposed_add(params_.w_fh, da_f, dh_prev);
        matvec_transposed_add(params_.w_oh, da_o, dh_prev);
        matvec_transposed_add(params_.w_gh, da_g, dh_prev);
    }
    return loss;
}

SequenceModel SequenceModel::train(const std::map<UserId, std::vector<Interaction>>& sessions,
                                   const FactorModel& factors, const SeqHyper& hyper,
                                   std::uint64_t seed) {
    std::map<ItemId, std::vector<double>> embeddings;
    for (ItemId id : factors.known_items()) {
        const auto v = factors.item_vector(id);
        embeddings.emplace(id, std::vector<double>(v.begin(), v.end()));
    }
    SequenceModel model(factors.dim(), std::move(embeddings), derive_seed(seed, "seq:init"),
                        hyper.init_scale);

    // Fail fast on unembeddable session items, naming the offender.
    for (const auto& [uid, session] : sessions)
        for (const auto& e : session)
            if (!model.has_item(e.item_id))
                throw ValidationError("session item " + std::to_string(e.item_id) +
                                      " has no embedding");

    const auto items = model.known_items();
    std::vector<UserId> users;
    users.reserve(sessions.size());
    for (const auto& [uid, _] : sessions) users.push_back(uid);

    SequenceParams grads;
    grads.resize(model.dim_, model.dim_);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng order_rng(derive_seed(seed, "seq:order:" + std::to_string(epoch)));
        std::vector<UserId> order = users;
        order_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t step_count = 0;
        for (UserId uid : order) {
            const auto& session = sessions.at(uid);
            if (session.size() < 2) continue;  // no next item to predict
            const std::size_t steps = session.size() - 1;

            Rng neg_rng(derive_seed(seed, "seq:neg:" + std::to_string(epoch) + ":" +
                                              std::to_string(uid)));
            std::vector<ItemId> negatives(steps);
            for (std::size_t t = 0; t < steps; ++t) {
                ItemId neg;
                do {
                    neg = items[neg_rng.below(items.size())];
                } while (neg == session[t + 1].item_id && items.size() > 1);
                negatives[t] = neg;
            }

            grads.for_each([](const std::string&, std::vector<double>& v) {
                std::fill(v.begin(), v.end(), 0.0);
            });
            const double loss = model.session_loss_and_grad(session, negatives, grads);
            loss_sum += loss * static_cast<double>(steps);
            step_count += steps;

            const double gn = std::sqrt(grads.squared_norm());
            if (gn > hyper.clip_norm && gn > 0.0) grads.scale(hyper.clip_norm / gn);
            param_axpy(model.params_, grads, -hyper.lr);
        }
        const double epoch_loss =
            step_count ? loss_sum / static_cast<double>(step_count) : 0.0;
        if (!std::isfinite(epoch_loss))
            throw NumericError("sequence training diverged at epoch " + std::to_string(epoch));
        model.epoch_losses_.push_back(epoch_loss);
    }
    return model;
}

void SequenceModel::save(const std::filesystem::path& path, std::uint64_t seed,
                         const std::string& config_hash) const {
    json j;
    j["format"] = "curio-seq";
    j["version"] = 1;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["dim"] = dim_;
    json params = json::object();
    for (const auto& [name, vec] : member_list(params_)) params[name] = *vec;
    j["params"] = std::move(params);
    json items = json::array();
    for (const auto& [id, idx] : item_index_) {
        const double* p = embeddings_.data() + static_cast<std::size_t>(idx) * dim_;
        items.push_back(json{{"id", id}, {"vector", std::vector<double>(p, p + dim_)}});
    }
    j["embeddings"] = std::move(items);
    j["epoch_losses"] = epoch_losses_;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump() << "\n";
}

SequenceModel SequenceModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j = json::parse(in);
    if (j.value("format", "") != "curio-seq")
        throw ValidationError("not a sequence snapshot: " + path.string());

    SequenceModel model;
    model.dim_ = j.at("dim").get<int>();
    model.params_.resize(model.dim_, model.dim_);
    model.params_.for_each([&](const std::string& name, std::vector<double>& v) {
        v = j.at("params").at(name).get<std::vector<double>>();
    });
    for (const auto& item : j.at("embeddings")) {
        const ItemId id = item.at("id").get<ItemId>();
        model.item_index_.emplace(id, static_cast<int>(model.item_index_.size()));
        const auto vec = item.at("vector").get<std::vector<double>>();
        model.embeddings_.insert(model.embeddings_.end(), vec.begin(), vec.end());
    }
    model.epoch_losses_ = j.value("epoch_losses", std::vector<double>{});
    return model;
}

}  // namespace curio
