#include "curio/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "curio/errors.hpp"
#include "curio/rng.hpp"

namespace curio {

using nlohmann::json;

void GruParams::resize(int hidden, int input) {
    w_z = Matrix(hidden, input);
    w_r = Matrix(hidden, input);
    w_n = Matrix(hidden, input);
    u_z = Matrix(hidden, hidden);
    u_r = Matrix(hidden, hidden);
    u_n = Matrix(hidden, hidden);
    b_z.assign(hidden, 0.0);
    b_r.assign(hidden, 0.0);
    b_n.assign(hidden, 0.0);
}

namespace {

struct GruStep {
    std::vector<double> z, r, n, h, rh;  // rh = r ⊙ h_prev
};

GruStep gru_step(const GruParams& p, std::span<const double> x,
                 std::span<const double> h_prev) {
    const int hidden = p.w_z.rows;
    GruStep s;
    s.z.assign(hidden, 0.0);
    s.r.assign(hidden, 0.0);
    s.n.assign(hidden, 0.0);
    s.rh.resize(hidden);
    s.h.resize(hidden);
    matvec(p.w_z, x, s.z);
    matvec(p.w_r, x, s.r);
    matvec(p.w_n, x, s.n);
    for (int k = 0; k < hidden; ++k) {
        double az = s.z[k] + p.b_z[k];
        double ar = s.r[k] + p.b_r[k];
        const double* uz = p.u_z.row(k);
        const double* ur = p.u_r.row(k);
        for (int c = 0; c < hidden; ++c) {
            az += uz[c] * h_prev[c];
            ar += ur[c] * h_prev[c];
        }
        s.z[k] = sigmoid(az);
        s.r[k] = sigmoid(ar);
    }
    for (int k = 0; k < hidden; ++k) s.rh[k] = s.r[k] * h_prev[k];
    for (int k = 0; k < hidden; ++k) {
        double an = s.n[k] + p.b_n[k];
        const double* un = p.u_n.row(k);
        for (int c = 0; c < hidden; ++c) an += un[c] * s.rh[c];
        s.n[k] = std::tanh(an);
        s.h[k] = (1.0 - s.z[k]) * s.n[k] + s.z[k] * h_prev[k];
    }
    return s;
}

struct GruGrads {
    GruParams p;  // reuse the shapes for accumulation
    void resize(int hidden, int input) { p.resize(hidden, input); }
    void zero() {
        auto z = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
        z(p.w_z.data);
        z(p.w_r.data);
        z(p.w_n.data);
        z(p.u_z.data);
        z(p.u_r.data);
        z(p.u_n.data);
        z(p.b_z);
        z(p.b_r);
        z(p.b_n);
    }
};

// One backward step. dh is the incoming gradient at this position; returns
// the gradient for the previous state in the chain and accumulates dx.
void gru_backward_step(const GruParams& p, const GruStep& s, std::span<const double> x,
                       std::span<const double> h_prev, std::span<const double> dh,
                       GruGrads& g, std::span<double> dh_prev, std::span<double> dx) {
    const int hidden = p.w_z.rows;
    std::vector<double> daz(hidden), dar(hidden), dan(hidden), drh(hidden, 0.0);

    for (int k = 0; k < hidden; ++k) {
        const double dz = dh[k] * (h_prev[k] - s.n[k]);
        daz[k] = dz * s.z[k] * (1.0 - s.z[k]);
        const double dn = dh[k] * (1.0 - s.z[k]);
        dan[k] = dn * (1.0 - s.n[k] * s.n[k]);
        dh_prev[k] += dh[k] * s.z[k];
    }
    matvec_transposed_add(p.u_n, dan, drh);
    for (int k = 0; k < hidden; ++k) {
        const double dr = drh[k] * h_prev[k];
        dar[k] = dr * s.r[k] * (1.0 - s.r[k]);
        dh_prev[k] += drh[k] * s.r[k];
    }
    matvec_transposed_add(p.u_z, daz, dh_prev);
    matvec_transposed_add(p.u_r, dar, dh_prev);

    outer_add(g.p.w_z, daz, x);
    outer_add(g.p.w_r, dar, x);
    outer_add(g.p.w_n, dan, x);
    outer_add(g.p.u_z, daz, h_prev);
    outer_add(g.p.u_r, dar, h_prev);
    outer_add(g.p.u_n, dan, s.rh);
    for (int k = 0; k < hidden; ++k) {
        g.p.b_z[k] += daz[k];
        g.p.b_r[k] += dar[k];
        g.p.b_n[k] += dan[k];
    }
    matvec_transposed_add(p.w_z, daz, dx);
    matvec_transposed_add(p.w_r, dar, dx);
    matvec_transposed_add(p.w_n, dan, dx);
}

void softmax_inplace(std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

void init_uniform(std::vector<double>& v, Rng& rng, double a) {
    for (double& x : v) x = rng.uniform(-a, a);
}

}  // namespace

struct CtrModel::Trace {
    std::vector<int> item_rows;                   // history item indices
    std::vector<GruStep> fwd;                     // fwd[i] is position i
    std::vector<GruStep> bwd;                     // bwd[i] consumed position m-1-i
    std::vector<std::vector<double>> concat;      // per position, 2*hidden
    std::vector<double> weights;                  // attention weights
    std::vector<double> pooled;                   // 2*hidden
};

CtrModel::CtrModel(std::span<const UserId> users, std::span<const ItemId> items,
                   const CtrHyper& hyper, std::uint64_t seed)
    : emb_dim_(hyper.emb_dim), hidden_(hyper.hidden) {
    for (UserId u : users)
        if (!user_index_.count(u)) user_index_.emplace(u, static_cast<int>(user_index_.size()));
    for (ItemId i : items)
        if (!item_index_.count(i)) item_index_.emplace(i, static_cast<int>(item_index_.size()));

    user_emb_ = Matrix(static_cast<int>(user_index_.size()), emb_dim_);
    item_emb_ = Matrix(static_cast<int>(item_index_.size()), emb_dim_);
    fwd_.resize(hidden_, emb_dim_);
    bwd_.resize(hidden_, emb_dim_);
    const int concat = 2 * hidden_;
    const int mlp_in = concat + 2 * emb_dim_;
    mlp_w1_ = Matrix(concat, mlp_in);
    mlp_b1_.assign(concat, 0.0);
    mlp_w2_.assign(concat, 0.0);
    mlp_b2_.assign(1, 0.0);

    Rng rng(seed);
    const double ae = hyper.init_scale / std::sqrt(static_cast<double>(emb_dim_));
    const double ah = hyper.init_scale / std::sqrt(static_cast<double>(hidden_));
    init_uniform(user_emb_.data, rng, ae);
    init_uniform(item_emb_.data, rng, ae);
    for (GruParams* g : {&fwd_, &bwd_}) {
        init_uniform(g->w_z.data, rng, ah);
        init_uniform(g->w_r.data, rng, ah);
        init_uniform(g->w_n.data, rng, ah);
        init_uniform(g->u_z.data, rng, ah);
        init_uniform(g->u_r.data, rng, ah);
        init_uniform(g->u_n.data, rng, ah);
        init_uniform(g->b_z, rng, ah);
        init_uniform(g->b_r, rng, ah);
        init_uniform(g->b_n, rng, ah);
    }
    const double am = hyper.init_scale / std::sqrt(static_cast<double>(mlp_in));
    init_uniform(mlp_w1_.data, rng, am);
    init_uniform(mlp_b1_, rng, am);
    init_uniform(mlp_w2_, rng, am);
    init_uniform(mlp_b2_, rng, am);
}

std::span<const double> CtrModel::item_row_span(int idx) const {
    return {item_emb_.row(idx), static_cast<std::size_t>(emb_dim_)};
}

std::span<const double> CtrModel::user_row_span(int idx) const {
    return {user_emb_.row(idx), static_cast<std::size_t>(emb_dim_)};
}

void CtrModel::run_bigru(std::span<const ItemId> history, Trace& trace) const {
    if (history.empty()) throw ArgumentError("encode_history: empty history");
    trace.item_rows.clear();
    trace.item_rows.reserve(history.size());
    for (ItemId id : history) {
        const auto it = item_index_.find(id);
        if (it == item_index_.end())
            throw ValidationError("history item " + std::to_string(id) + " is unknown");
        trace.item_rows.push_back(it->second);
    }

    const std::size_t m = history.size();
    const std::vector<double> zero(hidden_, 0.0);
    trace.fwd.clear();
    trace.fwd.reserve(m);
    for (std::size_t t = 0; t < m; ++t) {
        const auto x = item_row_span(trace.item_rows[t]);
        trace.fwd.push_back(gru_step(fwd_, x, t == 0 ? std::span<const double>(zero)
                                                     : std::span<const double>(trace.fwd[t - 1].h)));
    }
    trace.bwd.clear();
    trace.bwd.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pos = m - 1 - i;
        const auto x = item_row_span(trace.item_rows[pos]);
        trace.bwd.push_back(gru_step(bwd_, x, i == 0 ? std::span<const double>(zero)
                                                     : std::span<const double>(trace.bwd[i - 1].h)));
    }

    trace.concat.assign(m, std::vector<double>(2 * hidden_));
    for (std::size_t pos = 0; pos < m; ++pos) {
        auto& s = trace.concat[pos];
        std::copy(trace.fwd[pos].h.begin(), trace.fwd[pos].h.end(), s.begin());
        const auto& hb = trace.bwd[m - 1 - pos].h;
        std::copy(hb.begin(), hb.end(), s.begin() + hidden_);
    }

    // Scaled dot-product attention, query = final concatenated state.
    const double scale = 1.0 / std::sqrt(static_cast<double>(2 * hidden_));
    const auto& query = trace.concat[m - 1];
    trace.weights.assign(m, 0.0);
    for (std::size_t pos = 0; pos < m; ++pos)
        trace.weights[pos] = dot(query, trace.concat[pos]) * scale;
    softmax_inplace(trace.weights);

    trace.pooled.assign(2 * hidden_, 0.0);
    for (std::size_t pos = 0; pos < m; ++pos)
        axpy(trace.weights[pos], trace.concat[pos], trace.pooled);
}

std::vector<double> CtrModel::encode_history(std::span<const ItemId> history,
                                             std::vector<double>* attention_weights) const {
    Trace trace;
    run_bigru(history, trace);
    if (attention_weights) *attention_weights = trace.weights;
    return trace.pooled;
}

std::vector<std::vector<double>> CtrModel::history_states(
    std::span<const ItemId> history) const {
    Trace trace;
    run_bigru(history, trace);
    return trace.concat;
}

struct CtrModel::Gradients {
    GruGrads fwd, bwd;
    Matrix mlp_w1;
    std::vector<double> mlp_b1, mlp_w2, mlp_b2;
    // Sparse embedding rows touched by the example.
    std::vector<std::pair<int, std::vector<double>>> item_rows;
    std::vector<std::pair<int, std::vector<double>>> user_rows;

    void resize(int hidden, int emb_dim) {
        fwd.resize(hidden, emb_dim);
        bwd.resize(hidden, emb_dim);
        const int concat = 2 * hidden;
        mlp_w1 = Matrix(concat, concat + 2 * emb_dim);
        mlp_b1.assign(concat, 0.0);
        mlp_w2.assign(concat, 0.0);
        mlp_b2.assign(1, 0.0);
    }
    void zero() {
        fwd.zero();
        bwd.zero();
        std::fill(mlp_w1.data.begin(), mlp_w1.data.end(), 0.0);
        std::fill(mlp_b1.begin(), mlp_b1.end(), 0.0);
        std::fill(mlp_w2.begin(), mlp_w2.end(), 0.0);
        std::fill(mlp_b2.begin(), mlp_b2.end(), 0.0);
        item_rows.clear();
        user_rows.clear();
    }
};

double CtrModel::loss_core(UserId user, ItemId item, std::span<const ItemId> history,
                           double label, Gradients* grads) const {
    const auto uit = user_index_.find(user);
    const auto iit = item_index_.find(item);
    const int uidx = uit == user_index_.end() ? -1 : uit->second;
    const int iidx = iit == item_index_.end() ? -1 : iit->second;
    const std::vector<double> zero_emb(emb_dim_, 0.0);
    const auto e_u =
        uidx < 0 ? std::span<const double>(zero_emb) : user_row_span(uidx);
    const auto e_i =
        iidx < 0 ? std::span<const double>(zero_emb) : item_row_span(iidx);

    Trace trace;
    run_bigru(history, trace);

    const int concat = 2 * hidden_;
    const int mlp_in = concat + 2 * emb_dim_;
    std::vector<double> z(mlp_in);
    std::copy(trace.pooled.begin(), trace.pooled.end(), z.begin());
    std::copy(e_u.begin(), e_u.end(), z.begin() + concat);
    std::copy(e_i.begin(), e_i.end(), z.begin() + concat + emb_dim_);

    std::vector<double> pre1(concat, 0.0), a1(concat);
    matvec(mlp_w1_, z, pre1);
    for (int k = 0; k < concat; ++k) {
        pre1[k] += mlp_b1_[k];
        a1[k] = pre1[k] > 0.0 ? pre1[k] : 0.0;
    }
    const double logit = dot(mlp_w2_, a1) + mlp_b2_[0];
    if (!std::isfinite(logit)) throw NumericError("usefulness: non-finite activation");
    const double loss = label * softplus(-logit) + (1.0 - label) * softplus(logit);
    if (!grads) return loss;

    const double dlogit = sigmoid(logit) - label;
    std::vector<double> da1(concat);
    for (int k = 0; k < concat; ++k) {
        grads->mlp_w2[k] += dlogit * a1[k];
        da1[k] = dlogit * mlp_w2_[k];
        if (pre1[k] <= 0.0) da1[k] = 0.0;
    }
    grads->mlp_b2[0] += dlogit;
    outer_add(grads->mlp_w1, da1, z);
    for (int k = 0; k < concat; ++k) grads->mlp_b1[k] += da1[k];
    std::vector<double> dz(mlp_in, 0.0);
    matvec_transposed_add(mlp_w1_, da1, dz);

    if (uidx >= 0)
        grads->user_rows.emplace_back(
            uidx, std::vector<double>(dz.begin() + concat, dz.begin() + concat + emb_dim_));
    if (iidx >= 0)
        grads->item_rows.emplace_back(iidx, std::vector<double>(dz.begin() + concat + emb_dim_,
                                                                dz.end()));

    // attention backward
    const std::size_t m = history.size();
    std::span<const double> d_pooled(dz.data(), concat);
    std::vector<std::vector<double>> ds(m, std::vector<double>(concat, 0.0));
    const double scale = 1.0 / std::sqrt(static_cast<double>(concat));
    const auto& query = trace.concat[m - 1];
    std::vector<double> dw(m);
    double sum_wdw = 0.0;
    for (std::size_t pos = 0; pos < m; ++pos) {
        dw[pos] = dot(d_pooled, trace.concat[pos]);
        sum_wdw += trace.weights[pos] * dw[pos];
    }
    std::vector<double> dquery(concat, 0.0);
    for (std::size_t pos = 0; pos < m; ++pos) {
        axpy(trace.weights[pos], d_pooled, ds[pos]);
        const double du = trace.weights[pos] * (dw[pos] - sum_wdw);
        axpy(du * scale, query, ds[pos]);
        axpy(du * scale, trace.concat[pos], dquery);
    }
    for (int k = 0; k < concat; ++k) ds[m - 1][k] += dquery[k];

    // split into per-direction gradients and run both chains backward
    const std::vector<double> zero(hidden_, 0.0);
    std::vector<std::vector<double>> dx(m, std::vector<double>(emb_dim_, 0.0));

    std::vector<double> carry(hidden_, 0.0), dh(hidden_), dh_prev(hidden_);
    for (std::size_t t = m; t-- > 0;) {
        for (int k = 0; k < hidden_; ++k) dh[k] = ds[t][k] + carry[k];
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        const auto h_prev =
            t == 0 ? std::span<const double>(zero) : std::span<const double>(trace.fwd[t - 1].h);
        gru_backward_step(fwd_, trace.fwd[t], item_row_span(trace.item_rows[t]), h_prev, dh,
                          grads->fwd, dh_prev, dx[t]);
        carry = dh_prev;
    }
    std::fill(carry.begin(), carry.end(), 0.0);
    for (std::size_t i = trace.bwd.size(); i-- > 0;) {
        const std::size_t pos = m - 1 - i;  // position consumed at chain step i
        for (int k = 0; k < hidden_; ++k) dh[k] = ds[pos][hidden_ + k] + carry[k];
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        const auto h_prev =
            i == 0 ? std::span<const double>(zero) : std::span<const double>(trace.bwd[i - 1].h);
        gru_backward_step(bwd_, trace.bwd[i], item_row_span(trace.item_rows[pos]), h_prev, dh,
                          grads->bwd, dh_prev, dx[pos]);
        carry = dh_prev;
    }

    for (std::size_t t = 0; t < m; ++t)
        grads->item_rows.emplace_back(trace.item_rows[t], std::move(dx[t]));
    return loss;
}

double CtrModel::example_loss(UserId user, ItemId item, std::span<const ItemId> history,
                              double label) const {
    return loss_core(user, item, history, label, nullptr);
}

double CtrModel::example_loss_and_grad(UserId user, ItemId item,
                                       std::span<const ItemId> history, double label,
                                       std::map<std::string, std::vector<double>>& out) const {
    Gradients g;
    g.resize(hidden_, emb_dim_);
    g.zero();
    const double loss = loss_core(user, item, history, label, &g);

    const auto scatter = [&](const char* name, const Matrix& emb,
                             const std::vector<std::pair<int, std::vector<double>>>& rows) {
        auto& dense = out[name];
        dense.assign(emb.data.size(), 0.0);
        for (const auto& [row, grad] : rows)
            for (int k = 0; k < emb.cols; ++k)
                dense[static_cast<std::size_t>(row) * emb.cols + k] += grad[k];
    };
    scatter("item_emb", item_emb_, g.item_rows);
    scatter("user_emb", user_emb_, g.user_rows);

    const auto copy_gru = [&](const char* prefix, const GruGrads& gg) {
        out[std::string(prefix) + ".w_z"] = gg.p.w_z.data;
        out[std::string(prefix) + ".w_r"] = gg.p.w_r.data;
        out[std::string(prefix) + ".w_n"] = gg.p.w_n.data;
        out[std::string(prefix) + ".u_z"] = gg.p.u_z.data;
        out[std::string(prefix) + ".u_r"] = gg.p.u_r.data;
        out[std::string(prefix) + ".u_n"] = gg.p.u_n.data;
        out[std::string(prefix) + ".b_z"] = gg.p.b_z;
        out[std::string(prefix) + ".b_r"] = gg.p.b_r;
        out[std::string(prefix) + ".b_n"] = gg.p.b_n;
    };
    copy_gru("fwd", g.fwd);
    copy_gru("bwd", g.bwd);
    out["mlp.w1"] = g.mlp_w1.data;
    out["mlp.b1"] = g.mlp_b1;
    out["mlp.w2"] = g.mlp_w2;
    out["mlp.b2"] = g.mlp_b2;
    return loss;
}

std::vector<std::pair<std::string, std::vector<double>*>> CtrModel::parameter_tensors() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    out.emplace_back("item_emb", &item_emb_.data);
    out.emplace_back("user_emb", &user_emb_.data);
    const auto add_gru = [&](const char* prefix, GruParams& g) {
        out.emplace_back(std::string(prefix) + ".w_z", &g.w_z.data);
        out.emplace_back(std::string(prefix) + ".w_r", &g.w_r.data);
        out.emplace_back(std::string(prefix) + ".w_n", &g.w_n.data);
        out.emplace_back(std::string(prefix) + ".u_z", &g.u_z.data);
        out.emplace_back(std::string(prefix) + ".u_r", &g.u_r.data);
        out.emplace_back(std::string(prefix) + ".u_n", &g.u_n.data);
        out.emplace_back(std::string(prefix) + ".b_z", &g.b_z);
        out.emplace_back(std::string(prefix) + ".b_r", &g.b_r);
        out.emplace_back(std::string(prefix) + ".b_n", &g.b_n);
    };
    add_gru("fwd", fwd_);
    add_gru("bwd", bwd_);
    out.emplace_back("mlp.w1", &mlp_w1_.data);
    out.emplace_back("mlp.b1", &mlp_b1_);
    out.emplace_back("mlp.w2", &mlp_w2_);
    out.emplace_back("mlp.b2", &mlp_b2_);
    return out;
}

// Adagrad: per-element accumulated squared gradients keep the update well
// scaled for rarely touched embedding rows and break the flat-logit plateau
// plain SGD crawls through. Touched-row sparsity is preserved.
struct CtrModel::AdagradState {
    std::map<std::string, std::vector<double>> acc;
    static constexpr double kEps = 1e-8;

    std::vector<double>& slot(const std::string& name, std::size_t size) {
        auto& v = acc[name];
        if (v.size() != size) v.assign(size, 0.0);
        return v;
    }
};

void CtrModel::apply_gradients(const Gradients& g, double lr, AdagradState& state) {
    const auto step = [&](const std::string& name, std::vector<double>& param,
                          const std::vector<double>& grad) {
        auto& acc = state.slot(name, param.size());
        for (std::size_t k = 0; k < param.size(); ++k) {
            acc[k] += grad[k] * grad[k];
            param[k] -= lr * grad[k] / (std::sqrt(acc[k]) + AdagradState::kEps);
        }
    };
    const auto step_gru = [&](const char* prefix, GruParams& p, const GruGrads& gg) {
        const std::string pre(prefix);
        step(pre + ".w_z", p.w_z.data, gg.p.w_z.data);
        step(pre + ".w_r", p.w_r.data, gg.p.w_r.data);
        step(pre + ".w_n", p.w_n.data, gg.p.w_n.data);
        step(pre + ".u_z", p.u_z.data, gg.p.u_z.data);
        step(pre + ".u_r", p.u_r.data, gg.p.u_r.data);
        step(pre + ".u_n", p.u_n.data, gg.p.u_n.data);
        step(pre + ".b_z", p.b_z, gg.p.b_z);
        step(pre + ".b_r", p.b_r, gg.p.b_r);
        step(pre + ".b_n", p.b_n, gg.p.b_n);
    };
    step_gru("fwd", fwd_, g.fwd);
    step_gru("bwd", bwd_, g.bwd);
    step("mlp.w1", mlp_w1_.data, g.mlp_w1.data);
    step("mlp.b1", mlp_b1_, g.mlp_b1);
    step("mlp.w2", mlp_w2_, g.mlp_w2);
    step("mlp.b2", mlp_b2_, g.mlp_b2);

    auto& user_acc = state.slot("user_emb", user_emb_.data.size());
    for (const auto& [row, grad] : g.user_rows) {
        double* p = user_emb_.row(row);
        double* a = user_acc.data() + static_cast<std::size_t>(row) * emb_dim_;
        for (int k = 0; k < emb_dim_; ++k) {
            a[k] += grad[k] * grad[k];
            p[k] -= lr * grad[k] / (std::sqrt(a[k]) + AdagradState::kEps);
        }
    }
    auto& item_acc = state.slot("item_emb", item_emb_.data.size());
    for (const auto& [row, grad] : g.item_rows) {
        double* p = item_emb_.row(row);
        double* a = item_acc.data() + static_cast<std::size_t>(row) * emb_dim_;
        for (int k = 0; k < emb_dim_; ++k) {
            a[k] += grad[k] * grad[k];
            p[k] -= lr * grad[k] / (std::sqrt(a[k]) + AdagradState::kEps);
        }
    }
}

CtrModel::Score CtrModel::usefulness(UserId user, ItemId item,
                                     std::span<const ItemId> history) const {
    return usefulness_from_encoding(encode_history(history), user, item);
}

CtrModel::Score CtrModel::usefulness_from_encoding(std::span<const double> encoding,
                                                   UserId user, ItemId item) const {
    const int concat = 2 * hidden_;
    if (encoding.size() != static_cast<std::size_t>(concat))
        throw ArgumentError("usefulness: bad encoding size");

    Score out;
    const auto uit = user_index_.find(user);
    const auto iit = item_index_.find(item);
    out.cold_user = uit == user_index_.end();
    out.cold_item = iit == item_index_.end();
    const std::vector<double> zero_emb(emb_dim_, 0.0);
    const auto e_u = out.cold_user ? std::span<const double>(zero_emb)
                                   : user_row_span(uit->second);
    const auto e_i = out.cold_item ? std::span<const double>(zero_emb)
                                   : item_row_span(iit->second);

    std::vector<double> z(concat + 2 * emb_dim_);
    std::copy(encoding.begin(), encoding.end(), z.begin());
    std::copy(e_u.begin(), e_u.end(), z.begin() + concat);
    std::copy(e_i.begin(), e_i.end(), z.begin() + concat + emb_dim_);

    std::vector<double> pre1(concat, 0.0);
    matvec(mlp_w1_, z, pre1);
    double logit = mlp_b2_[0];
    for (int k = 0; k < concat; ++k) {
        const double a = pre1[k] + mlp_b1_[k];
        if (a > 0.0) logit += mlp_w2_[k] * a;
    }
    if (!std::isfinite(logit)) throw NumericError("usefulness: non-finite activation");
    out.value = sigmoid(logit);
    return out;
}

std::vector<double> CtrModel::item_latent(ItemId item) const {
    const auto it = item_index_.find(item);
    if (it == item_index_.end())
        throw ArgumentError("item_latent: unknown item " + std::to_string(item));
    const auto row = item_row_span(it->second);
    return {row.begin(), row.end()};
}

CtrModel CtrModel::train(const std::map<UserId, std::vector<Interaction>>& train_events,
                         std::span<const ItemId> catalog, const CtrHyper& hyper,
                         std::uint64_t seed) {
    std::vector<UserId> users;
    users.reserve(train_events.size());
    for (const auto& [uid, _] : train_events) users.push_back(uid);
    CtrModel model(users, catalog, hyper, derive_seed(seed, "ctr:init"));

    // (user, position) pairs; the most recent positions with history first.
    struct Example {
        UserId user;
        int position;
    };
    std::vector<Example> examples;
    std::map<UserId, std::vector<ItemId>> seen;
    for (const auto& [uid, events] : train_events) {
        auto& s = seen[uid];
        s.reserve(events.size());
        for (const auto& e : events) s.push_back(e.item_id);
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());

        const int n = static_cast<int>(events.size());
        const int first = std::max(1, n - hyper.positions_per_user);
        for (int pos = first; pos < n; ++pos) examples.push_back(Example{uid, pos});
    }
    if (examples.empty()) throw ArgumentError("train_ctr: no usable training examples");

    std::vector<ItemId> catalog_ids(catalog.begin(), catalog.end());
    Gradients grads;
    grads.resize(hyper.hidden, hyper.emb_dim);
    AdagradState opt;

    std::vector<ItemId> history;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng order_rng(derive_seed(seed, "ctr:order:" + std::to_string(epoch)));
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t processed = 0;
        for (std::size_t idx : order) {
            const auto& ex = examples[idx];
            const auto& events = train_events.at(ex.user);
            const int begin = std::max(0, ex.position - hyper.max_history);
            history.clear();
            for (int t = begin; t < ex.position; ++t) history.push_back(events[t].item_id);

            const ItemId positive = events[ex.position].item_id;
            Rng neg_rng(derive_seed(seed, "ctr:neg:" + std::to_string(epoch) + ":" +
                                              std::to_string(ex.user) + ":" +
                                              std::to_string(ex.position)));
            const auto& user_seen = seen.at(ex.user);
            bool found = false;
            ItemId negative = 0;
            for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
                negative = catalog_ids[neg_rng.below(catalog_ids.size())];
                found = !std::binary_search(user_seen.begin(), user_seen.end(), negative);
            }
            if (!found) continue;  // user saw essentially the whole catalog

            grads.zero();
            loss_sum += model.loss_core(ex.user, positive, history, 1.0, &grads);
            model.apply_gradients(grads, hyper.lr, opt);

            grads.zero();
            loss_sum += model.loss_core(ex.user, negative, history, 0.0, &grads);
            model.apply_gradients(grads, hyper.lr, opt);
            processed += 2;
        }
        const double epoch_loss =
            processed ? loss_sum / static_cast<double>(processed) : 0.0;
        if (!std::isfinite(epoch_loss))
            throw NumericError("ctr training diverged at epoch " + std::to_string(epoch));
        model.epoch_losses_.push_back(epoch_loss);
    }
    return model;
}

void CtrModel::save(const std::filesystem::path& path, std::uint64_t seed,
                    const std::string& config_hash) const {
    json j;
    j["format"] = "curio-ctr";
    j["version"] = 1;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["emb_dim"] = emb_dim_;
    j["hidden"] = hidden_;
    json users = json::array();
    for (const auto& [id, idx] : user_index_) users.push_back(json{{"id", id}, {"row", idx}});
    j["users"] = std::move(users);
    json items = json::array();
    for (const auto& [id, idx] : item_index_) items.push_back(json{{"id", id}, {"row", idx}});
    j["items"] = std::move(items);

    auto& self = const_cast<CtrModel&>(*this);
    json tensors = json::object();
    for (auto& [name, data] : self.parameter_tensors()) tensors[name] = *data;
    j["tensors"] = std::move(tensors);
    j["epoch_losses"] = epoch_losses_;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump() << "\n";
}

CtrModel CtrModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j = json::parse(in);
    if (j.value("format", "") != "curio-ctr")
        throw ValidationError("not a ctr snapshot: " + path.string());

    CtrModel model;
    model.emb_dim_ = j.at("emb_dim").get<int>();
    model.hidden_ = j.at("hidden").get<int>();
    for (const auto& u : j.at("users"))
        model.user_index_.emplace(u.at("id").get<UserId>(), u.at("row").get<int>());
    for (const auto& i : j.at("items"))
        model.item_index_.emplace(i.at("id").get<ItemId>(), i.at("row").get<int>());

    model.user_emb_ = Matrix(static_cast<int>(model.user_index_.size()), model.emb_dim_);
    model.item_emb_ = Matrix(static_cast<int>(model.item_index_.size()), model.emb_dim_);
    model.fwd_.resize(model.hidden_, model.emb_dim_);
    model.bwd_.resize(model.hidden_, model.emb_dim_);
    const int concat = 2 * model.hidden_;
    model.mlp_w1_ = Matrix(concat, concat + 2 * model.emb_dim_);
    model.mlp_b1_.assign(concat, 0.0);
    model.mlp_w2_.assign(concat, 0.0);
    model.mlp_b2_.assign(1, 0.0);

    for (auto& [name, data] : model.parameter_tensors())
        *data = j.at("tensors").at(name).get<std::vector<double>>();
    model.epoch_losses_ = j.value("epoch_losses", std::vector<double>{});
    return model;
}

}  // namespace curio
