#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "loid/adapters.hpp"
#include "loid/data.hpp"
#include "loid/heads.hpp"
#include "loid/serialize.hpp"

namespace loid {

struct TrainConfig {
    double lambda = 0.3;   // contrastive weight
    double margin = 1.0;   // triplet margin
    size_t k = 3;          // history contents per entity
    size_t rank = 8;       // adapter rank
    double p = 0.9;        // DARE drop probability
    double lr = 1e-3;
    size_t batch_size = 16;
    size_t epochs = 30;
    uint64_t seed = 7;
    double dropout = 0.0;
    bool no_cl = false;
    size_t eval_repeats = 5;

    uint64_t split_seed = 13;
    size_t patience = 5;
    size_t max_steps = 0;  // 0 = no cap
    size_t min_freq = 1;
    bool fusion_projections = false;
    bool residual_fusion = true;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("config: lambda must be in [0,1]");
        if (margin <= 0.0) throw ConfigError("config: margin must be > 0");
        if (k < 1) throw ConfigError("config: k must be >= 1");
        if (rank < 1) throw ConfigError("config: rank must be >= 1");
        if (p < 0.0 || p >= 1.0) throw ConfigError("config: p must be in [0,1)");
        if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (eval_repeats < 1) throw ConfigError("config: eval_repeats must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0,1)");
    }

    static TrainConfig desk() { return TrainConfig{}; }

    // hyperparameters as published: lr 1e-5, batch 4, dropout 0.5, r from the
    // low end of the 16..48 grid
    static TrainConfig paper() {
        TrainConfig c;
        c.lr = 1e-5;
        c.batch_size = 4;
        c.dropout = 0.5;
        c.rank = 16;
        return c;
    }
};

struct ParamBinding {
    Mat<float>* value;
    const Mat<float>* grad;
};

struct AdamState {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    size_t t = 0;
    std::vector<Mat<float>> m, v;

    void init(const std::vector<ParamBinding>& params) {
        t = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.value->rows, p.value->cols);
            v.emplace_back(p.value->rows, p.value->cols);
        }
    }

    void step(const std::vector<ParamBinding>& params) {
        ++t;
        const float bc1 = 1.0f - float(std::pow(beta1, double(t)));
        const float bc2 = 1.0f - float(std::pow(beta2, double(t)));
        const float b1 = float(beta1), b2 = float(beta2);
        const float flr = float(lr), feps = float(eps);
        for (size_t i = 0; i < params.size(); ++i) {
            float* w = params[i].value->data.data();
            const float* g = params[i].grad->data.data();
            float* mi = m[i].data.data();
            float* vi = v[i].data.data();
            const size_t n = params[i].value->size();
            for (size_t j = 0; j < n; ++j) {
                mi[j] = b1 * mi[j] + (1.0f - b1) * g[j];
                vi[j] = b2 * vi[j] + (1.0f - b2) * g[j] * g[j];
                w[j] -= flr * (mi[j] / bc1) / (std::sqrt(vi[j] / bc2) + feps);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// source pretraining objective

struct PretrainPlanSample {
    TokenSeq seq;
    double rating = 0;
    uint64_t dropout_seed = 0;
};

struct PretrainPlan {
    std::vector<PretrainPlanSample> samples;
};

template <class T>
struct StepLosses {
    T l_rec = T(0), l_cl = T(0), total = T(0);
};

// Batch MSE of head(encode(t)) against ratings; gradients for the adapter
// (via dense attachment-matrix grads) and the head. Samples run in parallel
// into per-sample buffers and reduce in index order, so results are
// independent of thread count.
template <class T>
StepLosses<T> pretrain_batch_objective(const EncoderParams<T>& base, const EffWeights<T>& eff,
                                       const PredictHead<T>& head, const PretrainPlan& plan,
                                       T dropout, EncGrads<T>* dense_grads,
                                       HeadGrads<T>* head_grads) {
    const size_t n = plan.samples.size();
    if (n == 0) throw ConfigError("pretrain objective: empty batch");
    const bool with_grads = dense_grads != nullptr;
    const size_t d = base.cfg.dim;

    std::vector<T> sq(n, T(0));
    std::vector<EncGrads<T>> dense_buf;
    std::vector<HeadGrads<T>> head_buf;
    if (with_grads) {
        dense_buf.resize(n);
        head_buf.resize(n);
        for (auto& g : dense_buf) g.init(base);
        for (auto& g : head_buf) g.init(head);
    }

#pragma omp parallel for schedule(static)
    for (size_t s = 0; s < n; ++s) {
        const auto& ps = plan.samples[s];
        Rng drop_rng(ps.dropout_seed);
        Rng* rp = dropout > T(0) ? &drop_rng : nullptr;
        EncodeCache<T> cache;
        encode_forward(ps.seq, base, eff, cache, dropout, rp);
        HeadCache<T> hc;
        const T yhat = predict_forward(head, cache.cls(), hc, dropout, rp);
        const T err = yhat - T(ps.rating);
        sq[s] = err * err;
        if (with_grads) {
            const T dy = T(2) * err / T(n);
            std::vector<T> dcls(d, T(0));
            predict_backward(head, hc, dy, head_buf[s], dcls);
            encode_backward(base, eff, cache, dcls, dense_buf[s]);
        }
    }

    StepLosses<T> losses;
    for (size_t s = 0; s < n; ++s) losses.l_rec += sq[s];
    losses.l_rec /= T(n);
    losses.total = losses.l_rec;
    if (with_grads) {
        for (size_t s = 0; s < n; ++s) {
            dense_grads->add(dense_buf[s]);
            head_grads->add(head_buf[s]);
        }
    }
    return losses;
}

// ---------------------------------------------------------------------------
// target model and objective

template <class T>
struct TargetModelT {
    EncoderParams<T> merged;  // frozen
    LoraAdapter<T> adapter;
    IdEmbeddings<T> ids;
    PredictHead<T> head;  // input 2d
    FusionParams<T> fusion;
    TrainConfig cfg;

    std::vector<std::string> user_ids, item_ids;  // row -> entity
    std::unordered_map<std::string, size_t> user_rows, item_rows;

    size_t row_of_user(const std::string& u) const {
        auto it = user_rows.find(u);
        if (it == user_rows.end()) throw DataError("unknown user id '" + u + "'");
        return it->second;
    }
    size_t row_of_item(const std::string& i) const {
        auto it = item_rows.find(i);
        if (it == item_rows.end()) throw DataError("unknown item id '" + i + "'");
        return it->second;
    }
};

using TargetModel = TargetModelT<float>;

struct TargetPlanSample {
    size_t u_row = 0, i_row = 0;
    double rating = 0;
    std::vector<TokenSeq> user_seqs, item_seqs;  // k each
    ptrdiff_t neg_u_row = -1, neg_i_row = -1;    // -1: no in-batch negative
    uint64_t dropout_seed = 0;
};

struct BatchPlan {
    std::vector<TargetPlanSample> samples;
};

// History sampling, in-batch negative selection and dropout seeds for one
// batch. All randomness comes from `rng` in a fixed order.
template <class T>
BatchPlan make_batch_plan(const std::vector<const Interaction*>& batch,
                          const TargetModelT<T>& model, const HistoryIndex& index, size_t k,
                          Rng& rng) {
    BatchPlan plan;
    plan.samples.resize(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
        const Interaction& it = *batch[s];
        auto& ps = plan.samples[s];
        ps.u_row = model.row_of_user(it.user);
        ps.i_row = model.row_of_item(it.item);
        ps.rating = it.rating;
        ps.user_seqs = sample_history(index, HistoryIndex::Side::User, it.user, k, it.id,
                                      rng.next_u64());
        ps.item_seqs = sample_history(index, HistoryIndex::Side::Item, it.item, k, it.id,
                                      rng.next_u64());

        // negatives: a uniformly chosen other in-batch interaction with a
        // different entity; skip the hinge when no such candidate exists
        std::vector<size_t> cand;
        for (size_t j = 0; j < batch.size(); ++j)
            if (j != s && batch[j]->user != it.user) cand.push_back(j);
        if (!cand.empty())
            ps.neg_u_row = ptrdiff_t(model.row_of_user(batch[cand[rng.uniform_int(cand.size())]]->user));
        cand.clear();
        for (size_t j = 0; j < batch.size(); ++j)
            if (j != s && batch[j]->item != it.item) cand.push_back(j);
        if (!cand.empty())
            ps.neg_i_row = ptrdiff_t(model.row_of_item(batch[cand[rng.uniform_int(cand.size())]]->item));
        ps.dropout_seed = rng.next_u64();
    }
    return plan;
}

template <class T>
struct TargetGrads {
    EncGrads<T> dense;
    AdapterGrads<T> adapter;
    HeadGrads<T> head;
    FusionGrads<T> fusion;
    Mat<T> duser, ditem;

    void init(const TargetModelT<T>& m) {
        dense.init(m.merged);
        adapter.init(m.adapter);
        head.init(m.head);
        if (m.fusion.enabled) fusion.init(m.merged.cfg.dim);
        duser = Mat<T>(m.ids.user.rows, m.ids.user.cols);
        ditem = Mat<T>(m.ids.item.rows, m.ids.item.cols);
    }
    void zero() {
        dense.zero();
        adapter.zero();
        head.zero();
        if (!fusion.pq.empty()) fusion.zero();
        duser.zero();
        ditem.zero();
    }
};

namespace detail {

template <class T>
struct TargetSampleGrad {
    EncGrads<T> dense;
    HeadGrads<T> head;
    FusionGrads<T> fusion;
    std::vector<std::pair<size_t, std::vector<T>>> duser_rows, ditem_rows;
};

template <class T>
void add_row_grad(std::vector<std::pair<size_t, std::vector<T>>>& rows, size_t row,
                  const std::vector<T>& g) {
    for (auto& [r, acc] : rows) {
        if (r == row) {
            for (size_t t = 0; t < g.size(); ++t) acc[t] += g[t];
            return;
        }
    }
    rows.emplace_back(row, g);
}

}  // namespace detail

// Eq-style target step: encode 2k histories through the adapted encoder, fuse
// them across sides into v_u / v_i, predict from their concatenation, and add
// the margin contrastive term. lambda == 0 skips the contrastive part.
template <class T>
StepLosses<T> target_batch_objective(const TargetModelT<T>& model, const EffWeights<T>& eff,
                                     const BatchPlan& plan, T lambda, T margin, T dropout,
                                     TargetGrads<T>* grads) {
    const size_t n = plan.samples.size();
    if (n == 0) throw ConfigError("target objective: empty batch");
    const bool with_grads = grads != nullptr;
    const size_t d = model.merged.cfg.dim;

    std::vector<T> sq(n, T(0)), cl(n, T(0));
    std::vector<detail::TargetSampleGrad<T>> buf;
    if (with_grads) {
        buf.resize(n);
        for (auto& b : buf) {
            b.dense.init(model.merged);
            b.head.init(model.head);
            if (model.fusion.enabled) b.fusion.init(d);
        }
    }

#pragma omp parallel for schedule(static)
    for (size_t s = 0; s < n; ++s) {
        const auto& ps = plan.samples[s];
        const size_t k = ps.user_seqs.size();
        Rng drop_rng(ps.dropout_seed);
        Rng* rp = dropout > T(0) ? &drop_rng : nullptr;

        std::vector<EncodeCache<T>> ucache(k), icache(k);
        Mat<T> cu(k, d), ci(k, d);
        for (size_t j = 0; j < k; ++j) {
            encode_forward(ps.user_seqs[j], model.merged, eff, ucache[j], dropout, rp);
            const auto v = ucache[j].cls();
            std::copy(v.begin(), v.end(), cu.row(j));
        }
        for (size_t j = 0; j < k; ++j) {
            encode_forward(ps.item_seqs[j], model.merged, eff, icache[j], dropout, rp);
            const auto v = icache[j].cls();
            std::copy(v.begin(), v.end(), ci.row(j));
        }

        const std::vector<T> p_u(model.ids.user.row(ps.u_row), model.ids.user.row(ps.u_row) + d);
        const std::vector<T> p_i(model.ids.item.row(ps.i_row), model.ids.item.row(ps.i_row) + d);
        const FusionParams<T>* fp = model.fusion.enabled ? &model.fusion : nullptr;

        // the item representation reads the user's contents and vice versa
        FuseCache<T> fc_i, fc_u;
        const auto v_i = fuse_forward(p_i, cu, fp, model.cfg.residual_fusion, fc_i);
        const auto v_u = fuse_forward(p_u, ci, fp, model.cfg.residual_fusion, fc_u);

        std::vector<T> feat(2 * d);
        std::copy(v_u.begin(), v_u.end(), feat.begin());
        std::copy(v_i.begin(), v_i.end(), feat.begin() + d);
        HeadCache<T> hc;
        const T yhat = predict_forward(model.head, feat, hc, dropout, rp);
        const T err = yhat - T(ps.rating);
        sq[s] = err * err;

        std::vector<T> dv_u(d, T(0)), dv_i(d, T(0));
        std::vector<T> dpu_own(d, T(0)), dpi_own(d, T(0));
        std::vector<T> dpu_neg(d, T(0)), dpi_neg(d, T(0));

        if (lambda > T(0)) {
            const std::vector<T> pu_neg =
                ps.neg_u_row >= 0 ? std::vector<T>(model.ids.user.row(size_t(ps.neg_u_row)),
                                                   model.ids.user.row(size_t(ps.neg_u_row)) + d)
                                  : std::vector<T>();
            const std::vector<T> pi_neg =
                ps.neg_i_row >= 0 ? std::vector<T>(model.ids.item.row(size_t(ps.neg_i_row)),
                                                   model.ids.item.row(size_t(ps.neg_i_row)) + d)
                                  : std::vector<T>();
            const T coeff = with_grads ? lambda / T(n) : T(0);
            if (ps.neg_u_row >= 0)
                cl[s] += hinge_term_backward(v_i, p_u, pu_neg, margin, coeff, dv_i, dpu_own,
                                             dpu_neg);
            if (ps.neg_i_row >= 0)
                cl[s] += hinge_term_backward(v_u, p_i, pi_neg, margin, coeff, dv_u, dpi_own,
                                             dpi_neg);
        }

        if (with_grads) {
            auto& b = buf[s];
            const T dy = T(2) * err / T(n);
            std::vector<T> dfeat(2 * d, T(0));
            predict_backward(model.head, hc, dy, b.head, dfeat);
            for (size_t t = 0; t < d; ++t) {
                dv_u[t] += dfeat[t];
                dv_i[t] += dfeat[d + t];
            }

            Mat<T> dcu(k, d), dci(k, d);
            std::vector<T> dp_i(d, T(0)), dp_u(d, T(0));
            FusionGrads<T>* fg = model.fusion.enabled ? &b.fusion : nullptr;
            fuse_backward(fp, fc_i, dv_i, dp_i, dcu, fg);
            fuse_backward(fp, fc_u, dv_u, dp_u, dci, fg);

            for (size_t t = 0; t < d; ++t) {
                dp_u[t] += dpu_own[t];
                dp_i[t] += dpi_own[t];
            }
            detail::add_row_grad(b.duser_rows, ps.u_row, dp_u);
            detail::add_row_grad(b.ditem_rows, ps.i_row, dp_i);
            if (ps.neg_u_row >= 0 && lambda > T(0))
                detail::add_row_grad(b.duser_rows, size_t(ps.neg_u_row), dpu_neg);
            if (ps.neg_i_row >= 0 && lambda > T(0))
                detail::add_row_grad(b.ditem_rows, size_t(ps.neg_i_row), dpi_neg);

            std::vector<T> dcls(d);
            for (size_t j = 0; j < k; ++j) {
                std::copy(dcu.row(j), dcu.row(j) + d, dcls.begin());
                encode_backward(model.merged, eff, ucache[j], dcls, b.dense);
                std::copy(dci.row(j), dci.row(j) + d, dcls.begin());
                encode_backward(model.merged, eff, icache[j], dcls, b.dense);
            }
        }
    }

    StepLosses<T> losses;
    for (size_t s = 0; s < n; ++s) {
        losses.l_rec += sq[s];
        losses.l_cl += cl[s];
    }
    losses.l_rec /= T(n);
    losses.l_cl /= T(n);
    losses.total = losses.l_rec + lambda * losses.l_cl;

    if (with_grads) {
        for (size_t s = 0; s < n; ++s) {
            grads->dense.add(buf[s].dense);
            grads->head.add(buf[s].head);
            if (model.fusion.enabled) grads->fusion.add(buf[s].fusion);
            for (const auto& [row, g] : buf[s].duser_rows) {
                T* dst = grads->duser.row(row);
                for (size_t t = 0; t < d; ++t) dst[t] += g[t];
            }
            for (const auto& [row, g] : buf[s].ditem_rows) {
                T* dst = grads->ditem.row(row);
                for (size_t t = 0; t < d; ++t) dst[t] += g[t];
            }
        }
        adapter_grads_from_dense(model.adapter, grads->dense, grads->adapter);
    }
    return losses;
}

// ---------------------------------------------------------------------------
// training loops (float production path, implemented in pipeline.cpp)

struct TrainLogRow {
    size_t epoch = 0, step = 0;
    double l_rec = 0, l_cl = 0, total = 0;
    double val_mse = 0;
    bool has_val = false;
};

struct PretrainResult {
    LoraAdapter<float> adapter;  // lowest-validation checkpoint
    PredictHead<float> head;
    std::vector<TrainLogRow> log;
    std::vector<double> train_mse_epochs;  // dropout-off MSE on the train split
    double best_val = std::numeric_limits<double>::infinity();
    size_t steps = 0;
    uint64_t base_checksum_before = 0, base_checksum_after = 0;
};

PretrainResult pretrain_source(const std::vector<Interaction>& dataset,
                               const EncoderParams<float>& base, const Vocab& vocab,
                               const TrainConfig& cfg);

struct TargetTrainResult {
    TargetModel model;  // lowest-validation checkpoint
    std::vector<TrainLogRow> log;
    double best_val = std::numeric_limits<double>::infinity();
    DataSplit split;
    HistoryIndex index;
    uint64_t merged_checksum_before = 0, merged_checksum_after = 0;
};

TargetTrainResult train_target(const std::vector<Interaction>& dataset,
                               const EncoderParams<float>& merged, const Vocab& vocab,
                               const TrainConfig& cfg);

struct EvalRow {
    size_t repeat = 0;
    std::string user, item;
    double rating = 0, pred_raw = 0, pred_clamped = 0;
};

struct EvalResult {
    double mean_mse = 0;  // raw predictions, the headline number
    std::vector<double> per_repeat;
    double mean_mse_clamped = 0;
    std::vector<double> per_repeat_clamped;
    std::vector<EvalRow> rows;
};

// eval_repeats passes with independently resampled histories, dropout off.
EvalResult evaluate(const TargetModel& model, const std::vector<Interaction>& split,
                    const HistoryIndex& index, size_t eval_repeats, uint64_t seed,
                    bool parallel_repeats = false);

struct TransferRow {
    std::string label;
    std::vector<size_t> sources;
    double val_mse = 0;
    double test_mse = 0;
    std::vector<double> per_repeat;
};

struct TransferReport {
    std::vector<TransferRow> rows;
    size_t vocab_size = 0;
};

// pretrain each source -> DARE-merge each adapter subset -> target training
// -> seeded evaluation; the empty subset is the no-transfer baseline.
TransferReport run_transfer_experiment(const std::vector<std::vector<Interaction>>& sources,
                                       const std::vector<Interaction>& target,
                                       const EncoderConfig& enc_cfg, const TrainConfig& cfg);

// Checkpoints reuse the adapter container with "head.*" and "ids.*" tensors
// appended. Entity row maps are rebuilt from the dataset the model was
// trained on.
void save_checkpoint(const TargetModel& model, const std::string& path);
TargetModel load_checkpoint(const std::string& path, const EncoderParams<float>& merged,
                            const std::vector<Interaction>& dataset, const TrainConfig& cfg);

void entity_tables(const std::vector<Interaction>& dataset, std::vector<std::string>& user_ids,
                   std::vector<std::string>& item_ids,
                   std::unordered_map<std::string, size_t>& user_rows,
                   std::unordered_map<std::string, size_t>& item_rows);

void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path);
void write_predictions_csv(const EvalResult& result, const std::string& path);

}  // namespace loid
