#include "loid/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace loid {

namespace {

struct TokenizedSet {
    std::vector<TokenSeq> seqs;
    std::vector<double> ratings;
};

TokenizedSet tokenize_set(const std::vector<Interaction>& set, const Vocab& vocab,
                          size_t max_len) {
    TokenizedSet out;
    out.seqs.reserve(set.size());
    out.ratings.reserve(set.size());
    for (const auto& it : set) {
        out.seqs.push_back(tokenize(it.text, vocab, max_len));
        out.ratings.push_back(it.rating);
    }
    return out;
}

double pretrain_set_mse(const EncoderParams<float>& base, const EffWeights<float>& eff,
                        const PredictHead<float>& head, const TokenizedSet& set) {
    const size_t n = set.seqs.size();
    if (n == 0) return 0.0;
    std::vector<double> sq(n, 0.0);
#pragma omp parallel for schedule(static)
    for (size_t s = 0; s < n; ++s) {
        const auto cls = encode(set.seqs[s], base, eff);
        const double err = double(predict(head, cls)) - set.ratings[s];
        sq[s] = err * err;
    }
    double acc = 0.0;
    for (double v : sq) acc += v;
    return acc / double(n);
}

std::vector<ParamBinding> bind_adapter(LoraAdapter<float>& adapter, AdapterGrads<float>& grads) {
    std::vector<ParamBinding> out;
    for (size_t i = 0; i < adapter.entries.size(); ++i) {
        out.push_back({&adapter.entries[i].b, &grads.db[i]});
        out.push_back({&adapter.entries[i].a, &grads.da[i]});
    }
    return out;
}

void bind_head(std::vector<ParamBinding>& params, PredictHead<float>& head,
               HeadGrads<float>& grads) {
    params.push_back({&head.w1, &grads.w1});
    params.push_back({&head.b1, &grads.b1});
    params.push_back({&head.w2, &grads.w2});
    params.push_back({&head.b2, &grads.b2});
}

double clamp_rating(double v) { return std::clamp(v, 1.0, 5.0); }

// eval-mode prediction for one interaction from already-sampled histories
float predict_one(const TargetModel& model, const EffWeights<float>& eff, size_t u_row,
                  size_t i_row, const std::vector<TokenSeq>& useqs,
                  const std::vector<TokenSeq>& iseqs) {
    const size_t d = model.merged.cfg.dim;
    const size_t k = useqs.size();
    Mat<float> cu(k, d), ci(k, d);
    for (size_t j = 0; j < k; ++j) {
        const auto v = encode(useqs[j], model.merged, eff);
        std::copy(v.begin(), v.end(), cu.row(j));
    }
    for (size_t j = 0; j < k; ++j) {
        const auto v = encode(iseqs[j], model.merged, eff);
        std::copy(v.begin(), v.end(), ci.row(j));
    }
    const std::vector<float> p_u(model.ids.user.row(u_row), model.ids.user.row(u_row) + d);
    const std::vector<float> p_i(model.ids.item.row(i_row), model.ids.item.row(i_row) + d);
    const FusionParams<float>* fp = model.fusion.enabled ? &model.fusion : nullptr;
    FuseCache<float> fc_i, fc_u;
    const auto v_i = fuse_forward(p_i, cu, fp, model.cfg.residual_fusion, fc_i);
    const auto v_u = fuse_forward(p_u, ci, fp, model.cfg.residual_fusion, fc_u);
    std::vector<float> feat(2 * d);
    std::copy(v_u.begin(), v_u.end(), feat.begin());
    std::copy(v_i.begin(), v_i.end(), feat.begin() + d);
    return predict(model.head, feat);
}

}  // namespace

void entity_tables(const std::vector<Interaction>& dataset, std::vector<std::string>& user_ids,
                   std::vector<std::string>& item_ids,
                   std::unordered_map<std::string, size_t>& user_rows,
                   std::unordered_map<std::string, size_t>& item_rows) {
    user_ids.clear();
    item_ids.clear();
    user_rows.clear();
    item_rows.clear();
    for (const auto& it : dataset) {
        if (user_rows.try_emplace(it.user, user_ids.size()).second) user_ids.push_back(it.user);
        if (item_rows.try_emplace(it.item, item_ids.size()).second) item_ids.push_back(it.item);
    }
}

PretrainResult pretrain_source(const std::vector<Interaction>& dataset,
                               const EncoderParams<float>& base, const Vocab& vocab,
                               const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw DataError("pretrain_source: empty dataset");
    PretrainResult res;
    res.base_checksum_before = base.checksum();

    const DataSplit split = split_dataset(dataset, cfg.split_seed);
    const TokenizedSet train = tokenize_set(split.train, vocab, base.cfg.max_len);
    const TokenizedSet val = tokenize_set(split.val, vocab, base.cfg.max_len);
    const size_t d = base.cfg.dim;

    LoraAdapter<float> adapter =
        init_adapter<float>(base.cfg, all_attach_points(base.cfg), cfg.rank,
                            derive_seed(cfg.seed, hash64_str("adapter")));
    PredictHead<float> head =
        PredictHead<float>::init(d, d, derive_seed(cfg.seed, hash64_str("head")));

    EncGrads<float> dense;
    dense.init(base);
    AdapterGrads<float> agrads;
    agrads.init(adapter);
    HeadGrads<float> hgrads;
    hgrads.init(head);
    std::vector<ParamBinding> params = bind_adapter(adapter, agrads);
    bind_head(params, head, hgrads);
    AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.eps = cfg.adam_eps;
    adam.init(params);

    LoraAdapter<float> best_adapter = adapter;
    PredictHead<float> best_head = head;
    size_t bad_epochs = 0;
    bool stop = false;
    for (size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::vector<size_t> order(train.seqs.size());
        std::iota(order.begin(), order.end(), size_t(0));
        Rng order_rng(derive_seed(cfg.seed, hash64_str("order"), epoch));
        order_rng.shuffle(order);
        Rng plan_rng(derive_seed(cfg.seed, hash64_str("plan"), epoch));

        for (size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
            const size_t end = std::min(start + cfg.batch_size, order.size());
            PretrainPlan plan;
            for (size_t s = start; s < end; ++s)
                plan.samples.push_back(
                    {train.seqs[order[s]], train.ratings[order[s]], plan_rng.next_u64()});
            const EffWeights<float> eff = materialize(base, &adapter);
            dense.zero();
            agrads.zero();
            hgrads.zero();
            const auto losses = pretrain_batch_objective<float>(base, eff, head, plan,
                                                                float(cfg.dropout), &dense,
                                                                &hgrads);
            adapter_grads_from_dense(adapter, dense, agrads);
            adam.step(params);
            ++res.steps;
            res.log.push_back({epoch, res.steps, double(losses.l_rec), 0.0,
                               double(losses.total), 0.0, false});
            if (cfg.max_steps > 0 && res.steps >= cfg.max_steps) stop = true;
        }

        const EffWeights<float> eff = materialize(base, &adapter);
        const double train_mse = pretrain_set_mse(base, eff, head, train);
        const double val_mse = pretrain_set_mse(base, eff, head, val);
        res.train_mse_epochs.push_back(train_mse);
        res.log.push_back({epoch, res.steps, train_mse, 0.0, train_mse, val_mse, true});
        if (val_mse < res.best_val) {
            res.best_val = val_mse;
            best_adapter = adapter;
            best_head = head;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            stop = true;
        }
    }

    res.adapter = std::move(best_adapter);
    res.head = std::move(best_head);
    res.base_checksum_after = base.checksum();
    return res;
}

TargetTrainResult train_target(const std::vector<Interaction>& dataset,
                               const EncoderParams<float>& merged, const Vocab& vocab,
                               const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train_target: empty dataset");
    TargetTrainResult res;
    res.merged_checksum_before = merged.checksum();
    res.split = split_dataset(dataset, cfg.split_seed);
    res.index = build_history_index(res.split.train, vocab, merged.cfg.max_len);

    const size_t d = merged.cfg.dim;
    TargetModel model;
    model.merged = merged;
    model.cfg = cfg;
    entity_tables(dataset, model.user_ids, model.item_ids, model.user_rows, model.item_rows);
    model.ids = IdEmbeddings<float>::init(model.user_ids.size(), model.item_ids.size(), d,
                                          derive_seed(cfg.seed, hash64_str("ids")));
    model.adapter = init_adapter<float>(merged.cfg, all_attach_points(merged.cfg), cfg.rank,
                                        derive_seed(cfg.seed, hash64_str("adapter")));
    model.head = PredictHead<float>::init(2 * d, d, derive_seed(cfg.seed, hash64_str("head")));
    if (cfg.fusion_projections)
        model.fusion = FusionParams<float>::projections(d, derive_seed(cfg.seed, hash64_str("fusion")));

    TargetGrads<float> grads;
    grads.init(model);
    std::vector<ParamBinding> params = bind_adapter(model.adapter, grads.adapter);
    params.push_back({&model.ids.user, &grads.duser});
    params.push_back({&model.ids.item, &grads.ditem});
    bind_head(params, model.head, grads.head);
    if (model.fusion.enabled) {
        params.push_back({&model.fusion.pq, &grads.fusion.pq});
        params.push_back({&model.fusion.pk, &grads.fusion.pk});
        params.push_back({&model.fusion.pv, &grads.fusion.pv});
    }
    AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.eps = cfg.adam_eps;
    adam.init(params);

    const float lambda_eff = cfg.no_cl ? 0.0f : float(cfg.lambda);
    LoraAdapter<float> best_adapter = model.adapter;
    IdEmbeddings<float> best_ids = model.ids;
    PredictHead<float> best_head = model.head;
    FusionParams<float> best_fusion = model.fusion;

    size_t steps = 0, bad_epochs = 0;
    bool stop = false;
    for (size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::vector<size_t> order(res.split.train.size());
        std::iota(order.begin(), order.end(), size_t(0));
        Rng order_rng(derive_seed(cfg.seed, hash64_str("order"), epoch));
        order_rng.shuffle(order);
        Rng plan_rng(derive_seed(cfg.seed, hash64_str("plan"), epoch));

        for (size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
            const size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<const Interaction*> batch;
            for (size_t s = start; s < end; ++s) batch.push_back(&res.split.train[order[s]]);
            const BatchPlan plan = make_batch_plan(batch, model, res.index, cfg.k, plan_rng);
            const EffWeights<float> eff = materialize(model.merged, &model.adapter);
            grads.zero();
            const auto losses =
                target_batch_objective<float>(model, eff, plan, lambda_eff, float(cfg.margin),
                                              float(cfg.dropout), &grads);
            adam.step(params);
            ++steps;
            res.log.push_back({epoch, steps, double(losses.l_rec), double(losses.l_cl),
                               double(losses.total), 0.0, false});
            if (cfg.max_steps > 0 && steps >= cfg.max_steps) stop = true;
        }

        const double val_mse =
            evaluate(model, res.split.val, res.index, 1, derive_seed(cfg.seed, hash64_str("valhist")))
                .mean_mse;
        res.log.push_back({epoch, steps, 0.0, 0.0, 0.0, val_mse, true});
        if (val_mse < res.best_val) {
            res.best_val = val_mse;
            best_adapter = model.adapter;
            best_ids = model.ids;
            best_head = model.head;
            best_fusion = model.fusion;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            stop = true;
        }
    }

    model.adapter = std::move(best_adapter);
    model.ids = std::move(best_ids);
    model.head = std::move(best_head);
    model.fusion = std::move(best_fusion);
    res.model = std::move(model);
    res.merged_checksum_after = res.model.merged.checksum();
    return res;
}

EvalResult evaluate(const TargetModel& model, const std::vector<Interaction>& split,
                    const HistoryIndex& index, size_t eval_repeats, uint64_t seed,
                    bool parallel_repeats) {
    if (split.empty()) throw DataError("evaluate: empty split");
    if (eval_repeats < 1) throw ConfigError("evaluate: eval_repeats must be >= 1");
    const EffWeights<float> eff = materialize(model.merged, &model.adapter);
    const size_t k = model.cfg.k;

    EvalResult res;
    res.per_repeat.assign(eval_repeats, 0.0);
    res.per_repeat_clamped.assign(eval_repeats, 0.0);
    std::vector<std::vector<EvalRow>> rows(eval_repeats);

#pragma omp parallel for schedule(static) if (parallel_repeats)
    for (size_t r = 0; r < eval_repeats; ++r) {
        const uint64_t rep_seed = derive_seed(seed, r);
        double acc = 0.0, acc_cl = 0.0;
        rows[r].reserve(split.size());
        for (const auto& it : split) {
            const auto useqs = sample_history(index, HistoryIndex::Side::User, it.user, k, it.id,
                                              derive_seed(rep_seed, it.id, 0));
            const auto iseqs = sample_history(index, HistoryIndex::Side::Item, it.item, k, it.id,
                                              derive_seed(rep_seed, it.id, 1));
            const double pred = double(predict_one(model, eff, model.row_of_user(it.user),
                                                   model.row_of_item(it.item), useqs, iseqs));
            const double pc = clamp_rating(pred);
            const double e = pred - it.rating, ec = pc - it.rating;
            acc += e * e;
            acc_cl += ec * ec;
            rows[r].push_back({r, it.user, it.item, it.rating, pred, pc});
        }
        res.per_repeat[r] = acc / double(split.size());
        res.per_repeat_clamped[r] = acc_cl / double(split.size());
    }

    for (size_t r = 0; r < eval_repeats; ++r) {
        res.mean_mse += res.per_repeat[r];
        res.mean_mse_clamped += res.per_repeat_clamped[r];
        res.rows.insert(res.rows.end(), rows[r].begin(), rows[r].end());
    }
    res.mean_mse /= double(eval_repeats);
    res.mean_mse_clamped /= double(eval_repeats);
    return res;
}

TransferReport run_transfer_experiment(const std::vector<std::vector<Interaction>>& sources,
                                       const std::vector<Interaction>& target,
                                       const EncoderConfig& enc_cfg, const TrainConfig& cfg) {
    cfg.validate();
    // one vocabulary across domains, built from the training splits only
    std::vector<std::string> corpus;
    std::vector<DataSplit> src_splits;
    for (const auto& src : sources) {
        src_splits.push_back(split_dataset(src, cfg.split_seed));
        for (const auto& it : src_splits.back().train) corpus.push_back(it.text);
    }
    const DataSplit tgt_split = split_dataset(target, cfg.split_seed);
    for (const auto& it : tgt_split.train) corpus.push_back(it.text);
    const Vocab vocab = build_vocab(corpus, cfg.min_freq);

    const EncoderParams<float> base = init_encoder<float>(enc_cfg, vocab.size());

    std::vector<LoraAdapter<float>> adapters;
    for (size_t i = 0; i < sources.size(); ++i) {
        TrainConfig pc = cfg;
        pc.seed = derive_seed(cfg.seed, hash64_str("pretrain"), i);
        adapters.push_back(pretrain_source(sources[i], base, vocab, pc).adapter);
    }

    // every subset when few sources, otherwise baseline + singletons + all
    std::vector<std::vector<size_t>> subsets;
    const size_t n = sources.size();
    if (n <= 3) {
        for (size_t mask = 0; mask < (size_t(1) << n); ++mask) {
            std::vector<size_t> sub;
            for (size_t i = 0; i < n; ++i)
                if (mask & (size_t(1) << i)) sub.push_back(i);
            subsets.push_back(std::move(sub));
        }
    } else {
        subsets.push_back({});
        for (size_t i = 0; i < n; ++i) subsets.push_back({i});
        std::vector<size_t> all(n);
        std::iota(all.begin(), all.end(), size_t(0));
        subsets.push_back(std::move(all));
    }

    TransferReport report;
    report.vocab_size = vocab.size();
    for (const auto& sub : subsets) {
        MergeSpec<float> spec;
        spec.p = float(cfg.p);
        uint64_t mask = 0;
        for (size_t i : sub) mask |= uint64_t(1) << i;
        spec.seed = derive_seed(cfg.seed, hash64_str("merge"), mask);
        for (size_t i : sub) spec.adapters.push_back(&adapters[i]);
        const EncoderParams<float> merged = dare_merge(base, spec);

        TargetTrainResult tt = train_target(target, merged, vocab, cfg);
        const EvalResult ev = evaluate(tt.model, tt.split.test, tt.index, cfg.eval_repeats,
                                       derive_seed(cfg.seed, hash64_str("eval")));
        TransferRow row;
        row.sources = sub;
        if (sub.empty()) {
            row.label = "none";
        } else {
            for (size_t i : sub) {
                if (!row.label.empty()) row.label += '+';
                row.label += "src" + std::to_string(i);
            }
        }
        row.val_mse = tt.best_val;
        row.test_mse = ev.mean_mse;
        row.per_repeat = ev.per_repeat;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void save_checkpoint(const TargetModel& model, const std::string& path) {
    Container c;
    append_adapter_tensors(c, model.adapter);
    NamedTensor meta;
    meta.name = "ckpt.meta";
    meta.dims = {2};
    meta.data = {model.cfg.residual_fusion ? 1.0f : 0.0f, model.fusion.enabled ? 1.0f : 0.0f};
    c.tensors.push_back(std::move(meta));
    c.tensors.push_back(to_tensor("head.w1", model.head.w1));
    c.tensors.push_back(to_tensor("head.b1", model.head.b1));
    c.tensors.push_back(to_tensor("head.w2", model.head.w2));
    c.tensors.push_back(to_tensor("head.b2", model.head.b2));
    c.tensors.push_back(to_tensor("ids.user", model.ids.user));
    c.tensors.push_back(to_tensor("ids.item", model.ids.item));
    if (model.fusion.enabled) {
        c.tensors.push_back(to_tensor("head.fusion.pq", model.fusion.pq));
        c.tensors.push_back(to_tensor("head.fusion.pk", model.fusion.pk));
        c.tensors.push_back(to_tensor("head.fusion.pv", model.fusion.pv));
    }
    write_container(path, c);
}

TargetModel load_checkpoint(const std::string& path, const EncoderParams<float>& merged,
                            const std::vector<Interaction>& dataset, const TrainConfig& cfg) {
    const Container c = read_container(path);
    TargetModel model;
    model.merged = merged;
    model.cfg = cfg;
    model.adapter = adapter_from_container(c, path, "target");
    const auto& meta = c.require("ckpt.meta");
    if (meta.data.size() != 2) throw DataError("'" + path + "': bad ckpt.meta");
    model.cfg.residual_fusion = meta.data[0] != 0.0f;
    const bool fusion = meta.data[1] != 0.0f;
    model.head.w1 = to_mat(c.require("head.w1"));
    model.head.b1 = to_mat(c.require("head.b1"));
    model.head.w2 = to_mat(c.require("head.w2"));
    model.head.b2 = to_mat(c.require("head.b2"));
    model.ids.user = to_mat(c.require("ids.user"));
    model.ids.item = to_mat(c.require("ids.item"));
    if (fusion) {
        model.fusion.enabled = true;
        model.fusion.pq = to_mat(c.require("head.fusion.pq"));
        model.fusion.pk = to_mat(c.require("head.fusion.pk"));
        model.fusion.pv = to_mat(c.require("head.fusion.pv"));
    }
    entity_tables(dataset, model.user_ids, model.item_ids, model.user_rows, model.item_rows);
    if (model.ids.user.rows != model.user_ids.size() ||
        model.ids.item.rows != model.item_ids.size())
        throw DataError("'" + path + "': ID tables disagree with the dataset's entity universe");
    if (model.head.w1.cols != 2 * merged.cfg.dim)
        throw DataError("'" + path + "': head width disagrees with the encoder dim");
    return model;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "epoch,step,l_rec,l_cl,total,val_mse\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.step << ',' << fmt_double(r.l_rec) << ',' << fmt_double(r.l_cl)
            << ',' << fmt_double(r.total) << ',';
        if (r.has_val) out << fmt_double(r.val_mse);
        out << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

void write_predictions_csv(const EvalResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "repeat,user,item,rating,pred_raw,pred_clamped\n";
    for (const auto& r : result.rows) {
        out << r.repeat << ',' << r.user << ',' << r.item << ',' << fmt_double(r.rating) << ','
            << fmt_double(r.pred_raw) << ',' << fmt_double(r.pred_clamped) << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace loid
