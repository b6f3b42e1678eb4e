// Command-line front end: plugin pretraining, DARE merging, target training,
// seeded evaluation, domain similarity and synthetic corpus generation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "loid/config.hpp"
#include "loid/manifest.hpp"
#include "loid/pipeline.hpp"

using namespace loid;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::string data, config, out, base, adapters;
    uint64_t seed = 0;
    bool seed_set = false;
    double p = -1;
    long long k = -1;
    double lambda = -1;
    double margin = -1;
    long long rank = -1;
    bool no_cl = false;
    long long repeats = -1;
    long long n = -1;
    bool eval_parallel = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--data", f.data);
    cmd->add_option("--config", f.config);
    cmd->add_option_function<uint64_t>("--seed", [&f](uint64_t v) {
        f.seed = v;
        f.seed_set = true;
    });
    cmd->add_option("--out", f.out);
    cmd->add_option("--base", f.base);
    cmd->add_option("--adapters", f.adapters);
    cmd->add_option("--p", f.p);
    cmd->add_option("--k", f.k);
    cmd->add_option("--lambda", f.lambda);
    cmd->add_option("--margin", f.margin);
    cmd->add_option("--rank", f.rank);
    cmd->add_flag("--no-cl", f.no_cl);
    cmd->add_option("--repeats", f.repeats);
    cmd->add_option("--n", f.n);
    cmd->add_flag("--eval-parallel", f.eval_parallel);
}

AppConfig resolve_config(const CommonFlags& f) {
    AppConfig cfg = f.config.empty() ? AppConfig{} : load_config(f.config);
    if (f.seed_set) {
        cfg.train.seed = f.seed;
        cfg.synth.seed = f.seed;
    }
    if (f.p >= 0) cfg.train.p = f.p;
    if (f.k >= 0) cfg.train.k = size_t(f.k);
    if (f.lambda >= 0) cfg.train.lambda = f.lambda;
    if (f.margin >= 0) cfg.train.margin = f.margin;
    if (f.rank >= 0) cfg.train.rank = size_t(f.rank);
    if (f.no_cl) cfg.train.no_cl = true;
    if (f.repeats >= 0) cfg.train.eval_repeats = size_t(f.repeats);
    cfg.validate();
    return cfg;
}

std::vector<Interaction> load_data_or_die(const std::string& path) {
    if (path.empty()) throw ConfigError("--data is required (run with --help for usage)");
    auto res = load_reviews(path);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    if (res.skipped_missing_text > 0)
        std::cerr << "warning: skipped " << res.skipped_missing_text
                  << " records without reviewText\n";
    return std::move(res.interactions);
}

Vocab vocab_from_train_split(const std::vector<Interaction>& data, const TrainConfig& cfg) {
    const auto split = split_dataset(data, cfg.split_seed);
    std::vector<std::string> corpus;
    corpus.reserve(split.train.size());
    for (const auto& it : split.train) corpus.push_back(it.text);
    return build_vocab(corpus, cfg.min_freq);
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

RunManifest start_manifest(const std::string& command, const AppConfig& cfg,
                           const CommonFlags& f) {
    RunManifest m;
    m.command = command;
    m.config_json = config_to_json(cfg);
    m.seed = cfg.train.seed;
    if (!f.data.empty()) m.input_checksums.emplace_back(f.data, file_checksum(f.data));
    if (!f.config.empty()) m.input_checksums.emplace_back(f.config, file_checksum(f.config));
    m.git_describe = git_describe_string();
    return m;
}

void finish_manifest(RunManifest& m, const Timer& timer, const std::string& next_to) {
    m.wall_clock_sec = timer.seconds();
    write_manifest(m, next_to + ".manifest.json");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_pretrain(const CommonFlags& f) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    if (f.out.empty()) throw ConfigError("--out is required");
    const auto data = load_data_or_die(f.data);

    EncoderParams<float> base;
    Vocab vocab;
    std::string base_path = f.base;
    RunManifest manifest = start_manifest("pretrain", cfg, f);
    if (!f.base.empty()) {
        std::tie(base, vocab) = load_encoder(f.base);
        manifest.input_checksums.emplace_back(f.base, file_checksum(f.base));
    } else {
        vocab = vocab_from_train_split(data, cfg.train);
        base = init_encoder<float>(cfg.encoder, vocab.size());
        base_path = f.out + ".base";
        save_encoder(base, vocab, base_path);
        manifest.artifacts.push_back(base_path);
        manifest.artifacts.push_back(base_path + ".vocab");
    }

    const auto res = pretrain_source(data, base, vocab, cfg.train);
    save_adapter(res.adapter, f.out);
    write_train_log(res.log, f.out + ".train.csv");
    manifest.artifacts.push_back(f.out);
    manifest.artifacts.push_back(f.out + ".train.csv");
    finish_manifest(manifest, timer, f.out);

    std::cout << "adapter " << f.out << "\n";
    std::cout << "base " << base_path << "\n";
    std::cout << "best_val_mse " << fmt(res.best_val) << "\n";
    std::cout << "steps " << res.steps << "\n";
    return 0;
}

int cmd_merge(const CommonFlags& f) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    if (f.base.empty()) throw ConfigError("--base is required");
    if (f.out.empty()) throw ConfigError("--out is required");
    const double p = f.p >= 0 ? f.p : cfg.train.p;
    if (p < 0.0 || p >= 1.0) throw ConfigError("--p must be in [0,1)");

    auto [base, vocab] = load_encoder(f.base);
    RunManifest manifest = start_manifest("merge", cfg, f);
    manifest.input_checksums.emplace_back(f.base, file_checksum(f.base));

    std::vector<LoraAdapter<float>> adapters;
    std::stringstream ss(f.adapters);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        adapters.push_back(load_adapter(tok));
        manifest.input_checksums.emplace_back(tok, file_checksum(tok));
    }

    MergeSpec<float> spec;
    spec.p = float(p);
    spec.seed = f.seed_set ? f.seed : cfg.train.seed;
    for (const auto& a : adapters) spec.adapters.push_back(&a);
    const auto merged = dare_merge(base, spec);
    save_encoder(merged, vocab, f.out);
    manifest.artifacts.push_back(f.out);
    manifest.artifacts.push_back(f.out + ".vocab");
    finish_manifest(manifest, timer, f.out);

    std::cout << "merged " << f.out << "\n";
    std::cout << "n " << adapters.size() << "\n";
    std::cout << "p " << fmt(p) << "\n";
    return 0;
}

int cmd_train(const CommonFlags& f) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    if (f.base.empty()) throw ConfigError("--base is required");
    if (f.out.empty()) throw ConfigError("--out is required");
    const auto data = load_data_or_die(f.data);
    auto [merged, vocab] = load_encoder(f.base);

    RunManifest manifest = start_manifest("train", cfg, f);
    manifest.input_checksums.emplace_back(f.base, file_checksum(f.base));

    const auto res = train_target(data, merged, vocab, cfg.train);
    save_checkpoint(res.model, f.out);
    write_train_log(res.log, f.out + ".train.csv");
    manifest.artifacts.push_back(f.out);
    manifest.artifacts.push_back(f.out + ".train.csv");
    finish_manifest(manifest, timer, f.out);

    std::cout << "checkpoint " << f.out << "\n";
    std::cout << "best_val_mse " << fmt(res.best_val) << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& ckpt) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    if (f.base.empty()) throw ConfigError("--base is required");
    if (ckpt.empty()) throw ConfigError("checkpoint path is required");
    const auto data = load_data_or_die(f.data);
    auto [merged, vocab] = load_encoder(f.base);
    const auto model = load_checkpoint(ckpt, merged, data, cfg.train);

    const auto split = split_dataset(data, cfg.train.split_seed);
    const auto index = build_history_index(split.train, vocab, merged.cfg.max_len);
    const uint64_t seed = f.seed_set ? f.seed : cfg.train.seed;
    const auto res = evaluate(model, split.test, index, cfg.train.eval_repeats, seed,
                              f.eval_parallel);

    std::cout << "repeats " << cfg.train.eval_repeats << "\n";
    std::cout << "mse_raw " << fmt(res.mean_mse) << "\n";
    std::cout << "mse_clamped " << fmt(res.mean_mse_clamped) << "\n";
    for (size_t r = 0; r < res.per_repeat.size(); ++r)
        std::cout << "repeat" << r << "_mse " << fmt(res.per_repeat[r]) << "\n";

    if (!f.out.empty()) {
        write_predictions_csv(res, f.out);
        RunManifest manifest = start_manifest("eval", cfg, f);
        manifest.seed = seed;
        manifest.input_checksums.emplace_back(f.base, file_checksum(f.base));
        manifest.input_checksums.emplace_back(ckpt, file_checksum(ckpt));
        manifest.artifacts.push_back(f.out);
        finish_manifest(manifest, timer, f.out);
    }
    return 0;
}

int cmd_domain_sim(const CommonFlags& f, const std::string& path_a, const std::string& path_b) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    const size_t n = f.n >= 0 ? size_t(f.n) : 100;  // 100 sampled reviews per domain
    auto ra = load_reviews(path_a);
    auto rb = load_reviews(path_b);

    EncoderParams<float> params;
    Vocab vocab;
    if (!f.base.empty()) {
        std::tie(params, vocab) = load_encoder(f.base);
    } else {
        std::vector<std::string> corpus;
        for (const auto& it : ra.interactions) corpus.push_back(it.text);
        for (const auto& it : rb.interactions) corpus.push_back(it.text);
        vocab = build_vocab(corpus, cfg.train.min_freq);
        params = init_encoder<float>(cfg.encoder, vocab.size());
    }
    const EncodeFn enc = [&](const std::string& text) {
        return encode(tokenize(text, vocab, params.cfg.max_len), params);
    };
    const uint64_t seed = f.seed_set ? f.seed : cfg.train.seed;
    const double sim = domain_similarity(ra.interactions, rb.interactions, n, enc, seed);

    std::cout << "n " << n << "\n";
    std::cout << "similarity " << fmt(sim) << "\n";
    if (!f.out.empty()) {
        // same layout as the transfer comparison tables: similarity next to
        // the MSE columns, which downstream experiment runs fill in
        std::ofstream csv(f.out);
        if (!csv) throw DataError("cannot open '" + f.out + "' for writing");
        csv << "domain_a,domain_b,n,sim,mse,mse_delta_pct\n";
        csv << path_a << ',' << path_b << ',' << n << ',' << fmt(sim) << ",,\n";
        RunManifest manifest = start_manifest("domain-sim", cfg, f);
        manifest.seed = seed;
        manifest.input_checksums.emplace_back(path_a, file_checksum(path_a));
        manifest.input_checksums.emplace_back(path_b, file_checksum(path_b));
        manifest.artifacts.push_back(f.out);
        finish_manifest(manifest, timer, f.out);
    }
    return 0;
}

int cmd_gen_synth(const CommonFlags& f) {
    Timer timer;
    AppConfig cfg = resolve_config(f);
    if (f.out.empty()) throw ConfigError("--out directory is required");
    fs::create_directories(f.out);
    const auto pair = gen_synthetic(cfg.synth);

    const std::string src = (fs::path(f.out) / "source.jsonl").string();
    const std::string tgt = (fs::path(f.out) / "target.jsonl").string();
    save_jsonl(pair.a.interactions, src);
    save_jsonl(pair.b.interactions, tgt);

    nlohmann::json sidecar;
    sidecar["spec"] = {{"users", pair.spec.users},
                       {"items", pair.spec.items},
                       {"interactions", pair.spec.interactions},
                       {"lexicon_size", pair.spec.lexicon_size},
                       {"shared_fraction", pair.spec.shared_fraction},
                       {"noise_rate", pair.spec.noise_rate},
                       {"tokens_per_review", pair.spec.tokens_per_review},
                       {"affinity_noise", pair.spec.affinity_noise},
                       {"seed", pair.spec.seed}};
    sidecar["source"] = {{"pos_lexicon", pair.a.pos_lexicon},
                         {"neg_lexicon", pair.a.neg_lexicon},
                         {"noise_lexicon", pair.a.noise_lexicon}};
    sidecar["target"] = {{"pos_lexicon", pair.b.pos_lexicon},
                         {"neg_lexicon", pair.b.neg_lexicon},
                         {"noise_lexicon", pair.b.noise_lexicon}};
    const std::string spec_path = (fs::path(f.out) / "synth_spec.json").string();
    {
        std::ofstream out(spec_path);
        out << sidecar.dump(2) << '\n';
    }

    RunManifest manifest = start_manifest("gen-synth", cfg, f);
    manifest.seed = cfg.synth.seed;
    manifest.artifacts = {src, tgt, spec_path};
    finish_manifest(manifest, timer, (fs::path(f.out) / "run").string());

    std::cout << "source " << src << "\n";
    std::cout << "target " << tgt << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LoID: low-rank plugin pretraining, DARE merging and "
                 "content/ID-aligned rating prediction"};
    app.require_subcommand(1);

    CommonFlags pre_f, merge_f, train_f, eval_f, sim_f, synth_f;
    std::string eval_ckpt, sim_a, sim_b;

    auto* pre = app.add_subcommand("pretrain", "train a source-domain adapter");
    add_common(pre, pre_f);
    auto* merge = app.add_subcommand("merge", "DARE-merge adapters into a base encoder");
    add_common(merge, merge_f);
    auto* train = app.add_subcommand("train", "train the target model");
    add_common(train, train_f);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("checkpoint", eval_ckpt);
    add_common(eval, eval_f);
    auto* sim = app.add_subcommand("domain-sim", "cosine similarity of two domains");
    sim->add_option("domain_a", sim_a)->required();
    sim->add_option("domain_b", sim_b)->required();
    add_common(sim, sim_f);
    auto* synth = app.add_subcommand("gen-synth", "generate a synthetic domain pair");
    add_common(synth, synth_f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(pre_f);
        if (merge->parsed()) return cmd_merge(merge_f);
        if (train->parsed()) return cmd_train(train_f);
        if (eval->parsed()) return cmd_eval(eval_f, eval_ckpt);
        if (sim->parsed()) return cmd_domain_sim(sim_f, sim_a, sim_b);
        if (synth->parsed()) return cmd_gen_synth(synth_f);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
