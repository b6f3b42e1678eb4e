#include "loid/config.hpp"

#include <fstream>

#include <json.hpp>

namespace loid {

using nlohmann::json;

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config field '") + key + "': " + e.what());
        }
    }
}

void read_encoder(const json& j, EncoderConfig& e) {
    read_field(j, "dim", e.dim);
    read_field(j, "layers", e.layers);
    read_field(j, "heads", e.heads);
    read_field(j, "ffn_dim", e.ffn_dim);
    read_field(j, "max_len", e.max_len);
    read_field(j, "seed", e.seed);
}

void read_train(const json& j, TrainConfig& t) {
    read_field(j, "lambda", t.lambda);
    read_field(j, "margin", t.margin);
    read_field(j, "k", t.k);
    read_field(j, "rank", t.rank);
    read_field(j, "p", t.p);
    read_field(j, "lr", t.lr);
    read_field(j, "batch_size", t.batch_size);
    read_field(j, "epochs", t.epochs);
    read_field(j, "seed", t.seed);
    read_field(j, "dropout", t.dropout);
    read_field(j, "no_cl", t.no_cl);
    read_field(j, "eval_repeats", t.eval_repeats);
    read_field(j, "split_seed", t.split_seed);
    read_field(j, "patience", t.patience);
    read_field(j, "max_steps", t.max_steps);
    read_field(j, "min_freq", t.min_freq);
    read_field(j, "fusion_projections", t.fusion_projections);
    read_field(j, "residual_fusion", t.residual_fusion);
}

void read_synth(const json& j, SynthSpec& s) {
    read_field(j, "users", s.users);
    read_field(j, "items", s.items);
    read_field(j, "interactions", s.interactions);
    read_field(j, "lexicon_size", s.lexicon_size);
    read_field(j, "shared_fraction", s.shared_fraction);
    read_field(j, "noise_rate", s.noise_rate);
    read_field(j, "tokens_per_review", s.tokens_per_review);
    read_field(j, "affinity_noise", s.affinity_noise);
    read_field(j, "seed", s.seed);
}

}  // namespace

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    AppConfig cfg;
    read_field(j, "profile", cfg.profile);
    if (cfg.profile == "paper") {
        cfg.train = TrainConfig::paper();
    } else if (cfg.profile != "desk") {
        throw ConfigError("config: unknown profile '" + cfg.profile + "'");
    }
    if (j.contains("encoder")) read_encoder(j.at("encoder"), cfg.encoder);
    if (j.contains("train")) read_train(j.at("train"), cfg.train);
    if (j.contains("synth")) read_synth(j.at("synth"), cfg.synth);
    cfg.validate();
    return cfg;
}

std::string config_to_json(const AppConfig& cfg) {
    json j;
    j["profile"] = cfg.profile;
    j["encoder"] = {{"dim", cfg.encoder.dim},     {"layers", cfg.encoder.layers},
                    {"heads", cfg.encoder.heads}, {"ffn_dim", cfg.encoder.ffn_dim},
                    {"max_len", cfg.encoder.max_len}, {"seed", cfg.encoder.seed}};
    j["train"] = {{"lambda", cfg.train.lambda},
                  {"margin", cfg.train.margin},
                  {"k", cfg.train.k},
                  {"rank", cfg.train.rank},
                  {"p", cfg.train.p},
                  {"lr", cfg.train.lr},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"seed", cfg.train.seed},
                  {"dropout", cfg.train.dropout},
                  {"no_cl", cfg.train.no_cl},
                  {"eval_repeats", cfg.train.eval_repeats},
                  {"split_seed", cfg.train.split_seed},
                  {"patience", cfg.train.patience},
                  {"max_steps", cfg.train.max_steps},
                  {"min_freq", cfg.train.min_freq},
                  {"fusion_projections", cfg.train.fusion_projections},
                  {"residual_fusion", cfg.train.residual_fusion}};
    j["synth"] = {{"users", cfg.synth.users},
                  {"items", cfg.synth.items},
                  {"interactions", cfg.synth.interactions},
                  {"lexicon_size", cfg.synth.lexicon_size},
                  {"shared_fraction", cfg.synth.shared_fraction},
                  {"noise_rate", cfg.synth.noise_rate},
                  {"tokens_per_review", cfg.synth.tokens_per_review},
                  {"affinity_noise", cfg.synth.affinity_noise},
                  {"seed", cfg.synth.seed}};
    return j.dump(2);
}

}  // namespace loid
