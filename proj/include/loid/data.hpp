#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "loid/vocab.hpp"

namespace loid {

// One (user, item, rating, review) record. `id` is the record's stable index
// within its loaded dataset and is what history exclusion keys on.
struct Interaction {
    size_t id = 0;
    std::string user;
    std::string item;
    double rating = 0;  // in [1,5]
    std::string text;
};

struct LoadResult {
    std::vector<Interaction> interactions;
    size_t skipped_missing_text = 0;
    std::vector<std::string> warnings;
};

// JSON Lines with fields reviewerID, asin, overall, reviewText.
LoadResult load_reviews(const std::string& path);

void save_jsonl(const std::vector<Interaction>& interactions, const std::string& path);

struct DataSplit {
    std::vector<Interaction> train, val, test;
};

// Seeded shuffle then 8:1:1 by count: val and test get floor(N/10) each,
// the remainder goes to train.
DataSplit split_dataset(const std::vector<Interaction>& interactions, uint64_t seed);

// Tokenized training reviews grouped per entity. Built from the training
// split only; evaluation-set text never enters it.
struct HistoryIndex {
    enum class Side { User, Item };

    std::unordered_map<std::string, std::vector<std::pair<size_t, TokenSeq>>> by_user;
    std::unordered_map<std::string, std::vector<std::pair<size_t, TokenSeq>>> by_item;
    size_t max_len = 0;

    const std::vector<std::pair<size_t, TokenSeq>>* entries(Side side,
                                                            const std::string& id) const {
        const auto& m = side == Side::User ? by_user : by_item;
        auto it = m.find(id);
        return it == m.end() ? nullptr : &it->second;
    }
};

HistoryIndex build_history_index(const std::vector<Interaction>& train, const Vocab& vocab,
                                 size_t max_len);

// k contents for one entity, never including `exclude_id`. Samples without
// replacement while enough entries remain, with replacement below k, and
// falls back to [CLS][UNK] placeholders when nothing usable is left.
std::vector<TokenSeq> sample_history(const HistoryIndex& index, HistoryIndex::Side side,
                                     const std::string& entity, size_t k, size_t exclude_id,
                                     uint64_t seed);

struct SynthSpec {
    size_t users = 40;
    size_t items = 30;
    size_t interactions = 400;
    size_t lexicon_size = 40;      // sentiment tokens per domain, half positive
    double shared_fraction = 0.8;  // lexicon overlap between the two domains
    double noise_rate = 0.25;      // noise tokens per sentiment token
    size_t tokens_per_review = 8;  // sentiment tokens per review
    double affinity_noise = 0.1;
    uint64_t seed = 1;

    void validate() const {
        if (users == 0 || items == 0 || interactions == 0 || lexicon_size < 2 ||
            tokens_per_review == 0)
            throw ConfigError("synth spec: counts must be >= 1");
        if (shared_fraction < 0.0 || shared_fraction > 1.0)
            throw ConfigError("synth spec: shared_fraction must be in [0,1]");
        if (noise_rate < 0.0) throw ConfigError("synth spec: noise_rate must be >= 0");
    }
};

struct SynthDomain {
    std::string name;
    std::vector<Interaction> interactions;
    std::vector<std::string> pos_lexicon, neg_lexicon, noise_lexicon;
};

struct SynthPair {
    SynthDomain a, b;
    SynthSpec spec;
};

// Two review domains whose ratings are an affine, quantized function of each
// review's realized positive-token fraction. Users carry a positivity bias
// and items a quality score, so ratings are predictable from entity history.
SynthPair gen_synthetic(const SynthSpec& spec);

using EncodeFn = std::function<std::vector<float>(const std::string&)>;

// Cosine similarity of the two domains' mean content embeddings over n
// seeded samples per domain. Per-domain sample seeds derive from a content
// fingerprint, which makes the measure symmetric in its arguments.
double domain_similarity(const std::vector<Interaction>& a, const std::vector<Interaction>& b,
                         size_t n, const EncodeFn& enc, uint64_t seed);

}  // namespace loid
