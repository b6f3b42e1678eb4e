#include "loid/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace loid {

using nlohmann::json;

LoadResult load_reviews(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_reviews: cannot open '" + path + "'");
    LoadResult res;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("load_reviews: '" + path + "' line " + std::to_string(line_no) +
                            ": " + e.what());
        }
        auto where = [&] { return "'" + path + "' line " + std::to_string(line_no); };
        if (!rec.contains("reviewText") || rec["reviewText"].is_null()) {
            ++res.skipped_missing_text;
            continue;
        }
        if (!rec.contains("reviewerID") || !rec.contains("asin") || !rec.contains("overall"))
            throw DataError("load_reviews: " + where() +
                            ": missing reviewerID, asin or overall");
        Interaction it;
        it.id = res.interactions.size();
        try {
            it.user = rec["reviewerID"].get<std::string>();
            it.item = rec["asin"].get<std::string>();
            it.rating = rec["overall"].get<double>();
            it.text = rec["reviewText"].get<std::string>();
        } catch (const json::exception& e) {
            throw DataError("load_reviews: " + where() + ": " + e.what());
        }
        if (it.user.empty() || it.item.empty())
            throw DataError("load_reviews: " + where() + ": empty reviewerID or asin");
        if (!(it.rating >= 1.0 && it.rating <= 5.0))
            throw DataError("load_reviews: " + where() + ": rating " +
                            std::to_string(it.rating) + " outside [1,5]");
        res.interactions.push_back(std::move(it));
    }
    if (res.interactions.empty())
        res.warnings.push_back("load_reviews: '" + path + "' contains no usable reviews");
    return res;
}

void save_jsonl(const std::vector<Interaction>& interactions, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_jsonl: cannot open '" + path + "' for writing");
    for (const auto& it : interactions) {
        json rec;
        rec["reviewerID"] = it.user;
        rec["asin"] = it.item;
        rec["overall"] = it.rating;
        rec["reviewText"] = it.text;
        out << rec.dump() << '\n';
    }
    if (!out) throw DataError("save_jsonl: write failed for '" + path + "'");
}

DataSplit split_dataset(const std::vector<Interaction>& interactions, uint64_t seed) {
    const size_t n = interactions.size();
    if (n < 10) throw DataError("split: need at least 10 interactions, got " + std::to_string(n));
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const size_t n_val = n / 10, n_test = n / 10, n_train = n - n_val - n_test;
    DataSplit s;
    s.train.reserve(n_train);
    s.val.reserve(n_val);
    s.test.reserve(n_test);
    for (size_t i = 0; i < n_train; ++i) s.train.push_back(interactions[idx[i]]);
    for (size_t i = n_train; i < n_train + n_val; ++i) s.val.push_back(interactions[idx[i]]);
    for (size_t i = n_train + n_val; i < n; ++i) s.test.push_back(interactions[idx[i]]);
    return s;
}

HistoryIndex build_history_index(const std::vector<Interaction>& train, const Vocab& vocab,
                                 size_t max_len) {
    HistoryIndex index;
    index.max_len = max_len;
    for (const auto& it : train) {
        TokenSeq seq = tokenize(it.text, vocab, max_len);
        index.by_user[it.user].emplace_back(it.id, seq);
        index.by_item[it.item].emplace_back(it.id, std::move(seq));
    }
    return index;
}

std::vector<TokenSeq> sample_history(const HistoryIndex& index, HistoryIndex::Side side,
                                     const std::string& entity, size_t k, size_t exclude_id,
                                     uint64_t seed) {
    if (k < 1) throw ConfigError("sample_history: k must be >= 1");
    std::vector<const TokenSeq*> pool;
    if (const auto* entries = index.entries(side, entity)) {
        pool.reserve(entries->size());
        for (const auto& [iid, seq] : *entries)
            if (iid != exclude_id) pool.push_back(&seq);
    }
    std::vector<TokenSeq> out;
    out.reserve(k);
    if (pool.empty()) {
        out.assign(k, placeholder_seq(index.max_len));
        return out;
    }
    Rng rng(seed);
    if (pool.size() >= k) {
        for (size_t j : rng.sample_without_replacement(pool.size(), k)) out.push_back(*pool[j]);
    } else {
        for (size_t i = 0; i < k; ++i) out.push_back(*pool[rng.uniform_int(pool.size())]);
    }
    return out;
}

namespace {

// Sentiment lexicons for the two domains; shared tokens keep their polarity
// on both sides.
void build_lexicons(const SynthSpec& spec, SynthDomain& a, SynthDomain& b) {
    const size_t half = spec.lexicon_size / 2;
    const size_t shared = size_t(std::llround(spec.shared_fraction * double(half)));
    for (size_t j = 0; j < shared; ++j) {
        a.pos_lexicon.push_back("goodshared" + std::to_string(j));
        a.neg_lexicon.push_back("badshared" + std::to_string(j));
    }
    b.pos_lexicon = a.pos_lexicon;
    b.neg_lexicon = a.neg_lexicon;
    for (size_t j = shared; j < half; ++j) {
        a.pos_lexicon.push_back("gooda" + std::to_string(j));
        a.neg_lexicon.push_back("bada" + std::to_string(j));
        b.pos_lexicon.push_back("goodb" + std::to_string(j));
        b.neg_lexicon.push_back("badb" + std::to_string(j));
    }
    for (size_t j = 0; j < spec.lexicon_size; ++j) {
        a.noise_lexicon.push_back("fillera" + std::to_string(j));
        b.noise_lexicon.push_back("fillerb" + std::to_string(j));
    }
}

void fill_domain(const SynthSpec& spec, SynthDomain& d, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> bias(spec.users), quality(spec.items);
    for (auto& v : bias) v = rng.uniform();
    for (auto& v : quality) v = rng.uniform();

    const size_t n_noise = size_t(std::llround(spec.noise_rate * double(spec.tokens_per_review)));
    d.interactions.reserve(spec.interactions);
    for (size_t n = 0; n < spec.interactions; ++n) {
        const size_t u = size_t(rng.uniform_int(spec.users));
        const size_t i = size_t(rng.uniform_int(spec.items));
        double f = 0.5 * (bias[u] + quality[i]) + rng.normal(0.0, spec.affinity_noise);
        f = std::clamp(f, 0.0, 1.0);

        std::vector<std::string> tokens;
        size_t pos_cnt = 0;
        for (size_t t = 0; t < spec.tokens_per_review; ++t) {
            if (rng.uniform() < f) {
                tokens.push_back(d.pos_lexicon[rng.uniform_int(d.pos_lexicon.size())]);
                ++pos_cnt;
            } else {
                tokens.push_back(d.neg_lexicon[rng.uniform_int(d.neg_lexicon.size())]);
            }
        }
        for (size_t t = 0; t < n_noise; ++t)
            tokens.push_back(d.noise_lexicon[rng.uniform_int(d.noise_lexicon.size())]);
        rng.shuffle(tokens);

        Interaction it;
        it.id = n;
        it.user = d.name + "_u" + std::to_string(u);
        it.item = d.name + "_i" + std::to_string(i);
        // rating is affine in the realized positive fraction, quantized to 1..5
        it.rating =
            1.0 + double(std::llround(4.0 * double(pos_cnt) / double(spec.tokens_per_review)));
        for (size_t t = 0; t < tokens.size(); ++t) {
            if (t) it.text += ' ';
            it.text += tokens[t];
        }
        d.interactions.push_back(std::move(it));
    }
}

}  // namespace

SynthPair gen_synthetic(const SynthSpec& spec) {
    spec.validate();
    SynthPair pair;
    pair.spec = spec;
    pair.a.name = "source";
    pair.b.name = "target";
    build_lexicons(spec, pair.a, pair.b);
    fill_domain(spec, pair.a, derive_seed(spec.seed, hash64_str("domain_a")));
    fill_domain(spec, pair.b, derive_seed(spec.seed, hash64_str("domain_b")));
    return pair;
}

namespace {

uint64_t domain_fingerprint(const std::vector<Interaction>& d) {
    uint64_t h = hash64_bytes(nullptr, 0);
    for (const auto& it : d) h = hash64_str(it.text, h);
    return h;
}

std::vector<double> domain_centroid(const std::vector<Interaction>& d, size_t n,
                                    const EncodeFn& enc, uint64_t seed) {
    Rng rng(seed);
    const auto picks = rng.sample_without_replacement(d.size(), n);
    std::vector<double> centroid;
    for (size_t j : picks) {
        const auto v = enc(d[j].text);
        if (centroid.empty()) centroid.assign(v.size(), 0.0);
        for (size_t t = 0; t < v.size(); ++t) centroid[t] += double(v[t]);
    }
    for (auto& c : centroid) c /= double(n);
    return centroid;
}

}  // namespace

double domain_similarity(const std::vector<Interaction>& a, const std::vector<Interaction>& b,
                         size_t n, const EncodeFn& enc, uint64_t seed) {
    if (n == 0) throw ConfigError("domain_similarity: n must be >= 1");
    if (a.size() < n || b.size() < n)
        throw DataError("domain_similarity: domains need at least " + std::to_string(n) +
                        " reviews");
    const auto ca = domain_centroid(a, n, enc, derive_seed(seed, domain_fingerprint(a)));
    const auto cb = domain_centroid(b, n, enc, derive_seed(seed, domain_fingerprint(b)));
    double dot = 0, na = 0, nb = 0;
    for (size_t t = 0; t < ca.size(); ++t) {
        dot += ca[t] * cb[t];
        na += ca[t] * ca[t];
        nb += cb[t] * cb[t];
    }
    if (na == 0.0 || nb == 0.0) throw DataError("domain_similarity: zero-norm centroid");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace loid
