#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_set>

#include "loid/data.hpp"
#include "loid/encoder.hpp"

using namespace loid;

namespace {

std::vector<Interaction> fake_interactions(size_t n, uint64_t seed = 1) {
    Rng rng(seed);
    std::vector<Interaction> out;
    for (size_t i = 0; i < n; ++i) {
        Interaction it;
        it.id = i;
        it.user = "u" + std::to_string(rng.uniform_int(std::max<size_t>(2, n / 4)));
        it.item = "i" + std::to_string(rng.uniform_int(std::max<size_t>(2, n / 5)));
        it.rating = 1.0 + double(rng.uniform_int(5));
        it.text = "tok" + std::to_string(i % 7) + " tok" + std::to_string(i % 3);
        out.push_back(std::move(it));
    }
    return out;
}

}  // namespace

TEST_CASE("load_reviews parses the Amazon JSONL schema") {
    {
        std::ofstream out("reviews_ok.jsonl");
        out << R"({"reviewerID":"u1","asin":"i1","overall":5.0,"reviewText":"great"})" << "\n";
        out << R"({"reviewerID":"u2","asin":"i2","overall":3.0})" << "\n";  // skipped
        out << R"({"reviewerID":"u3","asin":"i3","overall":1.0,"reviewText":"bad"})" << "\n";
    }
    const auto res = load_reviews("reviews_ok.jsonl");
    REQUIRE(res.interactions.size() == 2);
    CHECK(res.interactions[0].user == "u1");
    CHECK(res.interactions[0].item == "i1");
    CHECK(res.interactions[0].rating == 5.0);
    CHECK(res.interactions[0].text == "great");
    CHECK(res.interactions[1].id == 1);
    CHECK(res.skipped_missing_text == 1);
    std::remove("reviews_ok.jsonl");
}

TEST_CASE("load_reviews rejects out-of-range ratings with the line number") {
    {
        std::ofstream out("reviews_range.jsonl");
        out << R"({"reviewerID":"u1","asin":"i1","overall":5.0,"reviewText":"x"})" << "\n";
        out << R"({"reviewerID":"u2","asin":"i2","overall":7.0,"reviewText":"y"})" << "\n";
    }
    try {
        load_reviews("reviews_range.jsonl");
        CHECK(false);
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
    }
    std::remove("reviews_range.jsonl");
}

TEST_CASE("load_reviews reports malformed JSON with the line number") {
    {
        std::ofstream out("reviews_bad.jsonl");
        out << R"({"reviewerID":"u1","asin":"i1","overall":5.0,"reviewText":"x"})" << "\n";
        out << "{not json}\n";
    }
    try {
        load_reviews("reviews_bad.jsonl");
        CHECK(false);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::remove("reviews_bad.jsonl");
}

TEST_CASE("load_reviews returns an empty list plus warning for an empty file") {
    { std::ofstream out("reviews_empty.jsonl"); }
    const auto res = load_reviews("reviews_empty.jsonl");
    CHECK(res.interactions.empty());
    CHECK(!res.warnings.empty());
    std::remove("reviews_empty.jsonl");
}

TEST_CASE("jsonl round-trip") {
    const auto data = fake_interactions(20);
    save_jsonl(data, "reviews_rt.jsonl");
    const auto back = load_reviews("reviews_rt.jsonl");
    REQUIRE(back.interactions.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        CHECK(back.interactions[i].user == data[i].user);
        CHECK(back.interactions[i].rating == data[i].rating);
        CHECK(back.interactions[i].text == data[i].text);
    }
    std::remove("reviews_rt.jsonl");
}

TEST_CASE("split_dataset is 8:1:1 with floor rounding, remainder to train") {
    {
        const auto s = split_dataset(fake_interactions(1000), 5);
        CHECK(s.train.size() == 800);
        CHECK(s.val.size() == 100);
        CHECK(s.test.size() == 100);
    }
    {
        const auto s = split_dataset(fake_interactions(13), 5);
        CHECK(s.train.size() == 11);
        CHECK(s.val.size() == 1);
        CHECK(s.test.size() == 1);
    }
    CHECK_THROWS_AS(split_dataset(fake_interactions(9), 5), DataError);
}

TEST_CASE("split_dataset partitions are seeded, disjoint and exhaustive") {
    const auto data = fake_interactions(137);
    const auto s1 = split_dataset(data, 17);
    const auto s2 = split_dataset(data, 17);
    const auto s3 = split_dataset(data, 18);

    auto ids_of = [](const std::vector<Interaction>& v) {
        std::set<size_t> out;
        for (const auto& it : v) out.insert(it.id);
        return out;
    };
    CHECK(ids_of(s1.train) == ids_of(s2.train));
    CHECK(ids_of(s1.val) == ids_of(s2.val));
    CHECK(ids_of(s1.train) != ids_of(s3.train));

    std::set<size_t> all;
    size_t total = 0;
    for (const auto* part : {&s1.train, &s1.val, &s1.test}) {
        total += part->size();
        for (const auto& it : *part) all.insert(it.id);
    }
    CHECK(total == data.size());
    CHECK(all.size() == data.size());
}

TEST_CASE("history index lists exactly the training reviews of each entity") {
    std::vector<Interaction> train;
    for (size_t i = 0; i < 5; ++i) {
        Interaction it;
        it.id = i;
        it.user = i < 3 ? "alice" : "bob";
        it.item = "thing" + std::to_string(i % 2);
        it.rating = 4;
        it.text = "review " + std::to_string(i);
        train.push_back(it);
    }
    const auto vocab = build_vocab({"review 0 1 2 3 4"}, 1);
    const auto index = build_history_index(train, vocab, 8);

    REQUIRE(index.entries(HistoryIndex::Side::User, "alice") != nullptr);
    CHECK(index.entries(HistoryIndex::Side::User, "alice")->size() == 3);
    CHECK(index.entries(HistoryIndex::Side::User, "bob")->size() == 2);
    CHECK(index.entries(HistoryIndex::Side::User, "carol") == nullptr);

    size_t total = 0;
    for (const auto& [id, v] : index.by_user) total += v.size();
    for (const auto& [id, v] : index.by_item) total += v.size();
    CHECK(total == 2 * train.size());
}

TEST_CASE("sample_history honors exclusion, degeneracy and placeholders") {
    std::vector<Interaction> train;
    for (size_t i = 0; i < 4; ++i) {
        Interaction it;
        it.id = 100 + i;
        it.user = "solo";
        it.item = "it" + std::to_string(i);
        it.rating = 3;
        it.text = "word" + std::to_string(i);
        train.push_back(it);
    }
    const auto vocab = build_vocab({"word0 word1 word2 word3"}, 1);
    const auto index = build_history_index(train, vocab, 6);

    SUBCASE("k remaining entries are returned exactly once each") {
        const auto seqs =
            sample_history(index, HistoryIndex::Side::User, "solo", 3, 103, 9);
        REQUIRE(seqs.size() == 3);
        std::set<std::vector<int32_t>> got;
        for (const auto& s : seqs) got.insert(s.ids);
        CHECK(got.size() == 3);  // no duplicates: sampled without replacement
    }

    SUBCASE("entity whose only entry is excluded yields placeholders") {
        std::vector<Interaction> one = {train[0]};
        const auto idx1 = build_history_index(one, vocab, 6);
        const auto seqs =
            sample_history(idx1, HistoryIndex::Side::User, "solo", 2, train[0].id, 9);
        REQUIRE(seqs.size() == 2);
        const auto ph = placeholder_seq(6);
        CHECK(seqs[0].ids == ph.ids);
        CHECK(seqs[1].ids == ph.ids);
    }

    SUBCASE("unknown entity yields placeholders") {
        const auto seqs = sample_history(index, HistoryIndex::Side::User, "ghost", 2, 0, 9);
        CHECK(seqs[0].ids == placeholder_seq(6).ids);
    }

    SUBCASE("the excluded review never appears across 1000 seeded draws") {
        const auto excluded = tokenize(train[1].text, vocab, 6);
        for (uint64_t seed = 0; seed < 1000; ++seed) {
            const auto seqs =
                sample_history(index, HistoryIndex::Side::User, "solo", 2, 101, seed);
            for (const auto& s : seqs) CHECK(s.ids != excluded.ids);
        }
    }
}

TEST_CASE("gen_synthetic obeys the shared-lexicon and determinism contracts") {
    SynthSpec spec;
    spec.users = 10;
    spec.items = 8;
    spec.interactions = 60;
    spec.lexicon_size = 12;
    spec.seed = 77;

    SUBCASE("s = 1 gives identical sentiment lexicons") {
        spec.shared_fraction = 1.0;
        spec.noise_rate = 0.0;
        const auto pair = gen_synthetic(spec);
        CHECK(pair.a.pos_lexicon == pair.b.pos_lexicon);
        CHECK(pair.a.neg_lexicon == pair.b.neg_lexicon);
    }

    SUBCASE("same spec and seed reproduce identical corpora") {
        const auto p1 = gen_synthetic(spec);
        const auto p2 = gen_synthetic(spec);
        REQUIRE(p1.a.interactions.size() == p2.a.interactions.size());
        for (size_t i = 0; i < p1.a.interactions.size(); ++i) {
            CHECK(p1.a.interactions[i].text == p2.a.interactions[i].text);
            CHECK(p1.a.interactions[i].rating == p2.a.interactions[i].rating);
        }
    }

    SUBCASE("a token-count oracle recovers every rating exactly") {
        spec.noise_rate = 0.5;
        const auto pair = gen_synthetic(spec);
        for (const auto* dom : {&pair.a, &pair.b}) {
            const std::unordered_set<std::string> pos(dom->pos_lexicon.begin(),
                                                      dom->pos_lexicon.end());
            const std::unordered_set<std::string> neg(dom->neg_lexicon.begin(),
                                                      dom->neg_lexicon.end());
            for (const auto& it : dom->interactions) {
                size_t pos_cnt = 0, sent_cnt = 0;
                for (const auto& w : split_words(it.text)) {
                    if (pos.count(w)) {
                        ++pos_cnt;
                        ++sent_cnt;
                    } else if (neg.count(w)) {
                        ++sent_cnt;
                    }
                }
                REQUIRE(sent_cnt == spec.tokens_per_review);
                const double expect =
                    1.0 + double(std::llround(4.0 * double(pos_cnt) / double(sent_cnt)));
                CHECK(it.rating == expect);
            }
        }
    }
}

namespace {

EncodeFn encoder_fn(const EncoderParams<float>& params, const Vocab& vocab) {
    return [&params, &vocab](const std::string& text) {
        return encode(tokenize(text, vocab, params.cfg.max_len), params);
    };
}

}  // namespace

TEST_CASE("domain_similarity is reflexive, symmetric and tracks lexicon overlap") {
    SynthSpec spec;
    spec.users = 12;
    spec.items = 10;
    spec.interactions = 80;
    spec.lexicon_size = 16;
    spec.noise_rate = 0.0;
    spec.seed = 7;

    spec.shared_fraction = 0.9;
    const auto high = gen_synthetic(spec);
    spec.shared_fraction = 0.1;
    const auto low = gen_synthetic(spec);

    std::vector<std::string> corpus;
    for (const auto* dom : {&high.a, &high.b, &low.a, &low.b})
        for (const auto& it : dom->interactions) corpus.push_back(it.text);
    const auto vocab = build_vocab(corpus, 1);
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.max_len = 16;
    cfg.seed = 3;
    const auto params = init_encoder<float>(cfg, vocab.size());
    const auto enc = encoder_fn(params, vocab);

    const double self = domain_similarity(high.a.interactions, high.a.interactions, 40, enc, 5);
    CHECK(self == doctest::Approx(1.0).epsilon(1e-6));

    const double ab = domain_similarity(high.a.interactions, high.b.interactions, 40, enc, 5);
    const double ba = domain_similarity(high.b.interactions, high.a.interactions, 40, enc, 5);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-6));

    size_t wins = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const double hi = domain_similarity(high.a.interactions, high.b.interactions, 40, enc, seed);
        const double lo = domain_similarity(low.a.interactions, low.b.interactions, 40, enc, seed);
        if (hi > lo) ++wins;
    }
    CHECK(wins >= 3);  // median over 5 seeds

    CHECK_THROWS_AS(domain_similarity(high.a.interactions, high.b.interactions, 1000, enc, 5),
                    DataError);
}
