#include "loid/vocab.hpp"

#include <cctype>
#include <fstream>

namespace loid {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(char(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocab build_vocab(const std::vector<std::string>& corpus, size_t min_freq) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");
    Vocab v;
    v.min_freq = min_freq;
    v.id_to_token = {"[CLS]", "[UNK]", "[PAD]"};
    v.token_to_id = {{"[CLS]", Vocab::kCls}, {"[UNK]", Vocab::kUnk}, {"[PAD]", Vocab::kPad}};

    // counts plus first-appearance order so the id assignment is reproducible
    std::unordered_map<std::string, size_t> freq;
    std::vector<std::string> order;
    for (const auto& text : corpus) {
        for (auto& w : split_words(text)) {
            auto [it, inserted] = freq.try_emplace(w, 0);
            if (inserted) order.push_back(w);
            ++it->second;
        }
    }
    for (const auto& w : order) {
        if (freq[w] >= min_freq) {
            v.token_to_id.emplace(w, int32_t(v.id_to_token.size()));
            v.id_to_token.push_back(w);
        }
    }
    return v;
}

TokenSeq tokenize(const std::string& text, const Vocab& vocab, size_t max_len) {
    if (max_len < 2) throw ConfigError("tokenize: max_len must be >= 2");
    TokenSeq seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(Vocab::kCls);
    for (const auto& w : split_words(text)) {
        if (seq.ids.size() >= max_len) break;
        seq.ids.push_back(vocab.lookup(w));
    }
    seq.valid_len = seq.ids.size();
    seq.ids.resize(max_len, Vocab::kPad);
    return seq;
}

TokenSeq placeholder_seq(size_t max_len) {
    TokenSeq seq;
    seq.ids.assign(max_len, Vocab::kPad);
    seq.ids[0] = Vocab::kCls;
    if (max_len > 1) seq.ids[1] = Vocab::kUnk;
    seq.valid_len = max_len > 1 ? 2 : 1;
    return seq;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_vocab: cannot open " + path);
    for (const auto& tok : vocab.id_to_token) out << tok << '\n';
    if (!out) throw DataError("save_vocab: write failed for " + path);
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_vocab: cannot open " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.token_to_id.emplace(line, int32_t(v.id_to_token.size()));
        v.id_to_token.push_back(line);
    }
    if (v.id_to_token.size() < 3 || v.id_to_token[0] != "[CLS]" || v.id_to_token[1] != "[UNK]" ||
        v.id_to_token[2] != "[PAD]")
        throw DataError("load_vocab: " + path + " missing reserved [CLS]/[UNK]/[PAD] header");
    return v;
}

}  // namespace loid
