#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "loid/common.hpp"

namespace loid {

// Frequency vocabulary over lowercased alphanumeric runs. Ids are dense,
// reserved ids first; the mapping depends only on corpus order.
struct Vocab {
    static constexpr int32_t kCls = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kPad = 2;

    std::vector<std::string> id_to_token;  // index == id
    std::unordered_map<std::string, int32_t> token_to_id;
    size_t min_freq = 1;

    size_t size() const { return id_to_token.size(); }

    int32_t lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }
};

// A tokenized review: [CLS] + content ids, padded with [PAD] to a fixed
// length. valid_len counts the non-[PAD] prefix.
struct TokenSeq {
    std::vector<int32_t> ids;
    size_t valid_len = 0;
};

// Lowercase split on non-alphanumeric runs; bytes >= 0x80 count as word chars
// so multibyte UTF-8 stays glued together.
std::vector<std::string> split_words(const std::string& text);

Vocab build_vocab(const std::vector<std::string>& corpus, size_t min_freq);

TokenSeq tokenize(const std::string& text, const Vocab& vocab, size_t max_len);

// k-history stand-in for entities with no usable training reviews
TokenSeq placeholder_seq(size_t max_len);

// One token per line, line number == id, first three lines fixed.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

}  // namespace loid
