#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loid/adapters.hpp"
#include "loid/heads.hpp"
#include "loid/vocab.hpp"

namespace loid {

// Binary tensor container shared by adapter files, encoder snapshots and
// model checkpoints:
//   magic "LOID", u16 version=1, u16 rank, u32 tensor count,
//   then per tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims...,
//   raw 32-bit little-endian floats, row-major.
struct NamedTensor {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

struct Container {
    uint16_t rank = 0;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
    const NamedTensor& require(const std::string& name) const {
        const auto* t = find(name);
        if (t == nullptr) throw DataError("container: missing tensor '" + name + "'");
        return *t;
    }
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

NamedTensor to_tensor(const std::string& name, const Mat<float>& m);
Mat<float> to_mat(const NamedTensor& t);

// Adapter files: tensors "layer{i}.{Q|K|V|FFN_in|FFN_out}.{A|B}".
// The source-task label is not part of the format; loading derives it from
// the file name stem.
void save_adapter(const LoraAdapter<float>& adapter, const std::string& path);
LoraAdapter<float> load_adapter(const std::string& path);

// shared framing for checkpoints, which embed the adapter tensors
void append_adapter_tensors(Container& c, const LoraAdapter<float>& adapter);
LoraAdapter<float> adapter_from_container(const Container& c, const std::string& origin,
                                          const std::string& label);

// Encoder snapshots: tensors under "enc.*" plus a vocab sidecar at
// path + ".vocab" in the one-token-per-line text format.
void save_encoder(const EncoderParams<float>& params, const Vocab& vocab,
                  const std::string& path);
std::pair<EncoderParams<float>, Vocab> load_encoder(const std::string& path);

uint64_t file_checksum(const std::string& path);

}  // namespace loid
