#include "loid/serialize.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace loid {

namespace {

constexpr char kMagic[4] = {'L', 'O', 'I', 'D'};
constexpr uint16_t kVersion = 1;

// This implementation targets little-endian hosts; values are written as raw
// bytes in the fixed-width types of the format.
template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return bool(in);
}

MatKind parse_kind(const std::string& s) {
    if (s == "Q") return MatKind::Q;
    if (s == "K") return MatKind::K;
    if (s == "V") return MatKind::V;
    if (s == "FFN_in") return MatKind::FFN_in;
    if (s == "FFN_out") return MatKind::FFN_out;
    throw DataError("adapter file: unknown matrix kind '" + s + "'");
}

}  // namespace

void write_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, c.rank);
    put(out, uint32_t(c.tensors.size()));
    for (const auto& t : c.tensors) {
        if (t.name.size() > 0xffff) throw DataError("tensor name too long: " + t.name);
        put(out, uint16_t(t.name.size()));
        out.write(t.name.data(), std::streamsize(t.name.size()));
        put(out, uint8_t(t.dims.size()));
        size_t count = 1;
        for (uint32_t d : t.dims) {
            put(out, d);
            count *= d;
        }
        if (count != t.data.size())
            throw DataError("tensor '" + t.name + "': dims do not match data size");
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  std::streamsize(t.data.size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "': bad magic, not a LOID container");
    uint16_t version = 0;
    if (!get(in, version)) throw DataError("'" + path + "': truncated header");
    if (version != kVersion)
        throw DataError("'" + path + "': unsupported version " + std::to_string(version));
    Container c;
    uint32_t count = 0;
    if (!get(in, c.rank) || !get(in, count)) throw DataError("'" + path + "': truncated header");
    c.tensors.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        auto& t = c.tensors[i];
        uint16_t name_len = 0;
        if (!get(in, name_len))
            throw DataError("'" + path + "': truncated at tensor " + std::to_string(i) + " of " +
                            std::to_string(count));
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        uint8_t ndim = 0;
        if (!in || !get(in, ndim))
            throw DataError("'" + path + "': truncated while reading tensor '" + t.name + "'");
        t.dims.resize(ndim);
        size_t n = 1;
        for (auto& d : t.dims) {
            if (!get(in, d))
                throw DataError("'" + path + "': truncated while reading tensor '" + t.name + "'");
            n *= d;
        }
        t.data.resize(n);
        in.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(n * sizeof(float)));
        if (!in)
            throw DataError("'" + path + "': truncated while reading tensor '" + t.name + "'");
    }
    return c;
}

NamedTensor to_tensor(const std::string& name, const Mat<float>& m) {
    NamedTensor t;
    t.name = name;
    if (m.rows == 1) {
        t.dims = {uint32_t(m.cols)};
    } else {
        t.dims = {uint32_t(m.rows), uint32_t(m.cols)};
    }
    t.data = m.data;
    return t;
}

Mat<float> to_mat(const NamedTensor& t) {
    Mat<float> m;
    if (t.dims.size() == 1) {
        m.rows = 1;
        m.cols = t.dims[0];
    } else if (t.dims.size() == 2) {
        m.rows = t.dims[0];
        m.cols = t.dims[1];
    } else {
        throw DataError("tensor '" + t.name + "': unsupported ndim " +
                        std::to_string(t.dims.size()));
    }
    m.data = t.data;
    if (m.rows * m.cols != m.data.size())
        throw DataError("tensor '" + t.name + "': dims do not match data size");
    return m;
}

void append_adapter_tensors(Container& c, const LoraAdapter<float>& adapter) {
    c.rank = uint16_t(adapter.rank);
    for (const auto& e : adapter.entries) {
        const std::string base =
            "layer" + std::to_string(e.point.layer) + "." + mat_kind_name(e.point.kind);
        c.tensors.push_back(to_tensor(base + ".A", e.a));
        c.tensors.push_back(to_tensor(base + ".B", e.b));
    }
}

LoraAdapter<float> adapter_from_container(const Container& c, const std::string& origin,
                                          const std::string& label) {
    LoraAdapter<float> ad;
    ad.rank = c.rank;
    ad.source_task = label;
    for (const auto& t : c.tensors) {
        if (t.name.rfind("layer", 0) != 0) continue;
        const size_t dot1 = t.name.find('.');
        const size_t dot2 = t.name.rfind('.');
        if (dot1 == std::string::npos || dot2 <= dot1)
            throw DataError("'" + origin + "': unexpected tensor name '" + t.name + "'");
        AttachPoint pt;
        pt.layer = size_t(std::stoul(t.name.substr(5, dot1 - 5)));
        pt.kind = parse_kind(t.name.substr(dot1 + 1, dot2 - dot1 - 1));
        const std::string role = t.name.substr(dot2 + 1);

        LoraEntry<float>* entry = nullptr;
        for (auto& e : ad.entries)
            if (e.point == pt) entry = &e;
        if (entry == nullptr) {
            ad.entries.push_back({pt, {}, {}});
            entry = &ad.entries.back();
        }
        if (role == "A") {
            entry->a = to_mat(t);
        } else if (role == "B") {
            entry->b = to_mat(t);
        } else {
            throw DataError("'" + origin + "': unexpected tensor role '" + role + "'");
        }
    }
    if (ad.entries.empty()) throw DataError("'" + origin + "': no adapter tensors found");
    for (const auto& e : ad.entries) {
        const std::string where = "layer" + std::to_string(e.point.layer) + "." +
                                  mat_kind_name(e.point.kind);
        if (e.a.empty()) throw DataError("'" + origin + "': missing tensor '" + where + ".A'");
        if (e.b.empty()) throw DataError("'" + origin + "': missing tensor '" + where + ".B'");
        if (e.a.rows != ad.rank || e.b.cols != ad.rank)
            throw DataError("'" + origin + "': tensor '" + where + "' disagrees with header rank");
    }
    return ad;
}

void save_adapter(const LoraAdapter<float>& adapter, const std::string& path) {
    Container c;
    append_adapter_tensors(c, adapter);
    write_container(path, c);
}

LoraAdapter<float> load_adapter(const std::string& path) {
    const Container c = read_container(path);
    return adapter_from_container(c, path, std::filesystem::path(path).stem().string());
}

void save_encoder(const EncoderParams<float>& p, const Vocab& vocab, const std::string& path) {
    Container c;
    c.rank = 0;
    NamedTensor meta;
    meta.name = "enc.meta";
    meta.dims = {6};
    meta.data = {float(p.cfg.dim),     float(p.cfg.layers),  float(p.cfg.heads),
                 float(p.cfg.ffn_dim), float(p.cfg.max_len), float(p.vocab_size)};
    c.tensors.push_back(std::move(meta));
    c.tensors.push_back(to_tensor("enc.tok_emb", p.tok_emb));
    c.tensors.push_back(to_tensor("enc.pos_emb", p.pos_emb));
    c.tensors.push_back(to_tensor("enc.ln_f.g", p.ln_f_g));
    c.tensors.push_back(to_tensor("enc.ln_f.b", p.ln_f_b));
    for (size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        const std::string pre = "enc.layer" + std::to_string(i) + ".";
        c.tensors.push_back(to_tensor(pre + "Q.W", l.wq));
        c.tensors.push_back(to_tensor(pre + "Q.b", l.bq));
        c.tensors.push_back(to_tensor(pre + "K.W", l.wk));
        c.tensors.push_back(to_tensor(pre + "K.b", l.bk));
        c.tensors.push_back(to_tensor(pre + "V.W", l.wv));
        c.tensors.push_back(to_tensor(pre + "V.b", l.bv));
        c.tensors.push_back(to_tensor(pre + "FFN_in.W", l.w_in));
        c.tensors.push_back(to_tensor(pre + "FFN_in.b", l.b_in));
        c.tensors.push_back(to_tensor(pre + "FFN_out.W", l.w_out));
        c.tensors.push_back(to_tensor(pre + "FFN_out.b", l.b_out));
        c.tensors.push_back(to_tensor(pre + "ln1.g", l.ln1_g));
        c.tensors.push_back(to_tensor(pre + "ln1.b", l.ln1_b));
        c.tensors.push_back(to_tensor(pre + "ln2.g", l.ln2_g));
        c.tensors.push_back(to_tensor(pre + "ln2.b", l.ln2_b));
    }
    write_container(path, c);
    save_vocab(vocab, path + ".vocab");
}

std::pair<EncoderParams<float>, Vocab> load_encoder(const std::string& path) {
    const Container c = read_container(path);
    const auto& meta = c.require("enc.meta");
    if (meta.data.size() != 6) throw DataError("'" + path + "': bad enc.meta");
    EncoderParams<float> p;
    p.cfg.dim = size_t(meta.data[0]);
    p.cfg.layers = size_t(meta.data[1]);
    p.cfg.heads = size_t(meta.data[2]);
    p.cfg.ffn_dim = size_t(meta.data[3]);
    p.cfg.max_len = size_t(meta.data[4]);
    p.cfg.seed = 0;
    p.vocab_size = size_t(meta.data[5]);
    p.cfg.validate();
    p.tok_emb = to_mat(c.require("enc.tok_emb"));
    p.pos_emb = to_mat(c.require("enc.pos_emb"));
    p.ln_f_g = to_mat(c.require("enc.ln_f.g"));
    p.ln_f_b = to_mat(c.require("enc.ln_f.b"));
    p.layers.resize(p.cfg.layers);
    for (size_t i = 0; i < p.cfg.layers; ++i) {
        auto& l = p.layers[i];
        const std::string pre = "enc.layer" + std::to_string(i) + ".";
        l.wq = to_mat(c.require(pre + "Q.W"));
        l.bq = to_mat(c.require(pre + "Q.b"));
        l.wk = to_mat(c.require(pre + "K.W"));
        l.bk = to_mat(c.require(pre + "K.b"));
        l.wv = to_mat(c.require(pre + "V.W"));
        l.bv = to_mat(c.require(pre + "V.b"));
        l.w_in = to_mat(c.require(pre + "FFN_in.W"));
        l.b_in = to_mat(c.require(pre + "FFN_in.b"));
        l.w_out = to_mat(c.require(pre + "FFN_out.W"));
        l.b_out = to_mat(c.require(pre + "FFN_out.b"));
        l.ln1_g = to_mat(c.require(pre + "ln1.g"));
        l.ln1_b = to_mat(c.require(pre + "ln1.b"));
        l.ln2_g = to_mat(c.require(pre + "ln2.g"));
        l.ln2_b = to_mat(c.require(pre + "ln2.b"));
    }
    if (p.tok_emb.rows != p.vocab_size || p.tok_emb.cols != p.cfg.dim)
        throw DataError("'" + path + "': token embedding shape disagrees with enc.meta");
    Vocab vocab = load_vocab(path + ".vocab");
    if (vocab.size() != p.vocab_size)
        throw DataError("'" + path + "': vocab sidecar size disagrees with enc.meta");
    return {std::move(p), std::move(vocab)};
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = hash64_bytes(buf, size_t(in.gcount()), h);
    }
    return h;
}

}  // namespace loid
