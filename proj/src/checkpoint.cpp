#include "ditcache/checkpoint.hpp"

#include <cstring>
#include <map>

#include "ditcache/errors.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; i++)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    uint64_t u64() {
        if (pos + 8 > buf.size())
            throw ConfigError("checkpoint: truncated file");
        uint64_t v = 0;
        for (int i = 0; i < 8; i++)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str() {
        uint64_t n = u64();
        if (pos + n > buf.size())
            throw ConfigError("checkpoint: truncated file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& out, const std::string& name, const ad::Tensor& t) {
    put_str(out, name);
    put_u64(out, t.shape().size());
    for (int d : t.shape())
        put_u64(out, static_cast<uint64_t>(d));
    put_u64(out, static_cast<uint64_t>(t.size()));
    for (double v : t.values())
        put_f64(out, v);
}

// named views over the model's tensors, in a fixed serialization order
std::vector<std::pair<std::string, ad::Tensor*>> named_tensors(DiTModel& m) {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    out.emplace_back("patch_embed", &m.patch_embed);
    out.emplace_back("time_w1", &m.time_w1);
    out.emplace_back("time_w2", &m.time_w2);
    out.emplace_back("class_embed", &m.class_embed);
    for (size_t l = 0; l < m.attn.size(); l++) {
        auto& a = m.attn[l];
        std::string p = "attn" + std::to_string(l) + ".";
        out.emplace_back(p + "ln_g", &a.ln_g);
        out.emplace_back(p + "ln_b", &a.ln_b);
        out.emplace_back(p + "wq", &a.wq);
        out.emplace_back(p + "wk", &a.wk);
        out.emplace_back(p + "wv", &a.wv);
        out.emplace_back(p + "wo", &a.wo);
    }
    for (size_t l = 0; l < m.ffn.size(); l++) {
        auto& f = m.ffn[l];
        std::string p = "ffn" + std::to_string(l) + ".";
        out.emplace_back(p + "ln_g", &f.ln_g);
        out.emplace_back(p + "ln_b", &f.ln_b);
        out.emplace_back(p + "w1", &f.w1);
        out.emplace_back(p + "w2", &f.w2);
    }
    out.emplace_back("final_ln_g", &m.final_ln_g);
    out.emplace_back("final_ln_b", &m.final_ln_b);
    out.emplace_back("final_proj", &m.final_proj);
    return out;
}

}  // namespace

std::string model_to_bytes(const DiTModel& m) {
    std::string out(kMagic, sizeof(kMagic));
    const auto& c = m.cfg;
    for (int v : {c.image_size, c.channels, c.patch_size, c.d_model, c.n_heads, c.depth,
                  c.n_classes})
        put_u64(out, static_cast<uint64_t>(v));
    put_u64(out, c.param_seed);

    auto named = named_tensors(const_cast<DiTModel&>(m));
    put_u64(out, named.size());
    for (auto& [name, t] : named)
        put_tensor(out, name, *t);
    return out;
}

void save_model(const DiTModel& m, const std::filesystem::path& path) {
    write_file_atomic(path, model_to_bytes(m));
}

DiTModel model_from_bytes(const std::string& buf) {
    if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("checkpoint: bad magic (not a model checkpoint or wrong version)");
    Reader r{buf, sizeof(kMagic)};
    DiTConfig cfg;
    cfg.image_size = static_cast<int>(r.u64());
    cfg.channels = static_cast<int>(r.u64());
    cfg.patch_size = static_cast<int>(r.u64());
    cfg.d_model = static_cast<int>(r.u64());
    cfg.n_heads = static_cast<int>(r.u64());
    cfg.depth = static_cast<int>(r.u64());
    cfg.n_classes = static_cast<int>(r.u64());
    cfg.param_seed = r.u64();

    DiTModel m = DiTModel::init(cfg);
    auto named = named_tensors(m);
    uint64_t count = r.u64();
    if (count != named.size())
        throw ConfigError("checkpoint: tensor count " + std::to_string(count) + " != expected " +
                          std::to_string(named.size()));
    for (auto& [name, t] : named) {
        std::string got = r.str();
        if (got != name)
            throw ConfigError("checkpoint: expected tensor '" + name + "', found '" + got + "'");
        uint64_t rank = r.u64();
        ad::Shape shape(rank);
        for (auto& d : shape)
            d = static_cast<int>(r.u64());
        if (shape != t->shape())
            throw ConfigError("checkpoint: tensor '" + name + "' shape " + ad::shape_str(shape) +
                              " != expected " + ad::shape_str(t->shape()));
        uint64_t n = r.u64();
        if (n != static_cast<uint64_t>(t->size()))
            throw ConfigError("checkpoint: tensor '" + name + "' length mismatch");
        auto& vals = t->mutable_values();
        for (auto& v : vals)
            v = r.f64();
        if (!all_finite(vals))
            throw NumericError("checkpoint: tensor '" + name + "' contains NaN/Inf");
    }
    return m;
}

DiTModel load_model(const std::filesystem::path& path) {
    try {
        return model_from_bytes(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (file: " + path.string() + ")");
    }
}

}  // namespace ditcache
