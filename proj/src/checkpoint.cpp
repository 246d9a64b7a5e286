#include "eegdec/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace eegdec {

namespace {

constexpr char kMagic[5] = {'E', 'D', 'C', 'K', '\x01'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    std::ifstream in;
    std::filesystem::path path;
    uint64_t offset = 0;

    void read_bytes(void* dst, size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n) {
            throw FormatError("checkpoint " + path.string() + ": truncated reading " + what +
                              " at byte offset " + std::to_string(offset));
        }
        offset += n;
    }

    uint32_t read_u32(const char* what) {
        unsigned char b[4];
        read_bytes(b, 4, what);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }

    double read_f64(const char* what) {
        unsigned char b[8];
        read_bytes(b, 8, what);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

} // namespace

void Checkpoint::add(const std::string& name, const Tensor& t) {
    entries.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kMagic, 5);
    const std::string meta_str = meta.dump();
    put_u32(os, static_cast<uint32_t>(meta_str.size()));
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    put_u32(os, static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) put_u32(os, static_cast<uint32_t>(d));
        for (double v : e.data) put_f64(os, v);
    }
    if (!os) throw FormatError("write failure on " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    Reader r;
    r.path = path;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw FormatError("cannot open checkpoint " + path.string());

    char magic[5];
    r.read_bytes(magic, 5, "magic");
    if (std::memcmp(magic, kMagic, 5) != 0) {
        throw FormatError("checkpoint " + path.string() + ": bad magic header at byte offset 0");
    }
    Checkpoint ckpt;
    const uint32_t meta_len = r.read_u32("metadata length");
    std::string meta_str(meta_len, '\0');
    r.read_bytes(meta_str.data(), meta_len, "metadata");
    try {
        ckpt.meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint " + path.string() + ": bad metadata JSON: " + e.what());
    }
    const uint32_t n_entries = r.read_u32("entry count");
    ckpt.entries.reserve(n_entries);
    for (uint32_t i = 0; i < n_entries; ++i) {
        Entry e;
        const uint32_t name_len = r.read_u32("entry name length");
        e.name.resize(name_len);
        r.read_bytes(e.name.data(), name_len, "entry name");
        const uint32_t ndim = r.read_u32("entry rank");
        e.shape.resize(ndim);
        int64_t count = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            e.shape[d] = r.read_u32("entry extent");
            count *= e.shape[d];
        }
        e.data.resize(static_cast<size_t>(count));
        for (int64_t v = 0; v < count; ++v) e.data[static_cast<size_t>(v)] = r.read_f64("payload");
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

void save_model(const std::filesystem::path& path, const DecoderModel& model) {
    Checkpoint ckpt;
    ckpt.meta["config"] = model.config();
    for (const auto& p : model.parameters()) ckpt.add(p.path, p.tensor);
    ckpt.save(path);
}

DecoderModel model_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("config")) {
        throw FormatError("checkpoint metadata has no model config");
    }
    ModelConfig cfg = ckpt.meta.at("config").get<ModelConfig>();
    DecoderModel model(cfg, Rng(0));
    for (auto& p : model.parameters()) {
        const auto* entry = ckpt.find(p.path);
        if (!entry) throw FormatError("checkpoint missing parameter " + p.path);
        if (entry->shape != p.tensor.shape()) {
            throw FormatError("checkpoint parameter " + p.path + " has shape " +
                              shape_str(entry->shape) + ", expected " +
                              shape_str(p.tensor.shape()));
        }
        Tensor t = p.tensor;
        std::copy(entry->data.begin(), entry->data.end(), t.values_mut().begin());
    }
    return model;
}

DecoderModel load_model(const std::filesystem::path& path) {
    return model_from_checkpoint(Checkpoint::load(path));
}

} // namespace eegdec
