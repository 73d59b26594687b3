#include "fedfr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fedfr {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'F', 'R', 'B', 'I', 'N'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint64_t kMaxNameLength = 1 << 16;
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = 1ULL << 32;

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
        return r;
    }
    return v;
}

void put_u64(std::string& out, std::uint64_t v) {
    const std::uint64_t le = to_le(v);
    char buf[8];
    std::memcpy(buf, &le, 8);
    out.append(buf, 8);
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint64_t u64() {
        if (pos_ + 8 > bytes_.size()) throw TruncatedPayloadError("checkpoint: unexpected end of file");
        std::uint64_t le;
        std::memcpy(&le, bytes_.data() + pos_, 8);
        pos_ += 8;
        return to_le(le);
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string str(std::uint64_t n) {
        if (pos_ + n > bytes_.size()) throw TruncatedPayloadError("checkpoint: unexpected end of file");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

std::vector<TensorRecord> parse_container(Reader r) {
    if (r.bytes().size() < 9) throw MalformedHeaderError("checkpoint: file too short for header");
    const std::string magic = r.str(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0) {
        throw MalformedHeaderError("checkpoint: bad magic bytes");
    }
    const std::string version = r.str(1);
    if (static_cast<std::uint8_t>(version[0]) != kVersion) {
        throw MalformedHeaderError("checkpoint: unsupported version " +
                                   std::to_string(static_cast<int>(version[0])));
    }
    const std::uint64_t count = r.u64();
    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorRecord rec;
        const std::uint64_t name_len = r.u64();
        if (name_len > kMaxNameLength) throw MalformedHeaderError("checkpoint: section name too long");
        rec.name = r.str(name_len);
        const std::uint64_t rank = r.u64();
        if (rank > kMaxRank) throw MalformedHeaderError("checkpoint: tensor rank too large");
        std::uint64_t elems = 1;
        for (std::uint64_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            rec.dims.push_back(dim);
            elems *= dim;
            if (elems > kMaxElements) throw MalformedHeaderError("checkpoint: tensor too large");
        }
        rec.data.resize(elems);
        for (std::uint64_t e = 0; e < elems; ++e) rec.data[e] = r.f64();
        records.push_back(std::move(rec));
    }
    if (!r.at_end()) throw TruncatedPayloadError("checkpoint: trailing bytes after last section");
    return records;
}

void append_record(std::string& out, const TensorRecord& rec) {
    put_u64(out, rec.name.size());
    out.append(rec.name);
    put_u64(out, rec.dims.size());
    std::uint64_t elems = 1;
    for (std::uint64_t d : rec.dims) {
        put_u64(out, d);
        elems *= d;
    }
    if (elems != rec.data.size()) {
        throw ShapeMismatchError("checkpoint: record '" + rec.name + "' dims do not match data length");
    }
    for (double d : rec.data) put_f64(out, d);
}

std::string container_bytes(const std::vector<TensorRecord>& records) {
    std::string out;
    out.append(kMagic, 8);
    out.push_back(static_cast<char>(kVersion));
    put_u64(out, records.size());
    for (const auto& rec : records) append_record(out, rec);
    return out;
}

}  // namespace

Matrix TensorRecord::as_matrix() const {
    if (dims.size() != 2) throw ShapeMismatchError("checkpoint: '" + name + "' is not rank-2");
    Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = data[k++];
    }
    return m;
}

Vector TensorRecord::as_vector() const {
    if (dims.size() != 1) throw ShapeMismatchError("checkpoint: '" + name + "' is not rank-1");
    Vector v(static_cast<Eigen::Index>(dims[0]));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = data[static_cast<std::size_t>(i)];
    return v;
}

TensorRecord TensorRecord::from_matrix(std::string name, const Matrix& m) {
    TensorRecord rec;
    rec.name = std::move(name);
    rec.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    rec.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) rec.data.push_back(m(i, j));
    }
    return rec;
}

TensorRecord TensorRecord::from_vector(std::string name, const Vector& v) {
    TensorRecord rec;
    rec.name = std::move(name);
    rec.dims = {static_cast<std::uint64_t>(v.size())};
    rec.data.assign(v.data(), v.data() + v.size());
    return rec;
}

std::vector<std::uint8_t> serialize_container(const std::vector<TensorRecord>& records) {
    const std::string bytes = container_bytes(records);
    return {bytes.begin(), bytes.end()};
}

void write_container(const std::string& path, const std::vector<TensorRecord>& records) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const std::string bytes = container_bytes(records);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

std::vector<TensorRecord> read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_container(Reader(ss.str()));
}

std::vector<TensorRecord> backbone_records(const std::string& prefix, const BackboneParams& p) {
    std::vector<TensorRecord> recs;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        recs.push_back(
            TensorRecord::from_matrix(prefix + ".layer" + std::to_string(i) + ".weight",
                                      p.layers[i].weight));
        recs.push_back(TensorRecord::from_vector(prefix + ".layer" + std::to_string(i) + ".bias",
                                                 p.layers[i].bias));
    }
    return recs;
}

BackboneParams backbone_from_records(const std::vector<TensorRecord>& records,
                                     const std::string& prefix) {
    BackboneParams p;
    for (std::size_t i = 0;; ++i) {
        const std::string wname = prefix + ".layer" + std::to_string(i) + ".weight";
        const std::string bname = prefix + ".layer" + std::to_string(i) + ".bias";
        const TensorRecord* w = nullptr;
        const TensorRecord* b = nullptr;
        for (const auto& r : records) {
            if (r.name == wname) w = &r;
            if (r.name == bname) b = &r;
        }
        if (!w && !b) break;
        if (!w || !b) throw ShapeMismatchError("checkpoint: incomplete layer " + std::to_string(i));
        BackboneLayer layer{w->as_matrix(), b->as_vector()};
        if (layer.bias.size() != layer.weight.rows()) {
            throw ShapeMismatchError("checkpoint: layer " + std::to_string(i) + " bias/weight mismatch");
        }
        p.layers.push_back(std::move(layer));
    }
    if (p.layers.empty()) throw ShapeMismatchError("checkpoint: no backbone layers under '" + prefix + "'");
    p.input_dim = static_cast<int>(p.layers.front().weight.cols());
    p.embed_dim = static_cast<int>(p.layers.back().weight.rows());
    for (std::size_t i = 0; i + 1 < p.layers.size(); ++i) {
        p.hidden_dims.push_back(static_cast<int>(p.layers[i].weight.rows()));
        if (p.layers[i + 1].weight.cols() != p.layers[i].weight.rows()) {
            throw ShapeMismatchError("checkpoint: layer dims do not chain at layer " +
                                     std::to_string(i + 1));
        }
    }
    return p;
}

void save_global_checkpoint(const std::string& path, const BackboneParams& backbone,
                            const Matrix& phi) {
    std::vector<TensorRecord> recs = backbone_records("backbone", backbone);
    recs.push_back(TensorRecord::from_matrix("phi", phi));
    write_container(path, recs);
}

GlobalCheckpoint load_global_checkpoint(const std::string& path) {
    const auto recs = read_container(path);
    GlobalCheckpoint ckpt;
    ckpt.backbone = backbone_from_records(recs, "backbone");
    bool have_phi = false;
    for (const auto& r : recs) {
        if (r.name == "phi") {
            ckpt.phi = r.as_matrix();
            have_phi = true;
        }
    }
    if (!have_phi) throw ShapeMismatchError("checkpoint: missing 'phi' section");
    if (ckpt.phi.cols() > 0 && ckpt.phi.rows() != ckpt.backbone.embed_dim) {
        throw ShapeMismatchError("checkpoint: phi dimension disagrees with backbone embed_dim");
    }
    return ckpt;
}

void save_clients_checkpoint(const std::string& path,
                             const std::vector<ClientCheckpoint>& clients) {
    std::vector<TensorRecord> recs;
    for (std::size_t c = 0; c < clients.size(); ++c) {
        const std::string prefix = "client" + std::to_string(c);
        auto b = backbone_records(prefix + ".backbone", clients[c].backbone);
        recs.insert(recs.end(), b.begin(), b.end());
        recs.push_back(TensorRecord::from_matrix(prefix + ".pi.weight", clients[c].pi_weight));
        recs.push_back(TensorRecord::from_vector(prefix + ".pi.bias", clients[c].pi_bias));
    }
    write_container(path, recs);
}

std::vector<ClientCheckpoint> load_clients_checkpoint(const std::string& path) {
    const auto recs = read_container(path);
    std::vector<ClientCheckpoint> clients;
    for (std::size_t c = 0;; ++c) {
        const std::string prefix = "client" + std::to_string(c);
        bool present = false;
        for (const auto& r : recs) {
            if (r.name.rfind(prefix + ".", 0) == 0) present = true;
        }
        if (!present) break;
        ClientCheckpoint ckpt;
        ckpt.backbone = backbone_from_records(recs, prefix + ".backbone");
        bool have_w = false, have_b = false;
        for (const auto& r : recs) {
            if (r.name == prefix + ".pi.weight") {
                ckpt.pi_weight = r.as_matrix();
                have_w = true;
            }
            if (r.name == prefix + ".pi.bias") {
                ckpt.pi_bias = r.as_vector();
                have_b = true;
            }
        }
        if (!have_w || !have_b) throw ShapeMismatchError("checkpoint: incomplete DFC transform for " + prefix);
        clients.push_back(std::move(ckpt));
    }
    if (clients.empty()) throw ShapeMismatchError("checkpoint: no client sections");
    return clients;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    Matrix X(ds.input_dim, static_cast<Eigen::Index>(ds.samples.size()));
    Vector ids(static_cast<Eigen::Index>(ds.samples.size()));
    Vector splits(static_cast<Eigen::Index>(ds.samples.size()));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        X.col(static_cast<Eigen::Index>(i)) = ds.samples[i].x;
        ids[static_cast<Eigen::Index>(i)] = ds.samples[i].identity;
        splits[static_cast<Eigen::Index>(i)] = ds.samples[i].split == Split::Train ? 0.0 : 1.0;
    }
    std::vector<TensorRecord> recs;
    recs.push_back(TensorRecord::from_matrix("x", X));
    recs.push_back(TensorRecord::from_vector("identity", ids));
    recs.push_back(TensorRecord::from_vector("split", splits));
    Vector meta(1);
    meta[0] = ds.identity_count;
    recs.push_back(TensorRecord::from_vector("identity_count", meta));
    write_container(path, recs);
}

Dataset load_dataset(const std::string& path) {
    const auto recs = read_container(path);
    const TensorRecord* x = nullptr;
    const TensorRecord* ids = nullptr;
    const TensorRecord* splits = nullptr;
    const TensorRecord* meta = nullptr;
    for (const auto& r : recs) {
        if (r.name == "x") x = &r;
        if (r.name == "identity") ids = &r;
        if (r.name == "split") splits = &r;
        if (r.name == "identity_count") meta = &r;
    }
    if (!x || !ids || !splits || !meta) throw ShapeMismatchError("dataset: missing sections");
    const Matrix X = x->as_matrix();
    const Vector id_v = ids->as_vector();
    const Vector sp_v = splits->as_vector();
    if (id_v.size() != X.cols() || sp_v.size() != X.cols()) {
        throw ShapeMismatchError("dataset: section lengths disagree");
    }
    Dataset ds;
    ds.input_dim = static_cast<int>(X.rows());
    ds.identity_count = static_cast<int>(meta->as_vector()[0]);
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        ds.samples.push_back({X.col(i), static_cast<int>(id_v[i]),
                              sp_v[i] == 0.0 ? Split::Train : Split::Eval});
    }
    return ds;
}

}  // namespace fedfr
