#include "tvc/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace tvc::io {

namespace {

// ----- little-endian scalar plumbing for checkpoints -----

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
  public:
    Reader(std::string data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

    std::size_t remaining() const { return data_.size() - pos_; }

    const std::uint8_t* take(std::size_t n, const char* what) {
        if (remaining() < n)
            throw CheckpointError(CheckpointErrc::truncated,
                                  name_ + ": ran out of bytes reading " + what);
        const auto* p = reinterpret_cast<const std::uint8_t*>(data_.data() + pos_);
        pos_ += n;
        return p;
    }

    std::uint16_t u16(const char* what) {
        const auto* p = take(2, what);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        const auto* p = take(4, what);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint64_t u64(const char* what) {
        std::uint64_t v = 0;
        const auto* p = take(8, what);
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

  private:
    std::string data_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path, const char* err_label, bool checkpoint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        const std::string msg = std::string(err_label) + ": cannot open " + path.string();
        if (checkpoint) throw CheckpointError(CheckpointErrc::io_error, msg);
        throw IdxError(IdxErrc::io_error, msg);
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        const std::string msg = std::string(err_label) + ": read failure on " + path.string();
        if (checkpoint) throw CheckpointError(CheckpointErrc::io_error, msg);
        throw IdxError(IdxErrc::io_error, msg);
    }
    return data;
}

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

// ===== Checkpoints =====

std::string to_string(CheckpointErrc e) {
    switch (e) {
        case CheckpointErrc::io_error: return "checkpoint io error";
        case CheckpointErrc::bad_magic: return "checkpoint bad magic";
        case CheckpointErrc::bad_version: return "checkpoint version mismatch";
        case CheckpointErrc::truncated: return "checkpoint truncated";
        case CheckpointErrc::checksum_mismatch: return "checkpoint checksum mismatch";
        case CheckpointErrc::shape_mismatch: return "checkpoint shape mismatch";
    }
    return "checkpoint error";
}

void save_checkpoint(const std::filesystem::path& path, const nn::ModelSpec& spec,
                     const nn::ParamVector& theta) {
    spec.validate();
    theta.validate();
    if (theta.shape_map != nn::shape_map_for(spec))
        throw CheckpointError(CheckpointErrc::shape_mismatch,
                              "parameters do not match the model spec");

    std::string head;
    head.append(kCheckpointMagic, 4);
    put_u32(head, kCheckpointVersion);
    put_u32(head, static_cast<std::uint32_t>(spec.input_dim));
    put_u32(head, static_cast<std::uint32_t>(spec.hidden_dims.size()));
    for (std::size_t h : spec.hidden_dims) put_u32(head, static_cast<std::uint32_t>(h));
    put_u32(head, static_cast<std::uint32_t>(spec.num_classes));
    head.push_back(static_cast<char>(spec.activation));
    put_u32(head, static_cast<std::uint32_t>(theta.shape_map.size()));
    for (const auto& e : theta.shape_map) {
        put_u16(head, static_cast<std::uint16_t>(e.name.size()));
        head.append(e.name);
        head.push_back(static_cast<char>(e.kind));
        put_u32(head, static_cast<std::uint32_t>(e.rows));
        put_u32(head, static_cast<std::uint32_t>(e.cols));
    }
    put_u64(head, static_cast<std::uint64_t>(theta.values.size()));

    std::string payload;
    payload.reserve(theta.values.size() * 4);
    for (double v : theta.values) put_f32(payload, static_cast<float>(v));

    std::string tail;
    put_u32(tail, crc_of(payload));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrc::io_error, "cannot open " + path.string());
    out << head << payload << tail;
    out.flush();
    if (!out) throw CheckpointError(CheckpointErrc::io_error, "write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(slurp(path, "checkpoint", true), path.string());

    const auto* magic = r.take(4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError(CheckpointErrc::bad_magic, path.string() + " is not a checkpoint");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointErrc::bad_version,
                              "found version " + std::to_string(version) + ", expected " +
                                  std::to_string(kCheckpointVersion));

    Checkpoint ck;
    ck.spec.input_dim = r.u32("input_dim");
    const std::uint32_t n_hidden = r.u32("hidden count");
    ck.spec.hidden_dims.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i) ck.spec.hidden_dims.push_back(r.u32("hidden dim"));
    ck.spec.num_classes = r.u32("num_classes");
    const std::uint8_t act = *r.take(1, "activation");
    if (act > 1)
        throw CheckpointError(CheckpointErrc::shape_mismatch,
                              "unknown activation code " + std::to_string(act));
    ck.spec.activation = static_cast<nn::Activation>(act);

    const std::uint32_t n_entries = r.u32("entry count");
    std::size_t total = 0;
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        nn::ShapeEntry e;
        const std::uint16_t len = r.u16("name length");
        const auto* name = r.take(len, "entry name");
        e.name.assign(reinterpret_cast<const char*>(name), len);
        const std::uint8_t kind = *r.take(1, "entry kind");
        if (kind > 1)
            throw CheckpointError(CheckpointErrc::shape_mismatch,
                                  "unknown param kind " + std::to_string(kind));
        e.kind = static_cast<nn::ParamKind>(kind);
        e.rows = r.u32("entry rows");
        e.cols = r.u32("entry cols");
        total += e.size();
        ck.theta.shape_map.push_back(e);
    }

    const std::uint64_t count = r.u64("value count");
    if (count != total)
        throw CheckpointError(CheckpointErrc::shape_mismatch,
                              "shape map covers " + std::to_string(total) + " values, payload claims " +
                                  std::to_string(count));

    std::string payload;
    payload.resize(count * 4);
    {
        const auto* p = r.take(count * 4, "payload");
        std::memcpy(payload.data(), p, count * 4);
    }
    const std::uint32_t stored_crc = r.u32("checksum");
    const std::uint32_t actual_crc = crc_of(payload);
    if (stored_crc != actual_crc)
        throw CheckpointError(CheckpointErrc::checksum_mismatch,
                              "stored " + std::to_string(stored_crc) + ", computed " +
                                  std::to_string(actual_crc));

    ck.theta.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k)
            bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(payload[i * 4 + k])) << (8 * k);
        float f;
        std::memcpy(&f, &bits, 4);
        ck.theta.values[i] = static_cast<double>(f);
    }

    ck.spec.validate();
    if (ck.theta.shape_map != nn::shape_map_for(ck.spec))
        throw CheckpointError(CheckpointErrc::shape_mismatch,
                              "shape map does not match the stored model spec");
    return ck;
}

// ===== IDX =====

std::string to_string(IdxErrc e) {
    switch (e) {
        case IdxErrc::io_error: return "idx io error";
        case IdxErrc::bad_magic: return "idx bad magic";
        case IdxErrc::truncated: return "idx truncated";
        case IdxErrc::count_mismatch: return "idx count mismatch";
    }
    return "idx error";
}

namespace {

// IDX headers are big-endian.
std::uint32_t be_u32(const std::string& data, std::size_t off, const std::string& name) {
    if (off + 4 > data.size()) throw IdxError(IdxErrc::truncated, name + ": header cut short");
    const auto* p = reinterpret_cast<const std::uint8_t*>(data.data() + off);
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

nn::Dataset load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    const std::string img = slurp(images_path, "idx images", false);
    const std::string lab = slurp(labels_path, "idx labels", false);

    const std::uint32_t img_magic = be_u32(img, 0, images_path.string());
    if (img_magic != kIdxImagesMagic)
        throw IdxError(IdxErrc::bad_magic, images_path.string() + ": magic " +
                                               std::to_string(img_magic) + ", expected " +
                                               std::to_string(kIdxImagesMagic));
    const std::uint32_t lab_magic = be_u32(lab, 0, labels_path.string());
    if (lab_magic != kIdxLabelsMagic)
        throw IdxError(IdxErrc::bad_magic, labels_path.string() + ": magic " +
                                               std::to_string(lab_magic) + ", expected " +
                                               std::to_string(kIdxLabelsMagic));

    const std::uint32_t n_img = be_u32(img, 4, images_path.string());
    const std::uint32_t rows = be_u32(img, 8, images_path.string());
    const std::uint32_t cols = be_u32(img, 12, images_path.string());
    const std::uint32_t n_lab = be_u32(lab, 4, labels_path.string());
    if (n_img != n_lab)
        throw IdxError(IdxErrc::count_mismatch, std::to_string(n_img) + " images vs " +
                                                    std::to_string(n_lab) + " labels");

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (img.size() < 16 + static_cast<std::size_t>(n_img) * pixels)
        throw IdxError(IdxErrc::truncated, images_path.string() + ": payload shorter than header claims");
    if (lab.size() < 8 + n_lab)
        throw IdxError(IdxErrc::truncated, labels_path.string() + ": payload shorter than header claims");

    nn::Dataset ds;
    ds.inputs.reserve(n_img);
    ds.labels.reserve(n_img);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        std::vector<double> x(pixels);
        const auto* p = reinterpret_cast<const std::uint8_t*>(img.data() + 16 + i * pixels);
        for (std::size_t j = 0; j < pixels; ++j) x[j] = static_cast<double>(p[j]) / 255.0;
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(static_cast<int>(static_cast<std::uint8_t>(lab[8 + i])));
    }
    return ds;
}

}  // namespace tvc::io
