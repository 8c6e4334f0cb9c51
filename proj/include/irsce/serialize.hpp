// Binary file formats: model checkpoints, activation dumps and training
// datasets. Everything is little-endian with 64-bit IEEE floats; checkpoints
// and datasets carry a CRC-32 trailer so corruption or truncation is caught
// before any state is constructed.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsce/cdrn.hpp"
#include "irsce/tensor.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace irsce {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

class ByteWriter {
  public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void f64_span(const double* p, std::size_t n) { raw(p, 8 * n); }
    void magic(const char m[4]) { raw(m, 4); }

    void append_crc() {
        const std::uint32_t c = crc32(buf_.data(), buf_.size());
        u32(c);
    }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

    void write_file(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + path);
        f.write(reinterpret_cast<const char*>(buf_.data()), std::streamsize(buf_.size()));
        if (!f) throw std::runtime_error("write failed: " + path);
    }

  private:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw std::runtime_error("cannot open for reading: " + path);
        const auto size = static_cast<std::size_t>(f.tellg());
        f.seekg(0);
        std::vector<std::uint8_t> bytes(size);
        f.read(reinterpret_cast<char*>(bytes.data()), size);
        if (!f) throw std::runtime_error("read failed: " + path);
        return ByteReader(std::move(bytes));
    }

    // Validates the trailing CRC over the payload and drops it from the
    // readable range. Truncated or corrupted files fail here.
    void check_crc(const std::string& what) {
        if (buf_.size() < 4)
            throw std::runtime_error(what + ": checksum failure (file truncated)");
        std::uint32_t stored;
        std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
        const std::uint32_t computed = crc32(buf_.data(), buf_.size() - 4);
        if (stored != computed)
            throw std::runtime_error(what + ": checksum failure (corrupt or truncated file)");
        end_ = buf_.size() - 4;
    }

    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    void f64_span(double* p, std::size_t n) { raw(p, 8 * n); }

    void expect_magic(const char m[4], const std::string& what) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw std::runtime_error(what + ": bad magic bytes");
    }

    bool exhausted() const { return pos_ == end_; }

  private:
    void raw(void* p, std::size_t n) {
        if (pos_ + n > end_) throw std::runtime_error("unexpected end of data");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = SIZE_MAX;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> checkpoint_bytes(const CdrnModel& model) {
    ByteWriter w;
    w.magic("CDRN");
    w.u32(kCheckpointVersion);
    const auto& h = model.hyper();
    w.u32(std::uint32_t(h.height));
    w.u32(std::uint32_t(h.width));
    w.u32(std::uint32_t(h.depth));
    w.u32(std::uint32_t(h.layers_per_block));
    w.u32(std::uint32_t(h.filters));
    w.f64(h.bn_epsilon);
    w.f64(h.bn_momentum);
    for (const auto& blk : model.blocks()) {
        for (std::size_t i = 0; i < blk.convs.size(); ++i) {
            const auto& conv = blk.convs[i];
            w.u32(std::uint32_t(conv.out_ch));
            w.u32(std::uint32_t(conv.in_ch));
            w.f64_span(conv.w.data(), conv.w.size());
            w.f64_span(conv.b.data(), conv.b.size());
            if (i < blk.bns.size()) {
                const auto& bn = blk.bns[i];
                w.u32(std::uint32_t(bn.channels));
                w.f64_span(bn.gain.data(), bn.gain.size());
                w.f64_span(bn.shift.data(), bn.shift.size());
                w.f64_span(bn.running_mean.data(), bn.running_mean.size());
                w.f64_span(bn.running_var.data(), bn.running_var.size());
            }
        }
    }
    w.append_crc();
    return w.bytes();
}

inline void save_checkpoint(const CdrnModel& model, const std::string& path) {
    const auto bytes = checkpoint_bytes(model);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline CdrnModel load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("checkpoint " + path);
    r.expect_magic("CDRN", "checkpoint " + path);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported format version " +
                                 std::to_string(version));
    CdrnHyper h;
    h.height = r.u32();
    h.width = r.u32();
    h.depth = r.u32();
    h.layers_per_block = r.u32();
    h.filters = r.u32();
    h.bn_epsilon = r.f64();
    h.bn_momentum = r.f64();
    CdrnModel model(h);
    for (auto& blk : model.blocks()) {
        for (std::size_t i = 0; i < blk.convs.size(); ++i) {
            auto& conv = blk.convs[i];
            const std::uint32_t oc = r.u32();
            const std::uint32_t ic = r.u32();
            if (oc != conv.out_ch || ic != conv.in_ch)
                throw std::runtime_error("checkpoint " + path + ": layer shape mismatch");
            r.f64_span(conv.w.data(), conv.w.size());
            r.f64_span(conv.b.data(), conv.b.size());
            if (i < blk.bns.size()) {
                auto& bn = blk.bns[i];
                if (r.u32() != bn.channels)
                    throw std::runtime_error("checkpoint " + path + ": batch-norm shape mismatch");
                r.f64_span(bn.gain.data(), bn.gain.size());
                r.f64_span(bn.shift.data(), bn.shift.size());
                r.f64_span(bn.running_mean.data(), bn.running_mean.size());
                r.f64_span(bn.running_var.data(), bn.running_var.size());
            }
        }
    }
    if (!r.exhausted())
        throw std::runtime_error("checkpoint " + path + ": trailing bytes after parameters");
    return model;
}

inline void write_tensor(ByteWriter& w, const RealTensor& t) {
    const auto& s = t.shape();
    w.u32(std::uint32_t(s.height));
    w.u32(std::uint32_t(s.width));
    w.u32(std::uint32_t(s.channels));
    w.u32(std::uint32_t(s.batch));
    w.f64_span(t.data(), t.size());
}

inline RealTensor read_tensor(ByteReader& r) {
    const std::uint32_t h = r.u32();
    const std::uint32_t wd = r.u32();
    const std::uint32_t c = r.u32();
    const std::uint32_t b = r.u32();
    RealTensor t(h, wd, c, b);
    r.f64_span(t.data(), t.size());
    return t;
}

// Activation dump: the network input followed by every block output.
inline void save_activation_trace(const ActivationTrace& trace, const std::string& path) {
    ByteWriter w;
    w.magic("CACT");
    w.u32(1);
    w.u32(std::uint32_t(trace.outputs.size() + 1));
    write_tensor(w, trace.input);
    for (const auto& t : trace.outputs) write_tensor(w, t);
    w.write_file(path);
}

inline std::vector<RealTensor> load_activation_trace(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.expect_magic("CACT", "activation dump " + path);
    if (r.u32() != 1) throw std::runtime_error("activation dump " + path + ": unsupported version");
    const std::uint32_t count = r.u32();
    std::vector<RealTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(read_tensor(r));
    return out;
}

struct DatasetFile {
    TrainingSet train;
    TrainingSet test;
    double snr_db = 0.0;
    double noise_var_z = 0.0;
    // Equal for fixed-SNR datasets; a strict range marks a noise-blind set.
    double snr_min_db = 0.0;
    double snr_max_db = 0.0;

    bool blind() const { return snr_min_db < snr_max_db; }
};

inline void save_dataset(const DatasetFile& ds, const std::string& path) {
    ByteWriter w;
    w.magic("CDSN");
    w.u32(1);
    w.u32(std::uint32_t(ds.train.size()));
    w.u32(std::uint32_t(ds.test.size()));
    w.f64(ds.snr_db);
    w.f64(ds.noise_var_z);
    w.f64(ds.snr_min_db);
    w.f64(ds.snr_max_db);
    for (const auto& set : {&ds.train, &ds.test})
        for (std::size_t i = 0; i < set->size(); ++i) {
            write_tensor(w, set->inputs[i]);
            write_tensor(w, set->labels[i]);
        }
    w.append_crc();
    w.write_file(path);
}

inline DatasetFile load_dataset(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("dataset " + path);
    r.expect_magic("CDSN", "dataset " + path);
    if (r.u32() != 1) throw std::runtime_error("dataset " + path + ": unsupported version");
    DatasetFile ds;
    const std::uint32_t n_train = r.u32();
    const std::uint32_t n_test = r.u32();
    ds.snr_db = r.f64();
    ds.noise_var_z = r.f64();
    ds.snr_min_db = r.f64();
    ds.snr_max_db = r.f64();
    for (std::uint32_t i = 0; i < n_train; ++i) {
        ds.train.inputs.push_back(read_tensor(r));
        ds.train.labels.push_back(read_tensor(r));
    }
    for (std::uint32_t i = 0; i < n_test; ++i) {
        ds.test.inputs.push_back(read_tensor(r));
        ds.test.labels.push_back(read_tensor(r));
    }
    if (!r.exhausted()) throw std::runtime_error("dataset " + path + ": trailing bytes");
    return ds;
}

}  // namespace irsce
