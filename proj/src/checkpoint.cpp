#include "pan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pan {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxLayers = 1024;
constexpr std::uint32_t kMaxWidth = 1u << 20;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void reals(const std::vector<double>& v) {
        for (double x : v) f64(x);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    void need(std::size_t n, const char* what) {
        if (pos_ + n > in_.size())
            throw FormatError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                              std::to_string(pos_));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    void reals(std::vector<double>& v, const char* what) {
        need(8 * v.size(), what);
        for (auto& x : v) x = f64(what);
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    const Mlp& m = ckpt.model;
    m.validate();
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u64(ckpt.seed);
    w.u32(static_cast<std::uint32_t>(m.pan.mode));
    w.f64(m.pan.amplitude);
    w.f64(m.pan.period);
    w.u32(static_cast<std::uint32_t>(m.depth()));
    for (auto s : m.sizes) w.u32(static_cast<std::uint32_t>(s));
    for (auto a : m.activations) w.u8(a == Activation::Relu ? 0 : 1);
    for (const auto& p : m.layers) {
        w.reals(p.weight.data());
        w.reals(p.bias);
    }
    w.u32(static_cast<std::uint32_t>(m.encodings.size()));
    for (const auto& e : m.encodings) w.reals(e);
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    r.need(sizeof kMagic, "magic");
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("checkpoint: bad magic at byte offset 0");
    for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8("magic");

    Checkpoint ckpt;
    ckpt.seed = r.u64("seed");
    const std::size_t mode_at = r.pos();
    const std::uint32_t mode = r.u32("pan mode");
    if (mode > 2) throw FormatError("checkpoint: invalid PAN mode at byte offset " + std::to_string(mode_at));
    PanConfig pan{static_cast<PanMode>(mode), r.f64("amplitude"), r.f64("period")};

    const std::size_t depth_at = r.pos();
    const std::uint32_t depth = r.u32("layer count");
    if (depth == 0 || depth > kMaxLayers)
        throw FormatError("checkpoint: invalid layer count at byte offset " + std::to_string(depth_at));
    std::vector<std::size_t> sizes(depth + 1);
    for (auto& s : sizes) {
        const std::size_t at = r.pos();
        s = r.u32("layer width");
        if (s == 0 || s > kMaxWidth) throw FormatError("checkpoint: invalid layer width at byte offset " + std::to_string(at));
    }
    std::vector<Activation> acts(depth - 1);
    for (auto& a : acts) {
        const std::size_t at = r.pos();
        const auto tag = r.u8("activation");
        if (tag > 1) throw FormatError("checkpoint: invalid activation tag at byte offset " + std::to_string(at));
        a = tag == 0 ? Activation::Relu : Activation::Identity;
    }

    Mlp m = make_zero_mlp(sizes, pan);
    m.activations = acts;
    for (auto& p : m.layers) {
        r.reals(p.weight.data(), "weights");
        r.reals(p.bias, "biases");
    }
    const std::size_t enc_at = r.pos();
    const std::uint32_t n_enc = r.u32("encoding count");
    if (n_enc != m.encodings.size())
        throw FormatError("checkpoint: encoding count inconsistent with PAN mode at byte offset " + std::to_string(enc_at));
    for (auto& e : m.encodings) r.reals(e, "encodings");
    if (!r.done()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(r.pos()));

    for (const auto& p : m.layers)
        if (!all_finite(p.weight.data()) || !all_finite(p.bias)) throw FormatError("checkpoint: non-finite parameter");
    ckpt.model = std::move(m);
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace pan
