#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace bionorm {

// FNV-1a 64-bit. Used to tie derived artifacts (index, checkpoint, tau)
// back to the exact input files they were produced from.
class Fingerprint {
public:
    static constexpr std::uint64_t kOffset = 14695981039346656037ull;
    static constexpr std::uint64_t kPrime = 1099511628211ull;

    Fingerprint() : state_(kOffset) {}

    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= p[i];
            state_ *= kPrime;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    void update_u64(std::uint64_t v) {
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        update(buf, 8);
    }

    void update_f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        update_u64(bits);
    }

    std::uint64_t value() const { return state_; }

private:
    std::uint64_t state_;
};

inline std::uint64_t fingerprint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for fingerprinting: " + path);
    Fingerprint fp;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        fp.update(buf, static_cast<std::size_t>(in.gcount()));
        if (!in) break;
    }
    return fp.value();
}

}  // namespace bionorm
