#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace sepl {

class Fnv1a {
public:
    void update(const void* data, std::size_t size) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            state_ ^= bytes[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view text) { update(text.data(), text.size()); }
    template <typename T>
    void update(std::span<const T> values) {
        update(values.data(), values.size_bytes());
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view text) {
    Fnv1a h;
    h.update(text);
    return h.digest();
}

// Derives an independent stream seed from a run seed and a component name.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    Fnv1a h;
    h.update(&seed, sizeof(seed));
    h.update(name);
    return h.digest();
}

}  // namespace sepl
