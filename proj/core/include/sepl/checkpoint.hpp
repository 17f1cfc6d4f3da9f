#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "sepl/autograd.hpp"

namespace sepl {

// Named real arrays plus a JSON metadata header.
//
// Byte layout (all integers little-endian):
//   8 bytes   magic "SEPLCKPT"
//   u32       format version (1)
//   u64       header length H, then H bytes of UTF-8 JSON metadata
//   u64       array count
//   per array, in lexicographic name order:
//     u32 name length, name bytes, u64 rows, u64 cols,
//     rows*cols f64 values in row-major order
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Matrix> arrays;

    bool operator==(const Checkpoint& other) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sepl
