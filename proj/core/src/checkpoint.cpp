#include "sepl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sepl/error.hpp"

namespace sepl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'E', 'P', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void read_doubles(double* dst, std::size_t count) {
        need(count * sizeof(double));
        std::memcpy(dst, bytes_.data() + pos_, count * sizeof(double));
        pos_ += count * sizeof(double);
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::operator==(const Checkpoint& other) const {
    if (meta != other.meta || arrays.size() != other.arrays.size()) return false;
    for (const auto& [name, m] : arrays) {
        const auto it = other.arrays.find(name);
        if (it == other.arrays.end() || it->second.rows() != m.rows() ||
            it->second.cols() != m.cols())
            return false;
        if (m.size() && std::memcmp(m.data(), it->second.data(), sizeof(double) * m.size()) != 0)
            return false;
    }
    return true;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string header = checkpoint.meta.dump();
    put<std::uint64_t>(out, header.size());
    out += header;
    put<std::uint64_t>(out, checkpoint.arrays.size());
    for (const auto& [name, m] : checkpoint.arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        out.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw CheckpointError("not a checkpoint (bad magic)");
    if (const auto v = in.get<std::uint32_t>(); v != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    Checkpoint cp;
    const auto header_len = in.get<std::uint64_t>();
    try {
        cp.meta = nlohmann::json::parse(in.get_bytes(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    const auto count = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint32_t>();
        std::string name = in.get_bytes(name_len);
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols)
            throw CheckpointError("implausible array shape for '" + name + "'");
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read_doubles(m.data(), static_cast<std::size_t>(rows * cols));
        cp.arrays.emplace(std::move(name), std::move(m));
    }
    if (!in.at_end()) throw CheckpointError("trailing bytes after checkpoint arrays");
    return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        const std::string bytes = encode_checkpoint(checkpoint);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return decode_checkpoint(buffer.str());
}

}  // namespace sepl
