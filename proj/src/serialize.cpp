#include "effgcn/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace effgcn {

namespace {

constexpr std::uint32_t kContainerVersion = 1;
constexpr std::uint32_t kMaxDims = 255;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, std::uint64_t& offset, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated file while reading " + what, offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint8_t get_u8(std::istream& in, std::uint64_t& offset, const std::string& what) {
    char c;
    in.read(&c, 1);
    if (!in) throw FormatError("truncated file while reading " + what, offset);
    offset += 1;
    return static_cast<std::uint8_t>(c);
}

template <typename S>
void write_tensor(std::ostream& out, const Array<S>& a) {
    out.write("SKTN", 4);
    put_u32(out, kContainerVersion);
    out.put(std::is_same_v<S, float> ? '\x00' : '\x01');
    out.put(static_cast<char>(a.shape.size()));
    for (auto d : a.shape) {
        require(d > 0 && d <= 0xffffffffLL, "tensor dimension does not fit the container");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    static_assert(sizeof(S) == 4 || sizeof(S) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(a.ptr()),
                  static_cast<std::streamsize>(sizeof(S) * a.data.size()));
    } else {
        for (S v : a.data) {
            unsigned char bytes[sizeof(S)];
            std::memcpy(bytes, &v, sizeof(S));
            for (std::size_t i = 0; i < sizeof(S); ++i)
                out.put(static_cast<char>(bytes[sizeof(S) - 1 - i]));
        }
    }
}

AnyArray read_tensor(std::istream& in, std::uint64_t& offset) {
    char magic[4];
    const std::uint64_t magic_at = offset;
    in.read(magic, 4);
    if (!in) throw FormatError("truncated file while reading tensor magic", magic_at);
    offset += 4;
    if (std::memcmp(magic, "SKTN", 4) != 0)
        throw FormatError("bad tensor magic, expected SKTN", magic_at);
    const std::uint64_t version_at = offset;
    const std::uint32_t version = get_u32(in, offset, "tensor version");
    if (version != kContainerVersion)
        throw FormatError("unsupported tensor container version " + std::to_string(version),
                          version_at);
    const std::uint64_t dtype_at = offset;
    const std::uint8_t dtype = get_u8(in, offset, "dtype code");
    if (dtype > 1) throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_at);
    const std::uint8_t ndim = get_u8(in, offset, "rank");
    if (ndim > kMaxDims) throw FormatError("rank too large", offset - 1);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        const std::uint32_t d = get_u32(in, offset, "dimension " + std::to_string(i));
        if (d == 0) throw FormatError("zero-sized dimension", offset - 4);
        shape.push_back(static_cast<std::int64_t>(d));
        numel *= d;
        if (numel > (1ULL << 40)) throw FormatError("tensor payload implausibly large", offset - 4);
    }

    auto read_payload = [&](auto tag) -> AnyArray {
        using S = decltype(tag);
        Array<S> arr = Array<S>::uninit(shape);
        in.read(reinterpret_cast<char*>(arr.ptr()),
                static_cast<std::streamsize>(sizeof(S) * numel));
        if (static_cast<std::uint64_t>(in.gcount()) != sizeof(S) * numel)
            throw FormatError("truncated tensor payload",
                              offset + static_cast<std::uint64_t>(std::max<std::streamsize>(
                                           in.gcount(), 0)));
        offset += sizeof(S) * numel;
        if constexpr (std::endian::native != std::endian::little) {
            for (auto& v : arr.data) {
                unsigned char bytes[sizeof(S)];
                std::memcpy(bytes, &v, sizeof(S));
                for (std::size_t i = 0; i < sizeof(S) / 2; ++i)
                    std::swap(bytes[i], bytes[sizeof(S) - 1 - i]);
                std::memcpy(&v, bytes, sizeof(S));
            }
        }
        return arr;
    };
    return dtype == 0 ? read_payload(float{}) : read_payload(double{});
}

}  // namespace

void save_sktn(const std::string& path, const Array<float>& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    write_tensor(out, a);
}

void save_sktn(const std::string& path, const Array<double>& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    write_tensor(out, a);
}

AnyArray load_sktn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path, 0);
    std::uint64_t offset = 0;
    return read_tensor(in, offset);
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, AnyArray>>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    out.write("SKCK", 4);
    put_u32(out, kContainerVersion);
    for (const auto& [name, any] : entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        std::visit([&](const auto& arr) { write_tensor(out, arr); }, any);
    }
}

std::vector<std::pair<std::string, AnyArray>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path, 0);
    std::uint64_t offset = 0;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SKCK", 4) != 0)
        throw FormatError("bad checkpoint magic, expected SKCK", 0);
    offset += 4;
    const std::uint64_t version_at = offset;
    const std::uint32_t version = get_u32(in, offset, "checkpoint version");
    if (version != kContainerVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version),
                          version_at);
    std::vector<std::pair<std::string, AnyArray>> entries;
    while (true) {
        in.peek();
        if (in.eof()) break;
        const std::uint32_t name_len = get_u32(in, offset, "entry name length");
        if (name_len > (1u << 20)) throw FormatError("entry name implausibly long", offset - 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("truncated entry name", offset);
        offset += name_len;
        entries.emplace_back(std::move(name), read_tensor(in, offset));
    }
    return entries;
}

SequenceMeta load_meta_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path, 0);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("sidecar " + path + " is not valid JSON: " + e.what(), e.byte);
    }
    SequenceMeta meta;
    if (j.contains("label") && !j["label"].is_null()) meta.label = j["label"].get<int>();
    meta.valid_frames = j.value("valid_frames", 0);
    return meta;
}

void save_meta_json(const SequenceMeta& meta, const std::string& path) {
    nlohmann::json j;
    if (meta.label)
        j["label"] = *meta.label;
    else
        j["label"] = nullptr;
    j["valid_frames"] = meta.valid_frames;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path, 0);
    out << j.dump() << "\n";
}

}  // namespace effgcn
