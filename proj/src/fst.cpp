#include "fsskit/fst.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fsskit {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'T', '1'};
constexpr std::uint8_t kDtypeReal32 = 0;
constexpr std::uint8_t kDtypeMaskU8 = 1;

void put_u32le(std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

class Reader {
public:
    explicit Reader(const std::filesystem::path& path)
        : path_(path), is_(path, std::ios::binary) {
        if (!is_)
            throw IoError("cannot open " + path.string());
    }

    std::size_t offset() const { return offset_; }

    void read_bytes(void* dst, std::size_t n, const char* what) {
        is_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw FormatError(path_.string() + ": truncated while reading " + what,
                              offset_ + static_cast<std::size_t>(is_.gcount()));
        offset_ += n;
    }

    std::vector<unsigned char> read_payload(std::size_t n, const char* what) {
        std::vector<unsigned char> buf(n);
        if (n) read_bytes(buf.data(), n, what);
        return buf;
    }

    std::uint8_t read_u8(const char* what) {
        std::uint8_t v;
        read_bytes(&v, 1, what);
        return v;
    }

    std::uint32_t read_u32le(const char* what) {
        unsigned char b[4];
        read_bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) |
               (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }

    void expect_eof() {
        char c;
        is_.read(&c, 1);
        if (is_.gcount() != 0)
            throw FormatError(path_.string() + ": trailing bytes after payload",
                              offset_);
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream is_;
    std::size_t offset_ = 0;
};

struct Header {
    std::uint8_t dtype;
    Shape shape;
};

Header read_header(Reader& r) {
    char magic[4];
    const std::size_t magic_at = r.offset();
    r.read_bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(r.path().string() + ": bad magic, expected \"FST1\"",
                          magic_at);
    const std::size_t dtype_at = r.offset();
    const std::uint8_t dtype = r.read_u8("dtype");
    if (dtype != kDtypeReal32 && dtype != kDtypeMaskU8)
        throw FormatError(r.path().string() + ": unknown dtype " +
                              std::to_string(dtype),
                          dtype_at);
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.read_u8("rank");
    if (rank == 0)
        throw FormatError(r.path().string() + ": rank must be >= 1", rank_at);
    std::vector<std::size_t> dims(rank);
    for (std::uint8_t i = 0; i < rank; ++i) {
        const std::size_t at = r.offset();
        const std::uint32_t d = r.read_u32le("extent");
        if (d == 0)
            throw FormatError(r.path().string() + ": zero extent", at);
        dims[i] = d;
    }
    return Header{dtype, Shape(std::move(dims))};
}

}  // namespace

void write_fst(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot create " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(kDtypeReal32));
    os.put(static_cast<char>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i)
        put_u32le(os, static_cast<std::uint32_t>(t.dim(i)));
    std::vector<unsigned char> payload(t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::uint32_t v = std::bit_cast<std::uint32_t>(t.data()[i]);
        payload[i * 4 + 0] = static_cast<unsigned char>(v & 0xff);
        payload[i * 4 + 1] = static_cast<unsigned char>((v >> 8) & 0xff);
        payload[i * 4 + 2] = static_cast<unsigned char>((v >> 16) & 0xff);
        payload[i * 4 + 3] = static_cast<unsigned char>((v >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    if (!os)
        throw IoError("write failed for " + path.string());
}

void write_fst(const std::filesystem::path& path, const BinaryMask& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot create " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(kDtypeMaskU8));
    os.put(2);
    put_u32le(os, static_cast<std::uint32_t>(m.height()));
    put_u32le(os, static_cast<std::uint32_t>(m.width()));
    os.write(reinterpret_cast<const char*>(m.bits().data()),
             static_cast<std::streamsize>(m.size()));
    if (!os)
        throw IoError("write failed for " + path.string());
}

Tensor read_fst_tensor(const std::filesystem::path& path) {
    Reader r(path);
    const Header h = read_header(r);
    if (h.dtype != kDtypeReal32)
        throw FormatError(path.string() + ": expected real32 dtype, found mask", 4);
    const std::size_t n = h.shape.numel();
    const std::vector<unsigned char> raw = r.read_payload(n * 4, "payload");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* b = raw.data() + i * 4;
        const std::uint32_t v = static_cast<std::uint32_t>(b[0]) |
                                (static_cast<std::uint32_t>(b[1]) << 8) |
                                (static_cast<std::uint32_t>(b[2]) << 16) |
                                (static_cast<std::uint32_t>(b[3]) << 24);
        data[i] = std::bit_cast<float>(v);
    }
    r.expect_eof();
    return Tensor(h.shape, std::move(data));
}

BinaryMask read_fst_mask(const std::filesystem::path& path) {
    Reader r(path);
    const Header h = read_header(r);
    if (h.dtype != kDtypeMaskU8)
        throw FormatError(path.string() + ": expected mask dtype, found real32", 4);
    if (h.shape.rank() != 2)
        throw FormatError(path.string() + ": masks must be rank-2, got rank " +
                              std::to_string(h.shape.rank()),
                          5);
    const std::size_t n = h.shape.numel();
    const std::size_t payload_at = r.offset();
    std::vector<unsigned char> raw = r.read_payload(n, "payload");
    for (std::size_t i = 0; i < n; ++i)
        if (raw[i] > 1)
            throw FormatError(path.string() + ": mask byte must be 0 or 1, got " +
                                  std::to_string(raw[i]),
                              payload_at + i);
    r.expect_eof();
    return BinaryMask(h.shape.dim(0), h.shape.dim(1),
                      std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

std::variant<Tensor, BinaryMask> read_fst(const std::filesystem::path& path) {
    {
        Reader probe(path);
        const Header h = read_header(probe);
        if (h.dtype == kDtypeMaskU8)
            return read_fst_mask(path);
    }
    return read_fst_tensor(path);
}

}  // namespace fsskit
