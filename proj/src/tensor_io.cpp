#include "tmdit/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace tmdit {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

const char* magic_of(ContainerKind kind) { return kind == ContainerKind::checkpoint ? "TMCK" : "TMLT"; }

class Writer {
public:
    template <class T>
    void put(T v) {
        char raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        buf.insert(buf.end(), raw, raw + sizeof(T));
    }
    void bytes(const std::string& s) { buf.insert(buf.end(), s.begin(), s.end()); }

    std::vector<char> buf;
};

class Reader {
public:
    explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw IoError("container truncated");
    }
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Container::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw IoError("container has no tensor named '" + name + "'");
}

void write_container(const std::filesystem::path& path, ContainerKind kind, const Container& c) {
    Writer w;
    w.bytes(magic_of(kind));
    w.put<std::uint32_t>(kContainerVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.config.size()));
    w.bytes(c.config);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : t.data()) w.put<float>(static_cast<float>(v));
    }
    w.put<std::uint64_t>(c.rng_seed);
    w.put<std::uint64_t>(c.rng_counter);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Container read_container(const std::filesystem::path& path, ContainerKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
    if (r.bytes(4) != magic_of(kind)) throw IoError("'" + path.string() + "' is not a " + magic_of(kind) + " container");
    if (const auto v = r.get<std::uint32_t>(); v != kContainerVersion) {
        throw IoError("unsupported container version " + std::to_string(v));
    }
    Container c;
    c.config = r.bytes(r.get<std::uint32_t>());
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t j = 0; j < rank; ++j) shape.push_back(r.get<std::uint32_t>());
        std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : values) v = r.get<float>();
        c.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    c.rng_seed = r.get<std::uint64_t>();
    c.rng_counter = r.get<std::uint64_t>();
    if (!r.done()) throw IoError("trailing bytes after container payload");
    return c;
}

}  // namespace tmdit
