#include "tpf/micronet.hpp"

#include "tpf/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace tpf::net {

namespace {

constexpr char kMagic[8] = {'T', 'P', 'F', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    template <typename T>
    T get() {
        unsigned char bytes[sizeof(T)];
        in_.read(reinterpret_cast<char*>(bytes), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
            throw Error(ErrorCode::ParseError, path_ + ": truncated checkpoint");
        }
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

private:
    std::istream& in_;
    std::string path_;
};

} // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    Writer w(out);
    const NetConfig& c = params.config;
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.fusion_channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.embed_dim));
    w.put<std::uint64_t>(c.seed);
    w.put<double>(c.lr0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.max_iters));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.batch));
    w.put<double>(c.poly_power);
    w.put<double>(c.init_std);

    const auto arrays = params.arrays();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
    for (const auto* a : arrays) {
        w.put<std::uint32_t>(1);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(a->size()));
        for (double v : *a) w.put<float>(static_cast<float>(v));
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path);
    char magic[sizeof(kMagic)] = {};
    in.read(magic, sizeof(magic));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorCode::ParseError, path + ": not a model checkpoint");
    }
    Reader r(in, path);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw Error(ErrorCode::ParseError, path + ": unsupported checkpoint version " + std::to_string(version));
    }
    NetConfig c;
    c.fusion_channels = static_cast<int>(r.get<std::uint32_t>());
    c.embed_dim = static_cast<int>(r.get<std::uint32_t>());
    c.seed = r.get<std::uint64_t>();
    c.lr0 = r.get<double>();
    c.max_iters = static_cast<int>(r.get<std::uint32_t>());
    c.batch = static_cast<int>(r.get<std::uint32_t>());
    c.poly_power = r.get<double>();
    c.init_std = r.get<double>();

    ModelParams params;
    try {
        params = ModelParams::zeros(c);
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, path + ": bad network config: " + e.what());
    }
    auto arrays = params.arrays();
    if (r.get<std::uint32_t>() != arrays.size()) throw Error(ErrorCode::ParseError, path + ": array count mismatch");
    for (auto* a : arrays) {
        const auto rank = r.get<std::uint32_t>();
        std::size_t elements = 1;
        for (std::uint32_t k = 0; k < rank; ++k) elements *= r.get<std::uint32_t>();
        if (elements != a->size()) throw Error(ErrorCode::ParseError, path + ": array shape mismatch");
        for (auto& v : *a) v = static_cast<double>(r.get<float>());
    }
    if (!params.all_finite()) throw Error(ErrorCode::NonFiniteParams, path + ": checkpoint holds NaN or Inf");
    return params;
}

void round_to_float32(ModelParams& params) {
    for (auto* a : params.arrays()) {
        for (auto& v : *a) v = static_cast<double>(static_cast<float>(v));
    }
}

} // namespace tpf::net
