#include "eretinex/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "byte_io.hpp"
#include "eretinex/error.hpp"

namespace eretinex {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace detail

namespace io {

namespace {

constexpr std::string_view kTensorMagic = "ERTX";
constexpr std::string_view kCheckpointMagic = "ERCK";
constexpr std::string_view kConfigMagic = "ERCF";

void write_tensor(detail::ByteWriter& w, const Tensor& t) {
    if (t.rank() > 255) throw Error(ErrorCode::InvalidArgument, "tensor rank exceeds 255");
    w.bytes(kTensorMagic);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "tensor dim exceeds u32");
        }
        w.u32(static_cast<std::uint32_t>(d));
    }
    for (float v : t.values()) w.f32(v);
}

Tensor read_tensor(detail::ByteReader& r) {
    r.expect_magic(kTensorMagic);
    std::size_t rank = r.u8("rank");
    Shape dims(rank);
    for (auto& d : dims) d = r.u32("dim");
    std::size_t n = shape_numel(dims);
    r.need(n * 4, "payload");
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32("payload");
    return Tensor(std::move(dims), std::move(values));
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    detail::ByteWriter w;
    write_tensor(w, tensor);
    return std::move(w.data());
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes.data(), bytes.size(), "ERTX");
    Tensor t = read_tensor(r);
    if (!r.at_end()) throw ParseError(ErrorCode::Truncated, r.offset(), "ERTX: trailing bytes");
    return t;
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
    detail::write_file(path, encode_tensor(tensor));
}

Tensor load_tensor(const std::filesystem::path& path) {
    return decode_tensor(detail::read_file(path));
}

std::size_t Checkpoint::element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.tensor.numel();
    return n;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    detail::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "parameter name too long: " + e.name);
        }
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name);
        write_tensor(w, e.tensor);
    }
    if (!ckpt.config_text.empty()) {
        w.bytes(kConfigMagic);
        w.u32(static_cast<std::uint32_t>(ckpt.config_text.size()));
        w.bytes(ckpt.config_text);
    }
    return std::move(w.data());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes.data(), bytes.size(), "ERCK");
    r.expect_magic(kCheckpointMagic);
    Checkpoint ckpt;
    std::uint32_t count = r.u32("count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t len = r.u16("name length");
        CheckpointEntry e;
        e.name = r.bytes(len, "name");
        e.tensor = read_tensor(r);
        ckpt.entries.push_back(std::move(e));
    }
    if (!r.at_end()) {
        r.expect_magic(kConfigMagic);
        std::size_t len = r.u32("config length");
        ckpt.config_text = r.bytes(len, "config text");
        if (!r.at_end()) throw ParseError(ErrorCode::Truncated, r.offset(), "ERCK: trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path));
}

template <class T>
Checkpoint to_checkpoint(const nn::ParameterList<T>& params, std::string config_text) {
    Checkpoint ckpt;
    ckpt.config_text = std::move(config_text);
    for (const auto& p : params.items()) ckpt.entries.push_back({p.name, p.tensor.template cast<float>()});
    return ckpt;
}

template <class T>
void apply_checkpoint(const Checkpoint& ckpt, nn::ParameterList<T>& params) {
    if (ckpt.entries.size() != params.items().size()) {
        throw Error(ErrorCode::MissingParameter,
                    "checkpoint has " + std::to_string(ckpt.entries.size()) +
                        " parameters, model expects " + std::to_string(params.items().size()));
    }
    for (auto& p : params.items()) {
        auto it = std::find_if(ckpt.entries.begin(), ckpt.entries.end(),
                               [&](const CheckpointEntry& e) { return e.name == p.name; });
        if (it == ckpt.entries.end()) {
            throw Error(ErrorCode::MissingParameter, "checkpoint lacks parameter " + p.name);
        }
        if (it->tensor.dims() != p.tensor.dims()) {
            throw Error(ErrorCode::ShapeMismatch, "parameter " + p.name + ": checkpoint shape " +
                                                      shape_str(it->tensor.dims()) + " vs model " +
                                                      shape_str(p.tensor.dims()));
        }
        auto dst = p.tensor.mutable_values();
        auto src = it->tensor.values();
        std::transform(src.begin(), src.end(), dst.begin(), [](float v) { return static_cast<T>(v); });
    }
}

template Checkpoint to_checkpoint<float>(const nn::ParameterList<float>&, std::string);
template Checkpoint to_checkpoint<double>(const nn::ParameterList<double>&, std::string);
template void apply_checkpoint<float>(const Checkpoint&, nn::ParameterList<float>&);
template void apply_checkpoint<double>(const Checkpoint&, nn::ParameterList<double>&);

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw Error(ErrorCode::ShapeMismatch, "PPM needs a [3,H,W] tensor, got " + shape_str(image.dims()));
    }
    std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + 3 * plane);
    auto v = image.values();
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            double x = std::clamp(static_cast<double>(v[c * plane + i]), 0.0, 1.0);
            out.push_back(static_cast<std::uint8_t>(std::floor(x * 255.0 + 0.5)));
        }
    }
    return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* field) {
        skip_space();
        std::size_t start = pos, value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) value = value * 10 + (bytes[pos++] - '0');
        if (pos == start) throw ParseError(ErrorCode::Truncated, pos, std::string("PPM: expected ") + field);
        return value;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw ParseError(ErrorCode::BadMagic, 0, "PPM: expected P6");
    }
    pos = 2;
    std::size_t w = number("width");
    std::size_t h = number("height");
    std::size_t maxval = number("maxval");
    if (maxval != 255) throw ParseError(ErrorCode::InvalidArgument, pos, "PPM: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw ParseError(ErrorCode::Truncated, pos, "PPM: missing header terminator");
    }
    ++pos;
    std::size_t plane = w * h;
    if (bytes.size() - pos < 3 * plane) throw ParseError(ErrorCode::Truncated, pos, "PPM: pixel data");
    std::vector<float> values(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) values[c * plane + i] = static_cast<float>(bytes[pos++]) / 255.0f;
    return Tensor({3, h, w}, std::move(values));
}

void save_ppm(const Tensor& image, const std::filesystem::path& path) {
    detail::write_file(path, encode_ppm(image));
}

Tensor load_ppm(const std::filesystem::path& path) { return decode_ppm(detail::read_file(path)); }

Tensor load_image(const std::filesystem::path& path) {
    return path.extension() == ".ppm" ? load_ppm(path) : load_tensor(path);
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
    if (path.extension() == ".ppm") {
        save_ppm(image, path);
    } else {
        save_tensor(image, path);
    }
}

}  // namespace io
}  // namespace eretinex
