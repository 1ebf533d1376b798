#include "memc/io.hpp"

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <png.h>

#include "memc/error.hpp"

namespace memc {

namespace {

constexpr double kFloMagic = 202021.25;
constexpr std::int64_t kMaxPixels = 100000000; // dimension overflow guard

// --- little-endian scalar packing -------------------------------------------

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
}

// Bounds-checked cursor over an input buffer.
class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, const char* what)
        : bytes_(bytes), what_(what) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t count, const char* field) const {
        if (remaining() < count) {
            throw IoError(std::string(what_) + ": truncated " + field);
        }
    }

    std::uint16_t u16(const char* field) {
        need(2, field);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_]) |
                                static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::int32_t i32(const char* field) { return static_cast<std::int32_t>(u32(field)); }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

    double f64(const char* field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string string(std::size_t len, const char* field) {
        need(len, field);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    const std::uint8_t* raw(std::size_t len, const char* field) {
        need(len, field);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += len;
        return p;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

} // namespace

// --- .flo --------------------------------------------------------------------

FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes, "flo");
    const float magic = r.f32("header");
    if (!std::isfinite(magic) || std::fabs(magic - kFloMagic) > 1e-3) {
        throw IoError("flo: bad magic number");
    }
    const std::int32_t w = r.i32("header");
    const std::int32_t h = r.i32("header");
    if (w <= 0 || h <= 0 || static_cast<std::int64_t>(w) * h > kMaxPixels) {
        throw IoError("flo: dimension overflow (" + std::to_string(w) + "x" +
                      std::to_string(h) + ")");
    }
    if (r.remaining() != static_cast<std::size_t>(8) * w * h) {
        throw IoError("flo: truncated body (expected " + std::to_string(8LL * w * h) +
                      " bytes, found " + std::to_string(r.remaining()) + ")");
    }
    FlowField flow(1, 2, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            flow.at(0, 0, y, x) = static_cast<double>(r.f32("body"));
            flow.at(0, 1, y, x) = static_cast<double>(r.f32("body"));
        }
    }
    return flow;
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    if (flow.n() != 1 || flow.c() != 2) {
        throw ShapeError("flo: flow must be 1x2xHxW, got " + flow.shape_str());
    }
    std::vector<std::uint8_t> out;
    out.reserve(12 + static_cast<std::size_t>(8) * flow.h() * flow.w());
    put_f32(out, static_cast<float>(kFloMagic));
    put_u32(out, static_cast<std::uint32_t>(flow.w()));
    put_u32(out, static_cast<std::uint32_t>(flow.h()));
    for (int y = 0; y < flow.h(); ++y) {
        for (int x = 0; x < flow.w(); ++x) {
            put_f32(out, static_cast<float>(flow.at(0, 0, y, x)));
            put_f32(out, static_cast<float>(flow.at(0, 1, y, x)));
        }
    }
    return out;
}

FlowField read_flo(const std::string& path) {
    return decode_flo(read_file(path));
}

void write_flo(const std::string& path, const FlowField& flow) {
    write_file_atomic(path, encode_flo(flow));
}

// --- PPM ---------------------------------------------------------------------

namespace {

std::uint8_t quantize(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
}

// Header token reader: skips whitespace and '#' comments.
class PpmHeader {
public:
    PpmHeader(const std::vector<std::uint8_t>& bytes, std::size_t pos)
        : bytes_(bytes), pos_(pos) {}

    long next_int() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
            throw IoError("ppm: malformed header");
        }
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > kMaxPixels) {
                throw IoError("ppm: dimension overflow");
            }
            ++pos_;
        }
        return v;
    }

    // Exactly one whitespace byte separates the header from the raster.
    std::size_t body_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw IoError("ppm: malformed header");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
};

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
    PpmHeader header(bytes, 2); // past "P6"
    const long w = header.next_int();
    const long h = header.next_int();
    const long maxval = header.next_int();
    if (w <= 0 || h <= 0 || w * h > kMaxPixels) {
        throw IoError("ppm: dimension overflow");
    }
    if (maxval != 255) {
        throw IoError("ppm: unsupported bit depth (maxval " + std::to_string(maxval) +
                      ", only 255 supported)");
    }
    const std::size_t body = header.body_offset();
    const std::size_t expected = static_cast<std::size_t>(3) * w * h;
    if (bytes.size() < body || bytes.size() - body < expected) {
        throw IoError("ppm: truncated raster");
    }
    Tensor img(1, 3, static_cast<int>(h), static_cast<int>(w));
    const std::uint8_t* p = bytes.data() + body;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(0, c, y, x) = static_cast<double>(*p++) / 255.0;
            }
        }
    }
    return img;
}

} // namespace

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.n() != 1 || image.c() != 3) {
        throw ShapeError("ppm: image must be 1x3xHxW, got " + image.shape_str());
    }
    const std::string header =
        "P6\n" + std::to_string(image.w()) + " " + std::to_string(image.h()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<std::size_t>(3) * image.h() * image.w());
    for (int y = 0; y < image.h(); ++y) {
        for (int x = 0; x < image.w(); ++x) {
            for (int c = 0; c < 3; ++c) {
                out.push_back(quantize(image.at(0, c, y, x)));
            }
        }
    }
    return out;
}

// --- PNG ---------------------------------------------------------------------

namespace {

struct PngReadState {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos;
    bool overrun = false;
};

extern "C" void png_mem_read(png_structp png, png_bytep out, png_size_t count) {
    auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (state->pos + count > state->bytes->size()) {
        state->overrun = true;
        png_error(png, "read past end of buffer");
        return;
    }
    std::memcpy(out, state->bytes->data() + state->pos, count);
    state->pos += count;
}

extern "C" void png_mem_write(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

extern "C" void png_mem_flush(png_structp) {}

extern "C" void png_quiet_warning(png_structp, png_const_charp) {}

Tensor decode_png(const std::vector<std::uint8_t>& bytes) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("png: reader allocation failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: reader allocation failed");
    }
    png_set_error_fn(png, png_get_error_ptr(png), nullptr, png_quiet_warning);

    PngReadState state{&bytes, 0};
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> pixels;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: malformed file");
    }
    png_set_read_fn(png, &state, png_mem_read);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: unsupported bit depth 16 (only 8-bit supported)");
    }
    if (static_cast<std::int64_t>(w) * h > kMaxPixels || w == 0 || h == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: dimension overflow");
    }

    // Normalize palette/gray/low-depth input to 8-bit RGB.
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    png_set_strip_alpha(png);
    if (depth < 8) {
        png_set_packing(png);
    }
    png_read_update_info(png, info);

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    if (row_bytes < static_cast<std::size_t>(3) * w) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: unexpected row layout");
    }
    pixels.assign(row_bytes * h, 0);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * row_bytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor img(1, 3, static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(y) * row_bytes;
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(0, c, static_cast<int>(y), static_cast<int>(x)) =
                    static_cast<double>(row[3 * x + c]) / 255.0;
            }
        }
    }
    return img;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Tensor& image) {
    if (image.n() != 1 || image.c() != 3) {
        throw ShapeError("png: image must be 1x3xHxW, got " + image.shape_str());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("png: writer allocation failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: writer allocation failed");
    }
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> raster(static_cast<std::size_t>(3) * image.h() * image.w());
    std::vector<png_bytep> rows(image.h());
    for (int y = 0; y < image.h(); ++y) {
        rows[y] = raster.data() + static_cast<std::size_t>(3) * image.w() * y;
        for (int x = 0; x < image.w(); ++x) {
            for (int c = 0; c < 3; ++c) {
                rows[y][3 * x + c] = quantize(image.at(0, c, y, x));
            }
        }
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: encoding failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    png_set_IHDR(png, info, image.w(), image.h(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Tensor decode_image(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t png_sig[4] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        return decode_ppm(bytes);
    }
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), png_sig, 4) == 0) {
        return decode_png(bytes);
    }
    throw IoError("image: unrecognized format (expected PPM P6 or PNG)");
}

Tensor read_image(const std::string& path) {
    return decode_image(read_file(path));
}

void write_image(const std::string& path, const Tensor& image) {
    const std::filesystem::path p(path);
    const std::string ext = p.extension().string();
    if (ext == ".ppm") {
        write_file_atomic(path, encode_ppm(image));
    } else if (ext == ".png") {
        write_file_atomic(path, encode_png(image));
    } else {
        throw IoError("image: unsupported output extension '" + ext +
                      "' (use .ppm or .png)");
    }
}

// --- Model container -----------------------------------------------------------

void write_model(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'E', 'M', 'C'});
    put_u32(out, 1); // version
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) {
            throw IoError("model: tensor name too long");
        }
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.n()));
        put_u32(out, static_cast<std::uint32_t>(t.c()));
        put_u32(out, static_cast<std::uint32_t>(t.h()));
        put_u32(out, static_cast<std::uint32_t>(t.w()));
        for (std::size_t i = 0; i < t.size(); ++i) {
            put_f64(out, t[i]);
        }
    }
    write_file_atomic(path, out);
}

std::map<std::string, Tensor> read_model(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    Reader r(bytes, "model");
    const std::string magic = r.string(4, "magic");
    if (magic != "MEMC") {
        throw IoError("model: bad magic");
    }
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw IoError("model: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("tensor count");
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("tensor name");
        const std::string name = r.string(name_len, "tensor name");
        const std::uint32_t n = r.u32("dims");
        const std::uint32_t c = r.u32("dims");
        const std::uint32_t h = r.u32("dims");
        const std::uint32_t w = r.u32("dims");
        const std::uint64_t elems = static_cast<std::uint64_t>(n) * c * h * w;
        if (elems > static_cast<std::uint64_t>(kMaxPixels)) {
            throw IoError("model: dimension overflow in tensor '" + name + "'");
        }
        Tensor t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
                 static_cast<int>(w));
        r.need(8 * elems, "tensor data");
        for (std::uint64_t e = 0; e < elems; ++e) {
            t[e] = r.f64("tensor data");
        }
        if (!out.emplace(name, std::move(t)).second) {
            throw IoError("model: duplicate tensor name '" + name + "'");
        }
    }
    if (r.remaining() != 0) {
        throw IoError("model: trailing bytes after last tensor");
    }
    return out;
}

void save_pipeline(const std::string& path, const Pipeline& pipeline) {
    std::map<std::string, Tensor> tensors;
    tensors.emplace("__config__", encode_config(pipeline.config()));
    for (const std::string& name : pipeline.params().names()) {
        tensors.emplace(name, pipeline.params().get(name));
    }
    write_model(path, tensors);
}

Pipeline load_pipeline(const std::string& path) {
    std::map<std::string, Tensor> tensors = read_model(path);
    auto it = tensors.find("__config__");
    if (it == tensors.end()) {
        throw IoError("model: missing __config__ record");
    }
    const PipelineConfig config = decode_config(it->second);
    tensors.erase(it);
    ad::ParamStore store;
    for (auto& [name, t] : tensors) {
        store.add(name, std::move(t));
    }
    return Pipeline(config, std::move(store));
}

// --- Raw file helpers ----------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read error on '" + path + "'");
    }
    return bytes;
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const std::string tmp = path + ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp + "' for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::filesystem::remove(tmp);
            throw IoError("write error on '" + tmp + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
    }
}

} // namespace memc
