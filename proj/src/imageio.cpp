#include <pnkit/imageio.hpp>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace pnkit {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) raise(Errc::unreadable_file, "cannot open " + path);
    return f;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

RgbImage load_png_file(std::FILE* fp, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(Errc::unreadable_file, "libpng init failed for " + path);
    }
    RgbImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(Errc::unreadable_file, "corrupt PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_impl(const std::string& path, int width, int height, int color_type,
                    const std::uint8_t* data, std::size_t stride) {
    FilePtr fp = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        raise(Errc::unreadable_file, "libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(Errc::unreadable_file, "PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(data + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// JPEG
// ---------------------------------------------------------------------------

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(mgr->jump, 1);
}

RgbImage load_jpeg_file(std::FILE* fp, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        raise(Errc::unreadable_file, "corrupt JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    RgbImage img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.data.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

// ---------------------------------------------------------------------------
// BMP (uncompressed 8/24/32-bit, the variants PH2-style corpora use)
// ---------------------------------------------------------------------------

std::uint32_t rd_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

RgbImage load_bmp_file(std::FILE* fp, const std::string& path) {
    std::fseek(fp, 0, SEEK_END);
    const long size = std::ftell(fp);
    std::fseek(fp, 0, SEEK_SET);
    if (size < 54) raise(Errc::unreadable_file, "truncated BMP: " + path);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    if (std::fread(buf.data(), 1, buf.size(), fp) != buf.size())
        raise(Errc::unreadable_file, "short read on BMP: " + path);

    const std::uint32_t pixel_offset = rd_u32(&buf[10]);
    const std::uint32_t header_size = rd_u32(&buf[14]);
    if (header_size < 40) raise(Errc::unsupported_format, "unsupported BMP header: " + path);
    const std::int32_t w = static_cast<std::int32_t>(rd_u32(&buf[18]));
    std::int32_t h = static_cast<std::int32_t>(rd_u32(&buf[22]));
    const std::uint16_t bpp = rd_u16(&buf[28]);
    const std::uint32_t compression = rd_u32(&buf[30]);
    const bool top_down = h < 0;
    if (top_down) h = -h;
    if (w <= 0 || h <= 0) raise(Errc::unreadable_file, "bad BMP dimensions: " + path);
    if (compression != 0 || (bpp != 8 && bpp != 24 && bpp != 32))
        raise(Errc::unsupported_format, "unsupported BMP variant: " + path);

    const std::uint8_t* palette = nullptr;
    if (bpp == 8) {
        std::uint32_t colors = rd_u32(&buf[46]);
        if (colors == 0) colors = 256;
        if (14 + header_size + colors * 4 > buf.size())
            raise(Errc::unreadable_file, "truncated BMP palette: " + path);
        palette = &buf[14 + header_size];
    }

    const std::size_t row_bytes = (static_cast<std::size_t>(w) * bpp / 8 + 3) & ~std::size_t{3};
    if (pixel_offset + row_bytes * h > buf.size())
        raise(Errc::unreadable_file, "truncated BMP pixel data: " + path);

    RgbImage img(w, h);
    for (int y = 0; y < h; ++y) {
        const int src_y = top_down ? y : (h - 1 - y);
        const std::uint8_t* row = &buf[pixel_offset + row_bytes * src_y];
        std::uint8_t* dst = img.pixel(0, y);
        for (int x = 0; x < w; ++x) {
            if (bpp == 8) {
                const std::uint8_t* entry = palette + row[x] * 4;  // BGRA
                dst[0] = entry[2];
                dst[1] = entry[1];
                dst[2] = entry[0];
            } else {
                const std::uint8_t* px = row + x * (bpp / 8);  // BGR(A)
                dst[0] = px[2];
                dst[1] = px[1];
                dst[2] = px[0];
            }
            dst += 3;
        }
    }
    return img;
}

}  // namespace

RgbImage load_image(const std::string& path) {
    FilePtr fp = open_file(path, "rb");
    std::uint8_t magic[4] = {0, 0, 0, 0};
    const std::size_t got = std::fread(magic, 1, 4, fp.get());
    std::fseek(fp.get(), 0, SEEK_SET);
    if (got < 2) raise(Errc::unreadable_file, "file too short: " + path);

    if (magic[0] == 0x89 && magic[1] == 'P') return load_png_file(fp.get(), path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg_file(fp.get(), path);
    if (magic[0] == 'B' && magic[1] == 'M') return load_bmp_file(fp.get(), path);
    raise(Errc::unsupported_format, "not a PNG/JPEG/BMP file: " + path);
}

void save_png(const std::string& path, const RgbImage& img) {
    write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_RGB, img.data.data(),
                   static_cast<std::size_t>(img.width) * 3);
}

void save_png(const std::string& path, const GrayImage& img) {
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, bytes.data(),
                   static_cast<std::size_t>(img.width));
}

void save_png(const std::string& path, const BinaryImage& img) {
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = img.data[i] ? 255 : 0;
    write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, bytes.data(),
                   static_cast<std::size_t>(img.width));
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        raise(Errc::unreadable_file, "libpng init failed");
    }
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(Errc::unreadable_file, "PNG encode failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* vec = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            vec->insert(vec->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace pnkit
