#include <png.h>

#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <vector>

#include "kgcnn/imgcore.hpp"

namespace kgcnn::img {

ImageTensor load_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error(fmt::format("{}: no such file", path.string()));
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw DecodeError(fmt::format("{}: {}", path.string(), image.message));
    }
    const auto format = image.format;
    // 16-bit files report the linear flag; palette files report a colormap.
    if ((format & (PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR | PNG_FORMAT_FLAG_COLORMAP)) !=
        0) {
        png_image_free(&image);
        throw DecodeError(fmt::format(
            "{}: only 8-bit grayscale or RGB PNGs without alpha are supported", path.string()));
    }
    const int channels = (format & PNG_FORMAT_FLAG_COLOR) != 0 ? 3 : 1;
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError(fmt::format("{}: {}", path.string(), msg));
    }

    const int height = static_cast<int>(image.height);
    const int width = static_cast<int>(image.width);
    std::vector<double> data(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        data[i] = buffer[i] / 255.0;
    }
    return ImageTensor(height, width, channels, std::move(data));
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw std::invalid_argument(
            fmt::format("save_png: unsupported channel count {}", img.channels()));
    }
    std::vector<png_byte> buffer(img.size());
    const auto values = img.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        buffer[i] = quantize_byte(values[i]);
    }

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    // Encode to memory first so a failed write never leaves a half-written file.
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, buffer.data(), 0, nullptr)) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), image.message));
    }
    std::vector<png_byte> encoded(size);
    if (!png_image_write_to_memory(&image, encoded.data(), &size, 0, buffer.data(), 0,
                                   nullptr)) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), image.message));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    out.write(reinterpret_cast<const char*>(encoded.data()),
              static_cast<std::streamsize>(size));
    if (!out) {
        throw std::runtime_error(fmt::format("{}: write failed", path.string()));
    }
}

}  // namespace kgcnn::img
