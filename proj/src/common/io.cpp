#include "mpr/common/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mpr::io {

void require_little_endian() {
    if constexpr (std::endian::native != std::endian::little) {
        throw std::runtime_error("blob I/O requires a little-endian host");
    }
}

std::vector<float> read_f32_blob(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open blob file: " + path);
    const std::streamsize bytes = in.tellg();
    if (bytes % 4 != 0) {
        throw std::runtime_error("truncated float32 blob (size not a multiple of 4): " + path);
    }
    std::vector<float> values(static_cast<std::size_t>(bytes) / 4);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()), bytes);
    if (!in) throw std::runtime_error("failed reading blob file: " + path);
    return values;
}

void write_f32_blob(const std::string& path, const std::vector<float>& values) {
    require_little_endian();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write blob file: " + path);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * 4));
    if (!out) throw std::runtime_error("failed writing blob file: " + path);
}

FeatureImageBlob read_feature_image(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open feature-image file: " + path);
    const std::streamsize bytes = in.tellg();
    in.seekg(0);
    FeatureImageBlob img;
    if (bytes < 12) throw std::runtime_error("truncated feature-image header: " + path);
    std::int32_t hdr[3];
    in.read(reinterpret_cast<char*>(hdr), 12);
    img.h = hdr[0];
    img.w = hdr[1];
    img.c = hdr[2];
    if (img.h <= 0 || img.w <= 0 || img.c <= 0) {
        throw std::runtime_error("invalid feature-image dimensions in " + path);
    }
    const std::int64_t count = std::int64_t(img.h) * img.w * img.c;
    if (bytes != 12 + count * 4) {
        throw std::runtime_error("feature-image payload size mismatch in " + path);
    }
    img.values.resize(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(img.values.data()), count * 4);
    if (!in) throw std::runtime_error("failed reading feature-image file: " + path);
    return img;
}

void write_feature_image(const std::string& path, const FeatureImageBlob& img) {
    require_little_endian();
    if (img.values.size() != std::size_t(img.h) * img.w * img.c) {
        throw std::runtime_error("feature-image value count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write feature-image file: " + path);
    const std::int32_t hdr[3] = {img.h, img.w, img.c};
    out.write(reinterpret_cast<const char*>(hdr), 12);
    out.write(reinterpret_cast<const char*>(img.values.data()),
              static_cast<std::streamsize>(img.values.size() * 4));
    if (!out) throw std::runtime_error("failed writing feature-image file: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

}  // namespace mpr::io
