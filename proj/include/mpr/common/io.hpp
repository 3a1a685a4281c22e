#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpr::io {

// All blob formats are little-endian. These helpers assume a little-endian
// host (checked once at startup of anything that touches blobs).
void require_little_endian();

std::vector<float> read_f32_blob(const std::string& path);
void write_f32_blob(const std::string& path, const std::vector<float>& values);

// Feature-image blob: header {H, W, C} as int32 LE, then H*W*C float32
// row-major, channel-last.
struct FeatureImageBlob {
    std::int32_t h = 0;
    std::int32_t w = 0;
    std::int32_t c = 0;
    std::vector<float> values;  // [h][w][c]
};

FeatureImageBlob read_feature_image(const std::string& path);
void write_feature_image(const std::string& path, const FeatureImageBlob& img);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mpr::io
