#pragma once

#include <string>

#include "dcpt/image.hpp"

namespace dcpt {

// 8-bit RGB PNG; values quantized with round(v*255).
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

}  // namespace dcpt
