// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_PNG_IO_HPP
#define QDR_PNG_IO_HPP

#include <string>

#include "qdr/image.hpp"

namespace qdr {

/// 8-bit PNG round trip. Float values are quantized with round-half-up to
/// [0,255]; writes are byte-stable for identical inputs (fixed filter and
/// compression settings).
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

} // namespace qdr

#endif
