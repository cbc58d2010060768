#ifndef SSU_IMAGE_IO_HPP_
#define SSU_IMAGE_IO_HPP_

#include <string>

#include "ssu/tensor.hpp"

namespace ssu {

// 8-bit grayscale PNG <-> [1,H,W] tensor in [0,1]. Values are quantized to
// 255 levels on write; anything that is not an 8-bit grayscale PNG is an
// ingestion error on read.
Tensor read_image_gray(const std::string& path);
void write_image_gray(const Tensor& image, const std::string& path);

// 8-bit RGB PNG from a [3,H,W] tensor in [0,1] (overlays).
void write_image_rgb(const Tensor& image, const std::string& path);

// Raw float plane: 16-byte header (magic "SSUF", u32 dtype=0, u32 H, u32 W)
// followed by H*W little-endian float32, row-major.
Tensor read_raw_plane(const std::string& path);
void write_raw_plane(const Tensor& plane, const std::string& path);

// Linear rescale of an arbitrary map to 8-bit grayscale plus a
// "<path>.minmax.txt" sidecar recording the original range.
void write_map_rescaled(const Tensor& map, const std::string& png_path);

}  // namespace ssu

#endif  // SSU_IMAGE_IO_HPP_
