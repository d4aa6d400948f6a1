#ifndef EVFI_IMAGE_IO_HPP
#define EVFI_IMAGE_IO_HPP

#include <string>

#include "evfi/tensor.hpp"

namespace evfi {

// 8-bit PNG I/O for (3,H,W) RGB tensors in [0,1] and (H,W) grayscale maps.
void save_png(const std::string& path, const Tensor& rgb);
Tensor load_png(const std::string& path); // (3,H,W)

void save_gray_png(const std::string& path, const Tensor& gray); // (H,W) or (1,H,W)

} // namespace evfi

#endif
