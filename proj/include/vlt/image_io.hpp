#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlt/tensor.hpp"

namespace vlt {

struct RgbImage {
    int h = 0, w = 0;
    std::vector<unsigned char> pixels;  // h*w*3, row-major RGB
};

struct ByteMask {
    int h = 0, w = 0;
    std::vector<unsigned char> pixels;  // h*w, 0/1
};

void write_ppm(const std::string& path, const RgbImage& img);   // binary P6
RgbImage read_ppm(const std::string& path);
void write_pbm(const std::string& path, const ByteMask& mask);  // binary P4, 1 = foreground
ByteMask read_pbm(const std::string& path);
void write_pgm(const std::string& path, int h, int w, const std::vector<unsigned char>& gray);  // binary P5

// [H, W, 3] in [0,1]
Tensor image_to_tensor(const RgbImage& img);
// [H, W] of {0,1}
Tensor mask_to_tensor(const ByteMask& mask);

// Raw float32 dump with a small text header: "dims H W\nendianness little\n".
void write_raw_float32(const std::string& path, const Tensor& t);

}  // namespace vlt
