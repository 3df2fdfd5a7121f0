#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semimatch/tensor.hpp"

namespace semimatch {

// 8-bit interleaved RGB image; the storage format for datasets and plots.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

ImageU8 make_image(int height, int width, std::uint8_t fill = 0);

// [3,H,W] tensor in [0,1] <-> 8-bit RGB. tensor_to_image clamps then rounds.
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);

// text entries become tEXt chunks (used to stamp artifacts with run metadata).
void write_png(const std::string& path, const ImageU8& img,
               const std::vector<std::pair<std::string, std::string>>& text = {});
ImageU8 read_png(const std::string& path);

}  // namespace semimatch
