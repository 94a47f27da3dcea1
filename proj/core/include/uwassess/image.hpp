#pragma once

#include "uwassess/tensor.hpp"

#include <string>
#include <vector>

namespace uwassess {

// CHW pixel buffer, values in [0,1]. 3 channels (RGB) for images, 1 for masks.
struct ImageBuffer {
    int64_t channels = 0;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<double> pixels;

    ImageBuffer() = default;
    ImageBuffer(int64_t c, int64_t h, int64_t w) : channels(c), height(h), width(w), pixels(c * h * w, 0.0) {}

    double& at(int64_t c, int64_t y, int64_t x) { return pixels[(c * height + y) * width + x]; }
    double at(int64_t c, int64_t y, int64_t x) const { return pixels[(c * height + y) * width + x]; }
    int64_t numel() const { return channels * height * width; }
};

// File I/O (PNG/JPEG by extension). Images load as 3-channel RGB in [0,1].
// Masks are single-channel; bytes >= 128 load as 1, else 0; saved as {0,255}.
ImageBuffer load_image(const std::string& path);
void save_image(const std::string& path, const ImageBuffer& img);
ImageBuffer load_mask(const std::string& path);
void save_mask(const std::string& path, const ImageBuffer& mask);
std::string encode_png(const ImageBuffer& img);  // 8-bit PNG bytes, in memory

ImageBuffer resize_bilinear(const ImageBuffer& img, int64_t out_h, int64_t out_w);
ImageBuffer resize_nearest(const ImageBuffer& img, int64_t out_h, int64_t out_w);
ImageBuffer crop(const ImageBuffer& img, int64_t y0, int64_t x0, int64_t h, int64_t w);
ImageBuffer pad_reflect(const ImageBuffer& img, int64_t min_h, int64_t min_w);
ImageBuffer hflip(const ImageBuffer& img);

// Photometric ops, torchvision semantics, clamped back to [0,1].
void adjust_brightness(ImageBuffer& img, double factor);
void adjust_contrast(ImageBuffer& img, double factor);
void adjust_saturation(ImageBuffer& img, double factor);
void adjust_hue(ImageBuffer& img, double delta_turns);
void to_grayscale(ImageBuffer& img);
void gaussian_blur(ImageBuffer& img, double sigma);
void clamp01(ImageBuffer& img);

Tensor image_to_tensor(const ImageBuffer& img);            // (C,H,W)
ImageBuffer tensor_to_image(const Tensor& t);              // from (C,H,W)
ImageBuffer map_to_mask_image(const Tensor& t, int64_t batch_index);  // (B,H,W) -> 1xHxW

}  // namespace uwassess
