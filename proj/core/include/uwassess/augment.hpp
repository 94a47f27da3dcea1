#pragma once

#include "uwassess/common.hpp"
#include "uwassess/image.hpp"

namespace uwassess {

struct AugmentConfig {
    double resize_lo = 0.75;
    double resize_hi = 1.25;
    int64_t crop_h = 64;
    int64_t crop_w = 64;
    double hflip_prob = 0.5;
    double jitter_prob = 0.8;
    double jitter_lo = 0.5;   // brightness/contrast/saturation factor range
    double jitter_hi = 1.5;
    double hue_lo = -0.25;    // fraction of the hue circle
    double hue_hi = 0.25;
    double gray_prob = 0.1;
    double blur_prob = 0.5;
    double blur_sigma_lo = 0.1;
    double blur_sigma_hi = 2.0;

    void validate() const;
};

// Enough to replay the weak transform on another aligned raster.
struct GeometryRecord {
    double scale = 1.0;
    int64_t resized_h = 0;
    int64_t resized_w = 0;
    int64_t y0 = 0;
    int64_t x0 = 0;
    bool flip = false;
};

struct WeakAugmentResult {
    ImageBuffer image;
    ImageBuffer mask;  // valid only when has_mask
    bool has_mask = false;
    GeometryRecord geom;
};

// Resize by a random scale, random crop (reflect-padded if short), optional hflip.
// The mask, when present, rides through the identical geometry (nearest resize).
WeakAugmentResult weak_augment(const ImageBuffer& image, const ImageBuffer* mask, const AugmentConfig& cfg,
                               Rng& rng);

// Photometric only, applied on top of a weak view: color jitter, grayscale, blur.
ImageBuffer strong_augment(const ImageBuffer& weak_image, const AugmentConfig& cfg, Rng& rng);

}  // namespace uwassess
