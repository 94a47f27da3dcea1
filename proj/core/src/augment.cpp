#include "uwassess/augment.hpp"

#include <cmath>

namespace uwassess {

void AugmentConfig::validate() const {
    if (resize_lo > resize_hi || resize_lo <= 0.0) throw ConfigError("augment: bad resize scale range");
    if (crop_h <= 0 || crop_w <= 0) throw ConfigError("augment: crop size must be positive");
    for (double p : {hflip_prob, jitter_prob, gray_prob, blur_prob}) {
        if (p < 0.0 || p > 1.0) throw ConfigError("augment: probability outside [0,1]");
    }
    if (jitter_lo > jitter_hi || hue_lo > hue_hi) throw ConfigError("augment: jitter range unordered");
    if (blur_sigma_lo > blur_sigma_hi || blur_sigma_lo <= 0.0) throw ConfigError("augment: bad blur sigma range");
}

WeakAugmentResult weak_augment(const ImageBuffer& image, const ImageBuffer* mask, const AugmentConfig& cfg,
                               Rng& rng) {
    if (mask && (mask->height != image.height || mask->width != image.width)) {
        throw InvariantViolation("weak_augment: mask size differs from image");
    }
    WeakAugmentResult res;
    res.geom.scale = rng.uniform(cfg.resize_lo, cfg.resize_hi);
    res.geom.resized_h = std::max<int64_t>(1, std::llround(res.geom.scale * static_cast<double>(image.height)));
    res.geom.resized_w = std::max<int64_t>(1, std::llround(res.geom.scale * static_cast<double>(image.width)));

    ImageBuffer scaled = resize_bilinear(image, res.geom.resized_h, res.geom.resized_w);
    scaled = pad_reflect(scaled, cfg.crop_h, cfg.crop_w);
    res.geom.y0 = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(scaled.height - cfg.crop_h + 1)));
    res.geom.x0 = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(scaled.width - cfg.crop_w + 1)));
    res.image = crop(scaled, res.geom.y0, res.geom.x0, cfg.crop_h, cfg.crop_w);
    res.geom.flip = rng.bernoulli(cfg.hflip_prob);
    if (res.geom.flip) res.image = hflip(res.image);

    if (mask) {
        ImageBuffer m = resize_nearest(*mask, res.geom.resized_h, res.geom.resized_w);
        m = pad_reflect(m, cfg.crop_h, cfg.crop_w);
        m = crop(m, res.geom.y0, res.geom.x0, cfg.crop_h, cfg.crop_w);
        if (res.geom.flip) m = hflip(m);
        res.mask = std::move(m);
        res.has_mask = true;
    }
    return res;
}

ImageBuffer strong_augment(const ImageBuffer& weak_image, const AugmentConfig& cfg, Rng& rng) {
    ImageBuffer img = weak_image;
    if (rng.bernoulli(cfg.jitter_prob)) {
        adjust_brightness(img, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
        adjust_contrast(img, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
        adjust_saturation(img, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
        adjust_hue(img, rng.uniform(cfg.hue_lo, cfg.hue_hi));
    }
    if (rng.bernoulli(cfg.gray_prob)) to_grayscale(img);
    if (rng.bernoulli(cfg.blur_prob)) gaussian_blur(img, rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi));
    return img;
}

}  // namespace uwassess
