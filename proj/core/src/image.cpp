#include "uwassess/image.hpp"

#include "uwassess/common.hpp"
#include "uwassess/graph.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace uwassess {

namespace {

double clamp01v(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double gray_at(const ImageBuffer& img, int64_t y, int64_t x) {
    if (img.channels == 1) return img.at(0, y, x);
    return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw ConfigError("cannot read image: " + path);
    ImageBuffer img(3, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV loads BGR
            img.at(0, y, x) = row[x][2] / 255.0;
            img.at(1, y, x) = row[x][1] / 255.0;
            img.at(2, y, x) = row[x][0] / 255.0;
        }
    }
    return img;
}

namespace {

cv::Mat to_mat_8bit(const ImageBuffer& img) {
    if (img.channels != 1 && img.channels != 3) throw InvariantViolation("expected a 1- or 3-channel image");
    cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), img.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            if (img.channels == 3) {
                auto& px = m.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
                px[2] = static_cast<uint8_t>(std::lround(clamp01v(img.at(0, y, x)) * 255.0));
                px[1] = static_cast<uint8_t>(std::lround(clamp01v(img.at(1, y, x)) * 255.0));
                px[0] = static_cast<uint8_t>(std::lround(clamp01v(img.at(2, y, x)) * 255.0));
            } else {
                m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) =
                    static_cast<uint8_t>(std::lround(clamp01v(img.at(0, y, x)) * 255.0));
            }
        }
    return m;
}

}  // namespace

void save_image(const std::string& path, const ImageBuffer& img) {
    if (!cv::imwrite(path, to_mat_8bit(img))) throw PipelineError("cannot write image: " + path);
}

std::string encode_png(const ImageBuffer& img) {
    std::vector<uchar> buf;
    if (!cv::imencode(".png", to_mat_8bit(img), buf)) throw PipelineError("png encoding failed");
    return std::string(buf.begin(), buf.end());
}

ImageBuffer load_mask(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw ConfigError("cannot read mask: " + path);
    ImageBuffer mask(1, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const uint8_t* row = m.ptr<uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) mask.at(0, y, x) = row[x] >= 128 ? 1.0 : 0.0;
    }
    return mask;
}

void save_mask(const std::string& path, const ImageBuffer& mask) {
    if (mask.channels != 1) throw InvariantViolation("save_mask: expected single channel");
    cv::Mat m(static_cast<int>(mask.height), static_cast<int>(mask.width), CV_8UC1);
    for (int64_t y = 0; y < mask.height; ++y)
        for (int64_t x = 0; x < mask.width; ++x)
            m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) = mask.at(0, y, x) >= 0.5 ? 255 : 0;
    if (!cv::imwrite(path, m)) throw PipelineError("cannot write mask: " + path);
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int64_t out_h, int64_t out_w) {
    ImageBuffer out(img.channels, out_h, out_w);
    const BilinearAxis ay = bilinear_axis(img.height, out_h);
    const BilinearAxis ax = bilinear_axis(img.width, out_w);
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t y = 0; y < out_h; ++y) {
            const int64_t y0 = ay.i0[y], y1 = ay.i1[y];
            const double fy = ay.frac[y];
            for (int64_t x = 0; x < out_w; ++x) {
                const int64_t x0 = ax.i0[x], x1 = ax.i1[x];
                const double fx = ax.frac[x];
                out.at(c, y, x) = (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                                  fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
            }
        }
    return out;
}

ImageBuffer resize_nearest(const ImageBuffer& img, int64_t out_h, int64_t out_w) {
    ImageBuffer out(img.channels, out_h, out_w);
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t y = 0; y < out_h; ++y) {
            int64_t sy = std::min<int64_t>(img.height - 1, y * img.height / out_h);
            for (int64_t x = 0; x < out_w; ++x) {
                int64_t sx = std::min<int64_t>(img.width - 1, x * img.width / out_w);
                out.at(c, y, x) = img.at(c, sy, sx);
            }
        }
    return out;
}

ImageBuffer crop(const ImageBuffer& img, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) {
        throw InvariantViolation("crop: window out of bounds");
    }
    ImageBuffer out(img.channels, h, w);
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

ImageBuffer pad_reflect(const ImageBuffer& img, int64_t min_h, int64_t min_w) {
    if (img.height >= min_h && img.width >= min_w) return img;
    const int64_t oh = std::max(img.height, min_h), ow = std::max(img.width, min_w);
    ImageBuffer out(img.channels, oh, ow);
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t y = 0; y < oh; ++y) {
            const int64_t sy = reflect_index(y, img.height);
            for (int64_t x = 0; x < ow; ++x) out.at(c, y, x) = img.at(c, sy, reflect_index(x, img.width));
        }
    return out;
}

ImageBuffer hflip(const ImageBuffer& img) {
    ImageBuffer out(img.channels, img.height, img.width);
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

void adjust_brightness(ImageBuffer& img, double factor) {
    for (auto& v : img.pixels) v = clamp01v(v * factor);
}

void adjust_contrast(ImageBuffer& img, double factor) {
    double mean = 0.0;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) mean += gray_at(img, y, x);
    mean /= static_cast<double>(img.height * img.width);
    for (auto& v : img.pixels) v = clamp01v(factor * v + (1.0 - factor) * mean);
}

void adjust_saturation(ImageBuffer& img, double factor) {
    if (img.channels != 3) return;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            const double gr = gray_at(img, y, x);
            for (int64_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01v(factor * img.at(c, y, x) + (1.0 - factor) * gr);
        }
}

void adjust_hue(ImageBuffer& img, double delta_turns) {
    if (img.channels != 3) return;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
            const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
            const double d = mx - mn;
            double h = 0.0;
            if (d > 0.0) {
                if (mx == r) h = std::fmod((g - b) / d, 6.0);
                else if (mx == g) h = (b - r) / d + 2.0;
                else h = (r - g) / d + 4.0;
                h /= 6.0;
                if (h < 0.0) h += 1.0;
            }
            const double s = mx > 0.0 ? d / mx : 0.0;
            const double v = mx;
            h = std::fmod(h + delta_turns, 1.0);
            if (h < 0.0) h += 1.0;
            const double hh = h * 6.0;
            const int sector = static_cast<int>(hh) % 6;
            const double f = hh - std::floor(hh);
            const double p = v * (1.0 - s);
            const double q = v * (1.0 - s * f);
            const double t = v * (1.0 - s * (1.0 - f));
            switch (sector) {
                case 0: r = v; g = t; b = p; break;
                case 1: r = q; g = v; b = p; break;
                case 2: r = p; g = v; b = t; break;
                case 3: r = p; g = q; b = v; break;
                case 4: r = t; g = p; b = v; break;
                default: r = v; g = p; b = q; break;
            }
            img.at(0, y, x) = clamp01v(r);
            img.at(1, y, x) = clamp01v(g);
            img.at(2, y, x) = clamp01v(b);
        }
}

void to_grayscale(ImageBuffer& img) {
    if (img.channels != 3) return;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            const double gr = gray_at(img, y, x);
            img.at(0, y, x) = gr;
            img.at(1, y, x) = gr;
            img.at(2, y, x) = gr;
        }
}

void gaussian_blur(ImageBuffer& img, double sigma) {
    if (sigma <= 0.0) return;
    const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int64_t i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;

    ImageBuffer tmp = img;
    for (int64_t c = 0; c < img.channels; ++c) {
        // horizontal pass into tmp
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * img.at(c, y, reflect_index(x + i, img.width));
                tmp.at(c, y, x) = acc;
            }
        // vertical pass back into img
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(c, reflect_index(y + i, img.height), x);
                img.at(c, y, x) = clamp01v(acc);
            }
    }
}

void clamp01(ImageBuffer& img) {
    for (auto& v : img.pixels) v = clamp01v(v);
}

Tensor image_to_tensor(const ImageBuffer& img) {
    Tensor t{{img.channels, img.height, img.width}};
    std::copy(img.pixels.begin(), img.pixels.end(), t.data());
    return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
    if (t.rank() != 3) throw InvariantViolation("tensor_to_image: expected (C,H,W), got " + t.shape_str());
    ImageBuffer img(t.dim(0), t.dim(1), t.dim(2));
    std::copy(t.data(), t.data() + t.numel(), img.pixels.begin());
    return img;
}

ImageBuffer map_to_mask_image(const Tensor& t, int64_t batch_index) {
    if (t.rank() != 3) throw InvariantViolation("map_to_mask_image: expected (B,H,W), got " + t.shape_str());
    const int64_t h = t.dim(1), w = t.dim(2);
    ImageBuffer img(1, h, w);
    const double* src = t.data() + batch_index * h * w;
    std::copy(src, src + h * w, img.pixels.begin());
    return img;
}

}  // namespace uwassess
