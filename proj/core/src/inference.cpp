#include "uwassess/inference.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "uwassess/common.hpp"
#include "uwassess/s2match.hpp"

namespace uwassess {

namespace {

Tensor image_to_batch(const ImageBuffer& img) {
    Tensor x = Tensor::zeros({1, img.channels, img.height, img.width});
    std::memcpy(x.data(), img.pixels.data(), img.pixels.size() * sizeof(double));
    return x;
}

Tensor mask_to_tensor(const ImageBuffer& m) {
    Tensor t = Tensor::zeros({m.height, m.width});
    std::memcpy(t.data(), m.pixels.data(), m.pixels.size() * sizeof(double));
    return t;
}

}  // namespace

Tensor predict_probs(Model& model, const ImageBuffer& image) {
    if (image.channels != 3) throw InvariantViolation("predict_probs expects a 3-channel image");
    const BackboneConfig& bb = model.config();
    const bool native = image.height == bb.input_h && image.width == bb.input_w;
    ImageBuffer in = native ? image : resize_bilinear(image, bb.input_h, bb.input_w);

    Graph g;
    Var probs = model.forward(g, image_to_batch(in));
    ImageBuffer pm = map_to_mask_image(probs->value, 0);
    if (!native) pm = resize_bilinear(pm, image.height, image.width);
    return mask_to_tensor(pm);
}

EvalResult evaluate_dataset(const Model& model, const DatasetManifest& data, const EvalOptions& opt) {
    if (data.labeled.empty()) throw ConfigError("evaluation dataset has no labeled images: " + data.root);
    if (opt.workers < 1) throw ConfigError("eval workers must be >= 1");
    if (opt.binarize_threshold <= 0.0 || opt.binarize_threshold >= 1.0)
        throw ConfigError("binarize threshold must lie strictly inside (0, 1)");

    const int64_t n = static_cast<int64_t>(data.labeled.size());
    const int64_t workers = std::min<int64_t>(opt.workers, n);

    std::vector<Tensor> probs(n), gts(n);
    std::vector<ConfusionCounts> image_counts(n);
    std::vector<std::exception_ptr> failures(workers);

    auto run_shard = [&](int64_t w) {
        try {
            Model local(model.config(), model.adaptation_config(), 0);
            copy_param_values(model.params(), local.params());
            for (int64_t i = w; i < n; i += workers) {
                ImageBuffer img = load_image(data.labeled[i].first);
                ImageBuffer gt = load_mask(data.labeled[i].second);
                Tensor p = predict_probs(local, img);
                Tensor t = mask_to_tensor(gt);
                accumulate(binarize(p, opt.binarize_threshold), t, image_counts[i]);
                probs[i] = std::move(p);
                gts[i] = std::move(t);
            }
        } catch (...) {
            failures[w] = std::current_exception();
        }
    };

    if (workers == 1) {
        run_shard(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int64_t w = 0; w < workers; ++w) pool.emplace_back(run_shard, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : failures)
        if (e) std::rethrow_exception(e);

    EvalResult res;
    res.images = n;
    if (opt.macro) {
        res.report = macro_average(image_counts);
    } else {
        ConfusionCounts total;
        for (const auto& c : image_counts) total += c;
        res.report = compute_metrics(total);
    }
    res.per_image_iou.reserve(n);
    for (const auto& c : image_counts) res.per_image_iou.push_back(compute_metrics(c).iou);
    res.curve = pr_curve(probs, gts, opt.thresholds);
    return res;
}

void save_npy(const std::string& path, const Tensor& t) {
    if (!t.defined()) throw InvariantViolation("save_npy: undefined tensor");
    std::ostringstream shape;
    shape << "(";
    for (size_t i = 0; i < t.shape().size(); ++i) {
        if (i) shape << ", ";
        shape << t.shape()[i];
    }
    if (t.shape().size() == 1) shape << ",";
    shape << ")";
    std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape.str() + ", }";
    size_t header_len = ((10 + dict.size() + 1 + 63) / 64) * 64 - 10;
    dict.resize(header_len - 1, ' ');
    dict.push_back('\n');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot open " + path + " for writing");
    const char magic[8] = {'\x93', 'N', 'U', 'M', 'P', 'Y', '\x01', '\x00'};
    out.write(magic, 8);
    uint16_t hlen = static_cast<uint16_t>(dict.size());
    char lenb[2] = {static_cast<char>(hlen & 0xff), static_cast<char>(hlen >> 8)};
    out.write(lenb, 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw PipelineError("failed writing " + path);
}

Tensor load_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw ConfigError(path + " is not an npy file");
    unsigned char lenb[2];
    in.read(reinterpret_cast<char*>(lenb), 2);
    size_t hlen = lenb[0] | (static_cast<size_t>(lenb[1]) << 8);
    std::string dict(hlen, '\0');
    in.read(dict.data(), static_cast<std::streamsize>(hlen));
    if (!in || dict.find("'<f8'") == std::string::npos || dict.find("False") == std::string::npos)
        throw ConfigError(path + ": only C-order f64 npy is supported");

    auto lp = dict.find('('), rp = dict.find(')');
    if (lp == std::string::npos || rp == std::string::npos) throw ConfigError(path + ": malformed npy header");
    std::vector<int64_t> shape;
    std::string inner = dict.substr(lp + 1, rp - lp - 1);
    std::istringstream ss(inner);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::istringstream num(tok);
        int64_t d;
        if (num >> d) shape.push_back(d);
    }
    if (shape.empty()) throw ConfigError(path + ": scalar npy not supported");
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw ConfigError(path + ": npy data truncated");
    return t;
}

}  // namespace uwassess
