#include "dems/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dems/oaa.hpp"
#include "dems/util.hpp"

namespace dems {

namespace fs = std::filesystem;

namespace {

cv::Mat read_gray(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw std::runtime_error("unreadable image file: " + path.string());
    return mat;
}

Image mat_to_image(const cv::Mat& mat) {
    Image img(mat.rows, mat.cols);
    for (int r = 0; r < mat.rows; ++r) {
        for (int c = 0; c < mat.cols; ++c) {
            img.at(r, c) = static_cast<float>(mat.at<std::uint8_t>(r, c)) / 255.0f;
        }
    }
    return img;
}

}  // namespace

Image read_image_8bit(const fs::path& path) { return mat_to_image(read_gray(path)); }

Mask read_mask_8bit(const fs::path& path, int target_height, int target_width) {
    cv::Mat mat = read_gray(path);
    if (target_height > 0 && target_width > 0 &&
        (mat.rows != target_height || mat.cols != target_width)) {
        cv::Mat resized;
        cv::resize(mat, resized, cv::Size(target_width, target_height), 0, 0,
                   cv::INTER_NEAREST);
        mat = resized;
    }
    Mask mask(mat.rows, mat.cols);
    for (int r = 0; r < mat.rows; ++r) {
        for (int c = 0; c < mat.cols; ++c) {
            mask.at(r, c) = mat.at<std::uint8_t>(r, c) > 127 ? 1 : 0;
        }
    }
    return mask;
}

void write_image_8bit(const fs::path& path, const Image& img) {
    cv::Mat mat(img.height, img.width, CV_8UC1);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            mat.at<std::uint8_t>(r, c) =
                static_cast<std::uint8_t>(std::lround(clamp01(img.at(r, c)) * 255.0f));
        }
    }
    atomic_write_file(path, [&](const fs::path& tmp) {
        if (!cv::imwrite(tmp.string(), mat)) {
            throw std::runtime_error("failed to write image: " + path.string());
        }
    });
}

void write_mask_8bit(const fs::path& path, const Mask& mask) {
    cv::Mat mat(mask.height, mask.width, CV_8UC1);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            mat.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
        }
    }
    atomic_write_file(path, [&](const fs::path& tmp) {
        if (!cv::imwrite(tmp.string(), mat)) {
            throw std::runtime_error("failed to write mask: " + path.string());
        }
    });
}

Image resize_bilinear(const Image& img, int height, int width) {
    if (img.height == height && img.width == width) return img;
    cv::Mat src(img.height, img.width, CV_32FC1, const_cast<float*>(img.data.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    Image out(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            out.at(r, c) = clamp01(dst.at<float>(r, c));
        }
    }
    return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
    if (mask.height == height && mask.width == width) return mask;
    cv::Mat src(mask.height, mask.width, CV_8UC1, const_cast<std::uint8_t*>(mask.data.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    Mask out(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            out.at(r, c) = dst.at<std::uint8_t>(r, c) ? 1 : 0;
        }
    }
    return out;
}

LoadedDataset load_dataset(const fs::path& root, int target_height, int target_width) {
    if (target_height <= 0 || target_width <= 0) {
        throw std::invalid_argument("load_dataset: target resolution must be positive");
    }
    const fs::path images_dir = root / "images";
    const fs::path masks_dir = root / "masks";
    if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir)) {
        throw std::runtime_error("dataset root must contain images/ and masks/: " +
                                 root.string());
    }

    DatasetManifest manifest;
    manifest.root = root.string();
    manifest.target_height = target_height;
    manifest.target_width = target_width;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path image_path = entry.path();
        if (image_path.extension() != ".png") continue;
        const std::string id = image_path.stem().string();
        const fs::path mask_path = masks_dir / image_path.filename();
        if (!fs::exists(mask_path)) {
            throw std::runtime_error("missing mask for image: " + image_path.string());
        }
        manifest.entries.push_back({image_path.string(), mask_path.string(), id});
    }
    if (manifest.entries.empty()) {
        throw std::runtime_error("dataset has zero entries: " + root.string());
    }
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });

    LoadedDataset dataset;
    dataset.samples.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) {
        SamplePair pair;
        pair.id = entry.id;
        pair.image = resize_bilinear(read_image_8bit(entry.image_path), target_height,
                                     target_width);
        pair.mask = read_mask_8bit(entry.mask_path, target_height, target_width);
        dataset.samples.push_back(std::move(pair));
    }
    dataset.manifest = std::move(manifest);
    return dataset;
}

SplitSpec split(const DatasetManifest& manifest, std::uint64_t seed, double labeled_fraction) {
    if (manifest.entries.size() < 4) {
        throw std::invalid_argument("split: need at least 4 entries");
    }
    if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0) {
        throw std::invalid_argument("split: labeled_fraction must be in (0, 1]");
    }

    std::vector<std::string> ids;
    ids.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) ids.push_back(entry.id);

    RandomStream rng(seed);
    rng.shuffle(ids);

    const std::size_t n = ids.size();
    const std::size_t n_val = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(n)));
    const std::size_t n_train = n - n_val;

    SplitSpec spec;
    spec.seed = seed;
    spec.labeled_fraction = labeled_fraction;
    spec.train_ids.assign(ids.begin(), ids.begin() + n_train);
    spec.val_ids.assign(ids.begin() + n_train, ids.end());

    std::size_t n_labeled = static_cast<std::size_t>(
        std::floor(labeled_fraction * static_cast<double>(n_train) + 0.5));
    n_labeled = std::clamp<std::size_t>(n_labeled, 1, n_train);
    std::vector<std::string> train_copy = spec.train_ids;
    rng.shuffle(train_copy);
    spec.labeled_ids.assign(train_copy.begin(), train_copy.begin() + n_labeled);

    std::sort(spec.train_ids.begin(), spec.train_ids.end());
    std::sort(spec.val_ids.begin(), spec.val_ids.end());
    std::sort(spec.labeled_ids.begin(), spec.labeled_ids.end());
    return spec;
}

void save_split(const fs::path& path, const SplitSpec& spec) {
    std::ostringstream out;
    out << kv_line("seed", std::to_string(spec.seed));
    out << kv_line("labeled_fraction", format_double(spec.labeled_fraction, 6));
    for (const auto& id : spec.train_ids) out << "train " << id << "\n";
    for (const auto& id : spec.val_ids) out << "val " << id << "\n";
    for (const auto& id : spec.labeled_ids) out << "labeled " << id << "\n";
    atomic_write_text(path, out.str());
}

SplitSpec load_split(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split record: " + path.string());
    SplitSpec spec;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head == "seed") {
            std::string eq;
            ls >> eq >> spec.seed;
        } else if (head == "labeled_fraction") {
            std::string eq;
            ls >> eq >> spec.labeled_fraction;
        } else if (head == "train" || head == "val" || head == "labeled") {
            std::string id;
            ls >> id;
            if (id.empty()) throw std::runtime_error("malformed split line: " + line);
            if (head == "train") spec.train_ids.push_back(id);
            if (head == "val") spec.val_ids.push_back(id);
            if (head == "labeled") spec.labeled_ids.push_back(id);
        } else {
            throw std::runtime_error("malformed split line: " + line);
        }
    }
    if (spec.train_ids.empty() || spec.val_ids.empty()) {
        throw std::runtime_error("split record incomplete: " + path.string());
    }
    return spec;
}

namespace {

struct Ellipse {
    double cx, cy, ax, ay, theta;

    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        const double u = (dx * ct + dy * st) / ax;
        const double v = (-dx * st + dy * ct) / ay;
        return u * u + v * v <= 1.0;
    }
};

struct Ribbon {
    // Quadratic Bezier spine with half-thickness `radius`.
    double x0, y0, x1, y1, x2, y2, radius;

    bool contains(double x, double y) const {
        double best = 1e30;
        constexpr int kSteps = 160;
        for (int i = 0; i <= kSteps; ++i) {
            const double t = static_cast<double>(i) / kSteps;
            const double omt = 1.0 - t;
            const double bx = omt * omt * x0 + 2 * omt * t * x1 + t * t * x2;
            const double by = omt * omt * y0 + 2 * omt * t * y1 + t * t * y2;
            const double d = (x - bx) * (x - bx) + (y - by) * (y - by);
            best = std::min(best, d);
        }
        return best <= radius * radius;
    }
};

struct Shape {
    bool is_ellipse;
    Ellipse ellipse;
    Ribbon ribbon;

    bool contains(double x, double y) const {
        return is_ellipse ? ellipse.contains(x, y) : ribbon.contains(x, y);
    }
};

Mask render_shapes(const std::vector<Shape>& shapes, int height, int width) {
    Mask mask(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            for (const auto& s : shapes) {
                if (s.contains(c, r)) {
                    mask.at(r, c) = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

std::vector<Shape> draw_shapes(RandomStream& rng, int height, int width) {
    const int count = 1 + static_cast<int>(rng.uniform_int(2));
    std::vector<Shape> shapes;
    for (int i = 0; i < count; ++i) {
        Shape s;
        s.is_ellipse = rng.bernoulli(0.5);
        if (s.is_ellipse) {
            s.ellipse.cx = rng.uniform(0.2, 0.8) * width;
            s.ellipse.cy = rng.uniform(0.2, 0.8) * height;
            s.ellipse.ax = rng.uniform(0.05, 0.22) * width;
            s.ellipse.ay = rng.uniform(0.05, 0.22) * height;
            s.ellipse.theta = rng.uniform(0.0, 3.14159265358979323846);
        } else {
            s.ribbon.x0 = rng.uniform(0.1, 0.9) * width;
            s.ribbon.y0 = rng.uniform(0.1, 0.9) * height;
            s.ribbon.x1 = rng.uniform(0.1, 0.9) * width;
            s.ribbon.y1 = rng.uniform(0.1, 0.9) * height;
            s.ribbon.x2 = rng.uniform(0.1, 0.9) * width;
            s.ribbon.y2 = rng.uniform(0.1, 0.9) * height;
            s.ribbon.radius = rng.uniform(0.02, 0.05) * std::min(height, width);
        }
        shapes.push_back(s);
    }
    return shapes;
}

}  // namespace

void synth_generate(const fs::path& root, int n, std::uint64_t seed, const SynthParams& params) {
    if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");

    RandomStream rng(seed);
    const int h = params.height;
    const int w = params.width;
    const auto area = static_cast<double>(h) * w;

    for (int i = 0; i < n; ++i) {
        // Redraw shapes until the foreground fraction lands in range.
        Mask mask;
        for (int attempt = 0;; ++attempt) {
            mask = render_shapes(draw_shapes(rng, h, w), h, w);
            const double fraction = static_cast<double>(mask.foreground_count()) / area;
            if (fraction >= params.min_foreground && fraction <= params.max_foreground) break;
            if (attempt > 500) {
                throw std::runtime_error("synth_generate: could not hit foreground range");
            }
        }

        const double base = rng.uniform(0.05, 0.18);
        const double grad_strength = rng.uniform(0.05, 0.18);
        const double grad_angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double fg_level = rng.uniform(0.55, 0.9);

        Image img(h, w);
        const double ca = std::cos(grad_angle);
        const double sa = std::sin(grad_angle);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const double u = static_cast<double>(c) / (w - 1) - 0.5;
                const double v = static_cast<double>(r) / (h - 1) - 0.5;
                double value = base + grad_strength * (u * ca + v * sa + 0.5);
                if (mask.at(r, c)) value = fg_level;
                img.at(r, c) = static_cast<float>(value);
            }
        }

        // Multiplicative speckle followed by a light smoothing pass.
        for (auto& v : img.data) {
            v = clamp01(v * static_cast<float>(1.0 + params.speckle_sigma * rng.normal()));
        }
        img = gaussian_smooth(img, params.smooth_sigma);
        for (auto& v : img.data) v = clamp01(v);

        std::ostringstream name;
        name << "synth_" << std::setw(5) << std::setfill('0') << i << ".png";
        write_image_8bit(root / "images" / name.str(), img);
        write_mask_8bit(root / "masks" / name.str(), mask);
    }
}

}  // namespace dems
