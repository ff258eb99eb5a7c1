#include "dems/oaa.hpp"

#include <cmath>
#include <stdexcept>

namespace dems {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_level(int level) {
    if (level < 1 || level > 5) {
        throw std::invalid_argument("augmentation level must be in 1..5, got " +
                                    std::to_string(level));
    }
}

double deg2rad(double deg) { return deg * kPi / 180.0; }

}  // namespace

const std::array<TransformSpec, 14>& transform_table() {
    static const std::array<TransformSpec, 14> table{{
        {TransformKind::Brightness, TransformSpace::Pixel, true, false, 0.3, "brightness"},
        {TransformKind::Contrast, TransformSpace::Pixel, true, false, 0.3, "contrast"},
        {TransformKind::Posterize, TransformSpace::Pixel, true, true, 4.0, "posterize"},
        {TransformKind::Sharpness, TransformSpace::Pixel, true, false, 0.6, "sharpness"},
        {TransformKind::GaussianBlur, TransformSpace::Pixel, true, true, 1.5, "gaussian_blur"},
        {TransformKind::GaussianNoise, TransformSpace::Pixel, true, true, 0.05, "gaussian_noise"},
        {TransformKind::Rotate, TransformSpace::Spatial, true, false, 30.0, "rotate"},
        {TransformKind::HorizontalFlip, TransformSpace::Spatial, false, false, 0.0,
         "horizontal_flip"},
        {TransformKind::VerticalFlip, TransformSpace::Spatial, false, false, 0.0, "vertical_flip"},
        {TransformKind::Scale, TransformSpace::Spatial, true, false, 0.2, "scale"},
        {TransformKind::TranslateX, TransformSpace::Spatial, true, false, 0.1, "translate_x"},
        {TransformKind::TranslateY, TransformSpace::Spatial, true, false, 0.1, "translate_y"},
        {TransformKind::ShearX, TransformSpace::Spatial, true, false, 15.0, "shear_x"},
        {TransformKind::ShearY, TransformSpace::Spatial, true, false, 15.0, "shear_y"},
    }};
    return table;
}

const TransformSpec& transform_spec(TransformKind kind) {
    for (const auto& spec : transform_table()) {
        if (spec.kind == kind) return spec;
    }
    throw std::invalid_argument("unknown transform kind");
}

const TransformSpec& transform_spec(const std::string& name) {
    for (const auto& spec : transform_table()) {
        if (name == spec.name) return spec;
    }
    throw std::invalid_argument("unknown transform name: " + name);
}

double magnitude_cap(const TransformSpec& spec, int level) {
    require_level(level);
    if (!spec.has_magnitude) return 0.0;
    return spec.full_cap * (static_cast<double>(level) / 5.0);
}

void validate_plan(const AugmentationPlan& plan) {
    require_level(plan.level);
    if (plan.sub_strategy < 1 || plan.sub_strategy > 4) {
        throw std::invalid_argument("sub-strategy index must be in 1..4");
    }
    const int want_pixel = kSubStrategyPixelCount[plan.sub_strategy - 1];
    const int want_spatial = kSubStrategySpatialCount[plan.sub_strategy - 1];
    if (plan.transforms.size() != static_cast<std::size_t>(want_pixel + want_spatial)) {
        throw std::invalid_argument("plan length does not match its sub-strategy");
    }
    int n_pixel = 0, n_spatial = 0;
    for (const auto& t : plan.transforms) {
        const auto& spec = transform_spec(t.kind);
        if (spec.space == TransformSpace::Pixel) {
            ++n_pixel;
        } else {
            ++n_spatial;
        }
        if (spec.has_magnitude) {
            const double cap = magnitude_cap(spec, plan.level) + 1e-12;
            const double lo = spec.one_sided ? -1e-12 : -cap;
            if (t.magnitude < lo || t.magnitude > cap) {
                throw std::invalid_argument(std::string("magnitude out of range for ") +
                                            spec.name);
            }
        }
    }
    if (n_pixel != want_pixel || n_spatial != want_spatial) {
        throw std::invalid_argument("plan space counts do not match its sub-strategy");
    }
}

AugmentationPlan sample_plan(RandomStream& rng, int level) {
    require_level(level);

    std::vector<TransformKind> pixel_space, spatial_space;
    for (const auto& spec : transform_table()) {
        (spec.space == TransformSpace::Pixel ? pixel_space : spatial_space).push_back(spec.kind);
    }

    AugmentationPlan plan;
    plan.level = level;
    plan.sub_strategy = static_cast<int>(rng.uniform_int(4)) + 1;

    std::vector<TransformKind> drawn;
    for (int i = 0; i < kSubStrategyPixelCount[plan.sub_strategy - 1]; ++i) {
        drawn.push_back(pixel_space[rng.uniform_int(pixel_space.size())]);
    }
    for (int i = 0; i < kSubStrategySpatialCount[plan.sub_strategy - 1]; ++i) {
        drawn.push_back(spatial_space[rng.uniform_int(spatial_space.size())]);
    }
    rng.shuffle(drawn);

    const double apply_prob = 0.2 * level;
    for (TransformKind kind : drawn) {
        const auto& spec = transform_spec(kind);
        PlannedTransform t;
        t.kind = kind;
        if (spec.has_magnitude) {
            const double cap = magnitude_cap(spec, level);
            t.magnitude = spec.one_sided ? rng.uniform(0.0, cap) : rng.uniform(-cap, cap);
        }
        t.apply = rng.bernoulli(apply_prob);
        plan.transforms.push_back(t);
    }
    return plan;
}

namespace {

// ---- pixel-space transforms (image only) --------------------------------

void apply_brightness(Image& img, double m) {
    for (auto& v : img.data) v = clamp01(v + static_cast<float>(m));
}

void apply_contrast(Image& img, double m) {
    double mean = 0.0;
    for (float v : img.data) mean += v;
    mean /= static_cast<double>(img.size());
    const double gain = 1.0 + m;
    for (auto& v : img.data) {
        v = clamp01(static_cast<float>(mean + gain * (v - mean)));
    }
}

void apply_posterize(Image& img, double m) {
    const int bits = 8 - static_cast<int>(std::lround(m));
    const double levels = std::pow(2.0, bits) - 1.0;
    for (auto& v : img.data) {
        v = clamp01(static_cast<float>(std::round(v * levels) / levels));
    }
}

}  // namespace

Image gaussian_smooth(const Image& img, double sigma) {
    if (sigma < 1e-3) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;

    Image tmp(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int cc = std::clamp(c + i, 0, img.width - 1);
                acc += kernel[i + radius] * img.at(r, cc);
            }
            tmp.at(r, c) = static_cast<float>(acc);
        }
    }
    Image out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int rr = std::clamp(r + i, 0, img.height - 1);
                acc += kernel[i + radius] * tmp.at(rr, c);
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

namespace {

void apply_sharpness(Image& img, double m) {
    const Image smooth = gaussian_smooth(img, 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.data[i] = clamp01(static_cast<float>(img.data[i] + m * (img.data[i] - smooth.data[i])));
    }
}

void apply_gaussian_blur(Image& img, double sigma) { img = gaussian_smooth(img, sigma); }

void apply_gaussian_noise(Image& img, double sigma, RandomStream& rng) {
    for (auto& v : img.data) {
        v = clamp01(static_cast<float>(v + sigma * rng.normal()));
    }
}

// ---- spatial-space transforms (image + mask) -----------------------------

void flip_horizontal(Image& img) {
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width / 2; ++c) {
            std::swap(img.at(r, c), img.at(r, img.width - 1 - c));
        }
    }
}

void flip_horizontal(Mask& m) {
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width / 2; ++c) {
            std::swap(m.at(r, c), m.at(r, m.width - 1 - c));
        }
    }
}

void flip_vertical(Image& img) {
    for (int r = 0; r < img.height / 2; ++r) {
        for (int c = 0; c < img.width; ++c) {
            std::swap(img.at(r, c), img.at(img.height - 1 - r, c));
        }
    }
}

void flip_vertical(Mask& m) {
    for (int r = 0; r < m.height / 2; ++r) {
        for (int c = 0; c < m.width; ++c) {
            std::swap(m.at(r, c), m.at(m.height - 1 - r, c));
        }
    }
}

void warp_pair(SamplePair& pair, const std::array<double, 6>& m) {
    pair.image = warp_affine_bilinear(pair.image, m);
    if (pair.mask) pair.mask = warp_affine_nearest(*pair.mask, m);
}

void apply_spatial(SamplePair& pair, TransformKind kind, double magnitude) {
    switch (kind) {
        case TransformKind::HorizontalFlip:
            flip_horizontal(pair.image);
            if (pair.mask) flip_horizontal(*pair.mask);
            break;
        case TransformKind::VerticalFlip:
            flip_vertical(pair.image);
            if (pair.mask) flip_vertical(*pair.mask);
            break;
        default:
            warp_pair(pair, spatial_inverse_map(kind, magnitude, pair.image.height,
                                                pair.image.width));
            break;
    }
}

}  // namespace

std::array<double, 6> spatial_inverse_map(TransformKind kind, double magnitude, int height,
                                          int width) {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};
    switch (kind) {
        case TransformKind::Rotate: {
            const double a = deg2rad(magnitude);
            // Inverse of a clockwise-on-screen rotation by `a`.
            m = {std::cos(a), std::sin(a), 0, -std::sin(a), std::cos(a), 0};
            break;
        }
        case TransformKind::Scale: {
            const double s = 1.0 + magnitude;
            m = {1.0 / s, 0, 0, 0, 1.0 / s, 0};
            break;
        }
        case TransformKind::TranslateX:
            m[2] = -magnitude * width;
            break;
        case TransformKind::TranslateY:
            m[5] = -magnitude * height;
            break;
        case TransformKind::ShearX:
            m[1] = -std::tan(deg2rad(magnitude));
            break;
        case TransformKind::ShearY:
            m[3] = -std::tan(deg2rad(magnitude));
            break;
        default:
            throw std::invalid_argument("transform has no affine map");
    }
    return m;
}

Image warp_affine_bilinear(const Image& img, const std::array<double, 6>& m) {
    Image out(img.height, img.width);
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const double xo = c - cx;
            const double yo = r - cy;
            const double xi = m[0] * xo + m[1] * yo + m[2] + cx;
            const double yi = m[3] * xo + m[4] * yo + m[5] + cy;
            const int x0 = static_cast<int>(std::floor(xi));
            const int y0 = static_cast<int>(std::floor(yi));
            const double fx = xi - x0;
            const double fy = yi - y0;
            double acc = 0.0;
            for (int dy = 0; dy <= 1; ++dy) {
                for (int dx = 0; dx <= 1; ++dx) {
                    const int xx = x0 + dx;
                    const int yy = y0 + dy;
                    if (xx < 0 || xx >= img.width || yy < 0 || yy >= img.height) continue;
                    const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
                    acc += w * img.at(yy, xx);
                }
            }
            out.at(r, c) = clamp01(static_cast<float>(acc));
        }
    }
    return out;
}

Mask warp_affine_nearest(const Mask& mask, const std::array<double, 6>& m) {
    Mask out(mask.height, mask.width);
    const double cx = (mask.width - 1) / 2.0;
    const double cy = (mask.height - 1) / 2.0;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            const double xo = c - cx;
            const double yo = r - cy;
            const double xi = m[0] * xo + m[1] * yo + m[2] + cx;
            const double yi = m[3] * xo + m[4] * yo + m[5] + cy;
            const int xx = static_cast<int>(std::lround(xi));
            const int yy = static_cast<int>(std::lround(yi));
            if (xx < 0 || xx >= mask.width || yy < 0 || yy >= mask.height) {
                out.at(r, c) = 0;
            } else {
                out.at(r, c) = mask.at(yy, xx);
            }
        }
    }
    return out;
}

SamplePair apply_plan(const SamplePair& pair, const AugmentationPlan& plan, RandomStream& rng) {
    validate_plan(plan);
    if (pair.mask) {
        require_same_shape(pair.image.height, pair.image.width, pair.mask->height,
                           pair.mask->width, "apply_plan");
    }

    SamplePair out = pair;
    for (const auto& t : plan.transforms) {
        if (!t.apply) continue;
        switch (t.kind) {
            case TransformKind::Brightness:
                apply_brightness(out.image, t.magnitude);
                break;
            case TransformKind::Contrast:
                apply_contrast(out.image, t.magnitude);
                break;
            case TransformKind::Posterize:
                apply_posterize(out.image, t.magnitude);
                break;
            case TransformKind::Sharpness:
                apply_sharpness(out.image, t.magnitude);
                break;
            case TransformKind::GaussianBlur:
                apply_gaussian_blur(out.image, t.magnitude);
                break;
            case TransformKind::GaussianNoise:
                apply_gaussian_noise(out.image, t.magnitude, rng);
                break;
            default:
                apply_spatial(out, t.kind, t.magnitude);
                break;
        }
    }
    return out;
}

SamplePair apply_flip_rotate(const SamplePair& pair, RandomStream& rng) {
    SamplePair out = pair;
    if (rng.bernoulli(0.5)) {
        flip_horizontal(out.image);
        if (out.mask) flip_horizontal(*out.mask);
    }
    if (rng.bernoulli(0.5)) {
        flip_vertical(out.image);
        if (out.mask) flip_vertical(*out.mask);
    }
    const double angle = rng.uniform(-30.0, 30.0);
    warp_pair(out, spatial_inverse_map(TransformKind::Rotate, angle, out.image.height,
                                       out.image.width));
    return out;
}

}  // namespace dems
