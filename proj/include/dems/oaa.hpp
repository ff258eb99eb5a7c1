#ifndef DEMS_OAA_HPP
#define DEMS_OAA_HPP

#include <array>
#include <string>
#include <vector>

#include "dems/image.hpp"
#include "dems/rng.hpp"

namespace dems {

// The fourteen transforms of the online automatic augmenter. Pixel-space
// transforms touch only the image; spatial-space transforms are applied with
// identical parameters to image and mask.
enum class TransformKind {
    Brightness,
    Contrast,
    Posterize,
    Sharpness,
    GaussianBlur,
    GaussianNoise,
    Rotate,
    HorizontalFlip,
    VerticalFlip,
    Scale,
    TranslateX,
    TranslateY,
    ShearX,
    ShearY,
};

enum class TransformSpace { Pixel, Spatial };

struct TransformSpec {
    TransformKind kind;
    TransformSpace space;
    bool has_magnitude;
    // One-sided magnitudes (blur sigma, noise sigma, posterize bits) are
    // sampled in [0, cap]; signed ones in [-cap, cap].
    bool one_sided;
    // Magnitude bound at augmentation level 5. Units per transform:
    //   brightness     additive shift on the [0,1] scale
    //   contrast       relative gain around the image mean
    //   posterize      bits removed from an 8-bit depth
    //   sharpness      unsharp-mask blend factor
    //   gaussian_blur  sigma in pixels
    //   gaussian_noise sigma on the [0,1] scale
    //   rotate         degrees
    //   scale          deviation of the zoom factor from 1
    //   translate_*    fraction of the image side
    //   shear_*        degrees
    double full_cap;
    const char* name;
};

const std::array<TransformSpec, 14>& transform_table();
const TransformSpec& transform_spec(TransformKind kind);

// Lookup by CLI / sidecar name; throws std::invalid_argument for unknown names.
const TransformSpec& transform_spec(const std::string& name);

// Level-scaled magnitude bound: (level / 5) * full_cap. Level must be in 1..5.
// Transforms without a magnitude report 0.
double magnitude_cap(const TransformSpec& spec, int level);

struct PlannedTransform {
    TransformKind kind;
    double magnitude = 0.0;
    bool apply = true;
};

// An ordered, magnitude-resolved augmentation plan. sub_strategy is 1-based:
// the four sub-strategies draw (pixel, spatial) = (1,2), (0,3), (1,1), (0,2)
// transforms respectively.
struct AugmentationPlan {
    std::vector<PlannedTransform> transforms;
    int sub_strategy = 0;
    int level = 0;
};

// Counts of (pixel, spatial) draws per sub-strategy index (0-based).
constexpr std::array<int, 4> kSubStrategyPixelCount{1, 0, 1, 0};
constexpr std::array<int, 4> kSubStrategySpatialCount{2, 3, 1, 2};

// Throws std::invalid_argument when the plan violates its invariants
// (size, per-space counts vs sub-strategy, magnitude bounds, level range).
void validate_plan(const AugmentationPlan& plan);

// Samples a plan: uniform sub-strategy, transforms drawn with replacement
// from the matching spaces, order shuffled, magnitudes uniform within the
// level-scaled cap, apply flags Bernoulli(0.2 * level) per transform.
AugmentationPlan sample_plan(RandomStream& rng, int level);

// Applies the plan in order. Pixel transforms modify the image only; spatial
// transforms warp image (bilinear) and mask (nearest) with the same
// parameters; everything outside the canvas is filled with zeros. The rng is
// consumed only by gaussian_noise realizations.
SamplePair apply_plan(const SamplePair& pair, const AugmentationPlan& plan, RandomStream& rng);

// Fallback augmentation used when the OAA toggle is off: horizontal and
// vertical flips with probability 0.5 each, then a rotation with angle drawn
// uniformly from [-30, 30] degrees.
SamplePair apply_flip_rotate(const SamplePair& pair, RandomStream& rng);

// Affine warp primitives, exposed for the CLI and tests. The matrix maps
// output pixel offsets (relative to the image center) to input offsets:
//   x_in = m[0]*x_out + m[1]*y_out + m[2]
//   y_in = m[3]*x_out + m[4]*y_out + m[5]
// with x along columns and y along rows.
Image warp_affine_bilinear(const Image& img, const std::array<double, 6>& m);
Mask warp_affine_nearest(const Mask& mask, const std::array<double, 6>& m);

// Inverse-map matrix for one spatial transform. Conventions: positive rotate
// turns content clockwise on screen (row axis pointing down); scale factor is
// 1 + magnitude; translate shifts content by magnitude * side pixels toward
// +x / +y; shear_x displaces rows proportionally to y by tan(magnitude deg).
std::array<double, 6> spatial_inverse_map(TransformKind kind, double magnitude, int height,
                                          int width);

// Separable Gaussian smoothing with replicate borders; sigma below 1e-3 is
// the identity. Shared by the blur/sharpness transforms and the synthetic
// data generator.
Image gaussian_smooth(const Image& img, double sigma);

}  // namespace dems

#endif
