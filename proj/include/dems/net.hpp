#ifndef DEMS_NET_HPP
#define DEMS_NET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dems/rng.hpp"

namespace dems {

// Encoder outputs f1..f5 with channel counts (c, 2c, 4c, 8c, 16c) and spatial
// sizes (H, H/2, H/4, H/8, H/16).
struct FeaturePyramid {
    torch::Tensor f1, f2, f3, f4, f5;
};

// ---- feature perturbation injection ---------------------------------------

enum class Perturbation { FeatureNoise, FeatureDropout, ChannelDropout };

// Element-wise multiply by (1 + u), u ~ Uniform(-amplitude, amplitude).
torch::Tensor feature_noise(const torch::Tensor& x, torch::Generator& gen,
                            double amplitude = 0.3);

// Zeroes every spatial position whose channel-mean activation exceeds
// gamma * (max channel-mean), gamma ~ Uniform(gamma_lo, gamma_hi) per sample.
torch::Tensor feature_dropout(const torch::Tensor& x, torch::Generator& gen,
                              double gamma_lo = 0.6, double gamma_hi = 0.9);

// Zeroes each channel independently with probability p and rescales
// survivors by 1/(1-p).
torch::Tensor channel_dropout(const torch::Tensor& x, torch::Generator& gen, double p = 0.5);

// One of the three perturbations chosen uniformly per call; the identity in
// evaluation mode. Accepts (C,H,W) or (N,C,H,W) feature grids.
torch::Tensor fpi(const torch::Tensor& x, RandomStream& rng, bool training);

// ---- RRE block -------------------------------------------------------------

// One residual depthwise/pointwise branch: y = GELU(x + B(x)) with
// B(x) = BN(PwConv(GELU(BN(DwConv3x3(x))))). Channel count is preserved.
struct RREBranchImpl : torch::nn::Module {
    explicit RREBranchImpl(int channels);

    // `conv_stack_counter`, when set, is incremented once per call at the
    // point the convolutions actually run; used to audit the circle path.
    torch::Tensor forward(const torch::Tensor& x, int* conv_stack_counter = nullptr);

    torch::nn::Conv2d dw{nullptr}, pw{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(RREBranch);

struct RREOutputs {
    std::array<torch::Tensor, 4> skips;  // indexed by encoder stage: [0] is f1'
    torch::Tensor bottleneck;
};

// Rhombus path perturbs the four skip features, circle path the bottleneck
// stream; every output keeps its input shape.
struct RREBlockImpl : torch::nn::Module {
    explicit RREBlockImpl(int base_channels);

    // Throws std::invalid_argument when an input's channel count does not
    // match the declared pyramid layout.
    RREOutputs forward(const std::array<torch::Tensor, 4>& skips, const torch::Tensor& circle_in,
                       RandomStream* fpi_rng, int* circle_conv_stacks = nullptr);

    int base_channels = 0;
    std::vector<RREBranch> skip_branches;
    RREBranch circle_branch{nullptr};
};
TORCH_MODULE(RREBlock);

// ---- decoders ---------------------------------------------------------------

// Four upsampling stages (2x bilinear upsample -> 3x3 conv -> BN -> GELU,
// concat with the matching skip, conv block) and a 1x1 sigmoid head.
struct DecoderImpl : torch::nn::Module {
    explicit DecoderImpl(int base_channels);

    torch::Tensor forward(const torch::Tensor& bottleneck,
                          const std::array<torch::Tensor, 4>& skips);

    std::vector<torch::nn::Sequential> up_blocks;
    std::vector<torch::nn::Sequential> conv_blocks;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Decoder);

// ---- full network ------------------------------------------------------------

struct ForwardResult {
    torch::Tensor main;               // (N,1,H,W) probabilities
    std::vector<torch::Tensor> aux;   // three maps in training mode, empty in eval
    // Number of circle-path conv stacks each auxiliary bottleneck traversed.
    std::array<int, 3> aux_circle_stacks{0, 0, 0};
};

// One encoder, three chained RRE blocks, one main and three auxiliary
// decoders. The main decoder always consumes the raw pyramid; auxiliary
// decoder k consumes RRE_k's perturbed skips and bottleneck. Auxiliary
// decoders exist only during training; in eval mode the forward pass runs the
// main decoder with FPI as the identity.
struct DemsNetImpl : torch::nn::Module {
    explicit DemsNetImpl(int base_channels);

    // Throws std::invalid_argument unless the input is (N,1,H,W) with H and W
    // divisible by 16.
    FeaturePyramid encode(const torch::Tensor& x);

    // fpi_rng is required in training mode; use_rre=false bypasses the RRE
    // blocks and feeds raw encoder features to the auxiliary decoders.
    ForwardResult forward(const torch::Tensor& x, RandomStream* fpi_rng = nullptr,
                          bool use_rre = true);

    std::string describe() const;
    std::int64_t parameter_count() const;
    std::int64_t decoder_parameter_count(int decoder_index) const;  // 0 = main, 1..3 = aux

    int base_channels = 0;
    torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, enc4{nullptr},
        enc5{nullptr};
    torch::nn::MaxPool2d pool{nullptr};
    std::vector<RREBlock> rre_blocks;
    Decoder main_decoder{nullptr};
    std::vector<Decoder> aux_decoders;
};
TORCH_MODULE(DemsNet);

// ---- checkpointing -------------------------------------------------------------

struct CheckpointMeta {
    std::int64_t base_channels = 0;
    std::int64_t input_size = 0;
    std::int64_t seed = 0;
    std::int64_t iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const DemsNet& net,
                     const CheckpointMeta& meta);

struct Checkpoint {
    DemsNet net{nullptr};
    CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dems

#endif
