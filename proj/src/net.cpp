#include "dems/net.hpp"

#include <sstream>
#include <stdexcept>

#include <ATen/CPUGeneratorImpl.h>

#include "dems/util.hpp"

namespace dems {

namespace {

torch::nn::Sequential make_conv_block(int in_channels, int out_channels) {
    using namespace torch::nn;
    return Sequential(Conv2d(Conv2dOptions(in_channels, out_channels, 3).padding(1)),
                      BatchNorm2d(out_channels), GELU(),
                      Conv2d(Conv2dOptions(out_channels, out_channels, 3).padding(1)),
                      BatchNorm2d(out_channels), GELU());
}

torch::Generator make_generator(RandomStream& rng) {
    return at::detail::createCPUGenerator(rng.next_u64());
}

std::int64_t count_parameters(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters()) n += p.numel();
    return n;
}

}  // namespace

// ---- feature perturbation injection ---------------------------------------

torch::Tensor feature_noise(const torch::Tensor& x, torch::Generator& gen, double amplitude) {
    const auto u = (torch::rand(x.sizes(), gen, x.options()) * 2.0 - 1.0) * amplitude;
    return x * (1.0 + u);
}

torch::Tensor feature_dropout(const torch::Tensor& x, torch::Generator& gen, double gamma_lo,
                              double gamma_hi) {
    const auto attention = x.detach().mean(1, /*keepdim=*/true);
    const auto max_attention = attention.amax({2, 3}, /*keepdim=*/true);
    const auto gamma =
        torch::rand({x.size(0), 1, 1, 1}, gen, x.options()) * (gamma_hi - gamma_lo) + gamma_lo;
    const auto mask = attention.lt(gamma * max_attention).to(x.scalar_type());
    return x * mask;
}

torch::Tensor channel_dropout(const torch::Tensor& x, torch::Generator& gen, double p) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("channel_dropout: p must be in [0,1)");
    const auto keep =
        torch::rand({x.size(0), x.size(1), 1, 1}, gen, x.options()).ge(p).to(x.scalar_type());
    return x * keep * (1.0 / (1.0 - p));
}

torch::Tensor fpi(const torch::Tensor& x, RandomStream& rng, bool training) {
    if (!training) return x;
    const bool batched = x.dim() == 4;
    const auto x4 = batched ? x : x.unsqueeze(0);

    const auto kind = static_cast<Perturbation>(rng.uniform_int(3));
    auto gen = make_generator(rng);
    torch::Tensor y;
    switch (kind) {
        case Perturbation::FeatureNoise:
            y = feature_noise(x4, gen);
            break;
        case Perturbation::FeatureDropout:
            y = feature_dropout(x4, gen);
            break;
        case Perturbation::ChannelDropout:
            y = channel_dropout(x4, gen);
            break;
    }
    return batched ? y : y.squeeze(0);
}

// ---- RRE block -------------------------------------------------------------

RREBranchImpl::RREBranchImpl(int channels) {
    using namespace torch::nn;
    dw = register_module(
        "dw", Conv2d(Conv2dOptions(channels, channels, 3).padding(1).groups(channels)));
    bn1 = register_module("bn1", BatchNorm2d(channels));
    pw = register_module("pw", Conv2d(Conv2dOptions(channels, channels, 1)));
    bn2 = register_module("bn2", BatchNorm2d(channels));
}

torch::Tensor RREBranchImpl::forward(const torch::Tensor& x, int* conv_stack_counter) {
    if (conv_stack_counter) ++*conv_stack_counter;
    const auto branch = bn2->forward(pw->forward(torch::gelu(bn1->forward(dw->forward(x)))));
    return torch::gelu(x + branch);
}

RREBlockImpl::RREBlockImpl(int base_channels_) : base_channels(base_channels_) {
    for (int stage = 0; stage < 4; ++stage) {
        skip_branches.push_back(register_module("skip" + std::to_string(stage + 1),
                                                RREBranch(base_channels << stage)));
    }
    circle_branch = register_module("circle", RREBranch(base_channels << 4));
}

RREOutputs RREBlockImpl::forward(const std::array<torch::Tensor, 4>& skips,
                                 const torch::Tensor& circle_in, RandomStream* fpi_rng,
                                 int* circle_conv_stacks) {
    for (int stage = 0; stage < 4; ++stage) {
        if (skips[stage].dim() != 4 ||
            skips[stage].size(1) != static_cast<std::int64_t>(base_channels) << stage) {
            throw std::invalid_argument("rre_forward: skip " + std::to_string(stage + 1) +
                                        " has the wrong channel count");
        }
    }
    if (circle_in.dim() != 4 ||
        circle_in.size(1) != static_cast<std::int64_t>(base_channels) << 4) {
        throw std::invalid_argument("rre_forward: circle input has the wrong channel count");
    }
    const bool training = is_training();
    RREOutputs out;
    for (int stage = 0; stage < 4; ++stage) {
        auto y = skip_branches[stage]->forward(skips[stage]);
        out.skips[stage] = fpi_rng ? fpi(y, *fpi_rng, training) : y;
    }
    auto y = circle_branch->forward(circle_in, circle_conv_stacks);
    out.bottleneck = fpi_rng ? fpi(y, *fpi_rng, training) : y;
    return out;
}

// ---- decoder ----------------------------------------------------------------

DecoderImpl::DecoderImpl(int base_channels) {
    using namespace torch::nn;
    int channels = base_channels << 4;
    for (int stage = 0; stage < 4; ++stage) {
        const int out_channels = channels / 2;
        up_blocks.push_back(register_module(
            "up" + std::to_string(stage + 1),
            Sequential(Upsample(UpsampleOptions()
                                    .scale_factor(std::vector<double>{2.0, 2.0})
                                    .mode(torch::kBilinear)
                                    .align_corners(false)),
                       Conv2d(Conv2dOptions(channels, out_channels, 3).padding(1)),
                       BatchNorm2d(out_channels), GELU())));
        conv_blocks.push_back(register_module("conv" + std::to_string(stage + 1),
                                              make_conv_block(2 * out_channels, out_channels)));
        channels = out_channels;
    }
    head = register_module("head", Conv2d(Conv2dOptions(base_channels, 1, 1)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& bottleneck,
                                   const std::array<torch::Tensor, 4>& skips) {
    auto x = bottleneck;
    for (int stage = 0; stage < 4; ++stage) {
        x = up_blocks[stage]->forward(x);
        x = conv_blocks[stage]->forward(torch::cat({x, skips[3 - stage]}, 1));
    }
    return torch::sigmoid(head->forward(x));
}

// ---- full network ------------------------------------------------------------

DemsNetImpl::DemsNetImpl(int base_channels_) : base_channels(base_channels_) {
    if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
    const int c = base_channels;
    enc1 = register_module("enc1", make_conv_block(1, c));
    enc2 = register_module("enc2", make_conv_block(c, 2 * c));
    enc3 = register_module("enc3", make_conv_block(2 * c, 4 * c));
    enc4 = register_module("enc4", make_conv_block(4 * c, 8 * c));
    enc5 = register_module("enc5", make_conv_block(8 * c, 16 * c));
    pool = register_module("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
    for (int k = 0; k < 3; ++k) {
        rre_blocks.push_back(register_module("rre" + std::to_string(k + 1), RREBlock(c)));
    }
    main_decoder = register_module("dec_main", Decoder(c));
    for (int k = 0; k < 3; ++k) {
        aux_decoders.push_back(register_module("dec_aux" + std::to_string(k + 1), Decoder(c)));
    }
}

FeaturePyramid DemsNetImpl::encode(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != 1) {
        throw std::invalid_argument("encode: expected input of shape (N,1,H,W)");
    }
    if (x.size(2) % 16 != 0 || x.size(3) % 16 != 0) {
        throw std::invalid_argument("encode: spatial size " + std::to_string(x.size(2)) + "x" +
                                    std::to_string(x.size(3)) + " is not divisible by 16");
    }
    FeaturePyramid pyr;
    pyr.f1 = enc1->forward(x);
    pyr.f2 = enc2->forward(pool->forward(pyr.f1));
    pyr.f3 = enc3->forward(pool->forward(pyr.f2));
    pyr.f4 = enc4->forward(pool->forward(pyr.f3));
    pyr.f5 = enc5->forward(pool->forward(pyr.f4));
    return pyr;
}

ForwardResult DemsNetImpl::forward(const torch::Tensor& x, RandomStream* fpi_rng, bool use_rre) {
    const auto pyr = encode(x);
    const std::array<torch::Tensor, 4> raw{pyr.f1, pyr.f2, pyr.f3, pyr.f4};

    ForwardResult result;
    result.main = main_decoder->forward(pyr.f5, raw);
    if (!is_training()) return result;

    if (fpi_rng == nullptr) {
        throw std::invalid_argument("training forward requires an FPI random stream");
    }

    int circle_stacks = 0;
    torch::Tensor circle = pyr.f5;
    for (int k = 0; k < 3; ++k) {
        if (use_rre) {
            auto rre = rre_blocks[k]->forward(raw, circle, fpi_rng, &circle_stacks);
            circle = rre.bottleneck;
            result.aux_circle_stacks[k] = circle_stacks;
            result.aux.push_back(aux_decoders[k]->forward(rre.bottleneck, rre.skips));
        } else {
            result.aux_circle_stacks[k] = 0;
            result.aux.push_back(aux_decoders[k]->forward(pyr.f5, raw));
        }
    }
    return result;
}

std::string DemsNetImpl::describe() const {
    const int c = base_channels;
    std::ostringstream out;
    out << "DEMS segmentation network\n";
    out << "  encoder stages (channels): " << c << " " << 2 * c << " " << 4 * c << " " << 8 * c
        << " " << 16 * c << "\n";
    out << "  RRE blocks: " << rre_blocks.size() << " (depthwise+pointwise residual, FPI)\n";
    out << "  decoders: 1 main + " << aux_decoders.size() << " auxiliary (training only)\n";
    out << "  parameters: " << parameter_count() << " total\n";
    out << "    main decoder:      " << decoder_parameter_count(0) << "\n";
    for (std::size_t k = 0; k < aux_decoders.size(); ++k) {
        out << "    auxiliary " << k + 1 << ":       " << decoder_parameter_count(1 + k) << "\n";
    }
    return out.str();
}

std::int64_t DemsNetImpl::parameter_count() const { return count_parameters(*this); }

std::int64_t DemsNetImpl::decoder_parameter_count(int decoder_index) const {
    if (decoder_index == 0) return count_parameters(*main_decoder);
    return count_parameters(*aux_decoders.at(decoder_index - 1));
}

// ---- checkpointing -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const DemsNet& net,
                     const CheckpointMeta& meta) {
    atomic_write_file(path, [&](const std::filesystem::path& tmp) {
        torch::serialize::OutputArchive archive;
        net->save(archive);
        archive.write("meta_base_channels", c10::IValue(meta.base_channels));
        archive.write("meta_input_size", c10::IValue(meta.input_size));
        archive.write("meta_seed", c10::IValue(meta.seed));
        archive.write("meta_iteration", c10::IValue(meta.iteration));
        archive.save_to(tmp.string());
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    Checkpoint checkpoint;
    c10::IValue value;
    archive.read("meta_base_channels", value);
    checkpoint.meta.base_channels = value.toInt();
    archive.read("meta_input_size", value);
    checkpoint.meta.input_size = value.toInt();
    archive.read("meta_seed", value);
    checkpoint.meta.seed = value.toInt();
    archive.read("meta_iteration", value);
    checkpoint.meta.iteration = value.toInt();

    checkpoint.net = DemsNet(static_cast<int>(checkpoint.meta.base_channels));
    checkpoint.net->load(archive);
    return checkpoint;
}

}  // namespace dems
