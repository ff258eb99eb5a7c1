#ifndef DEMS_BRIDGE_HPP
#define DEMS_BRIDGE_HPP

#include <torch/torch.h>

#include "dems/image.hpp"

namespace dems {

// (H,W) float tensor <-> Image conversions, CPU float32.

inline torch::Tensor image_to_tensor(const Image& img) {
    auto t = torch::empty({img.height, img.width}, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), img.data.data(), img.data.size() * sizeof(float));
    return t;
}

inline torch::Tensor mask_to_tensor(const Mask& mask) {
    auto t = torch::empty({mask.height, mask.width}, torch::kFloat32);
    auto* out = t.data_ptr<float>();
    for (std::size_t i = 0; i < mask.data.size(); ++i) out[i] = mask.data[i] ? 1.0f : 0.0f;
    return t;
}

inline Image tensor_to_image(const torch::Tensor& t) {
    const auto cpu = t.to(torch::kFloat32).contiguous();
    if (cpu.dim() != 2) throw std::invalid_argument("tensor_to_image: expected a 2D tensor");
    Image img(static_cast<int>(cpu.size(0)), static_cast<int>(cpu.size(1)));
    std::memcpy(img.data.data(), cpu.data_ptr<float>(), img.data.size() * sizeof(float));
    return img;
}

}  // namespace dems

#endif
