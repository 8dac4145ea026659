#pragma once

#include "egohome/core/image.hpp"
#include "egohome/nn/tensor.hpp"

namespace egohome::nn {

// HWC interleaved image <-> CHW planar tensor.
inline Tensor tensor_from_image(const Image& img) {
    Tensor t({img.c, img.h, img.w});
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.data[(size_t(c) * img.h + y) * img.w + x] = img.at(y, x, c);
    return t;
}

inline Image image_from_tensor(const Tensor& t) {
    Image img(t.dim(1), t.dim(2), t.dim(0));
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                img.at(y, x, c) = t.data[(size_t(c) * img.h + y) * img.w + x];
    return img;
}

}  // namespace egohome::nn
