#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nlce/errors.hpp"
#include "nlce/gate.hpp"
#include "nlce/matrix.hpp"

namespace nlce {

// Stage 3: gate upsampling, binary masking, hard erasure of gated latents.

struct BinaryMask {
    Matrix values;  // entries exactly 0 or 1
    double delta_scrub = 0.0;
    std::string layer;
    std::size_t timestep = 0;
};

// Bilinear resample with the align-corners-false convention: output pixel
// centers sit at (i + 0.5) / H of the unit square, edge-clamped. Works for
// both up- and down-sampling.
inline Matrix upsample_gate(const Matrix& gate, std::size_t H, std::size_t W) {
    if (H == 0 || W == 0) throw ShapeError("upsample_gate: zero target size");
    const std::size_t Hs = gate.rows(), Ws = gate.cols();
    Matrix out(H, W);
    for (std::size_t i = 0; i < H; ++i) {
        double u = (static_cast<double>(i) + 0.5) * static_cast<double>(Hs) /
                       static_cast<double>(H) - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(Hs - 1));
        const std::size_t i0 = static_cast<std::size_t>(std::floor(u));
        const std::size_t i1 = std::min(i0 + 1, Hs - 1);
        const double fu = u - static_cast<double>(i0);
        for (std::size_t j = 0; j < W; ++j) {
            double v = (static_cast<double>(j) + 0.5) * static_cast<double>(Ws) /
                           static_cast<double>(W) - 0.5;
            v = std::clamp(v, 0.0, static_cast<double>(Ws - 1));
            const std::size_t j0 = static_cast<std::size_t>(std::floor(v));
            const std::size_t j1 = std::min(j0 + 1, Ws - 1);
            const double fv = v - static_cast<double>(j0);
            out(i, j) = (1.0 - fu) * ((1.0 - fv) * gate(i0, j0) + fv * gate(i0, j1)) +
                        fu * ((1.0 - fv) * gate(i1, j0) + fv * gate(i1, j1));
        }
    }
    return out;
}

// 1 where value >= delta_scrub (inclusive), else 0.
inline BinaryMask binary_mask(const Matrix& upsampled, double delta_scrub,
                              std::string layer = "", std::size_t timestep = 0) {
    BinaryMask m;
    m.delta_scrub = delta_scrub;
    m.layer = std::move(layer);
    m.timestep = timestep;
    m.values = Matrix(upsampled.rows(), upsampled.cols());
    for (std::size_t i = 0; i < upsampled.data().size(); ++i)
        m.values.data()[i] = upsampled.data()[i] >= delta_scrub ? 1.0 : 0.0;
    return m;
}

// Latent h: (H * W) x d, pixels as rows. Feature vectors at mask=1 pixels are
// zeroed; everything else is bit-identical.
inline Matrix scrub_latents(const Matrix& h, const BinaryMask& mask) {
    const std::size_t N = mask.values.rows() * mask.values.cols();
    if (h.rows() != N) throw ShapeError("scrub_latents: mask resolution does not match latent");
    Matrix out = h;
    for (std::size_t p = 0; p < N; ++p) {
        if (mask.values.data()[p] == 1.0) {
            for (std::size_t j = 0; j < h.cols(); ++j) out(p, j) = 0.0;
        }
    }
    return out;
}

}  // namespace nlce
