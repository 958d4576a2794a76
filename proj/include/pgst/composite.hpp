#pragma once

// Two-branch compositing: the inside-mouth render shows through wherever
// the face render is not opaque.
//
//   A = 1 − T_face      C = C_face·A + C_mouth·(1 − A)

#include "pgst/image.hpp"
#include "pgst/raster.hpp"

namespace pgst {

inline Image composite_images(const Image &face, const Plane &face_transmittance,
                              const Image &mouth) {
    require_same_shape(face, mouth, "composite_head");
    if (face_transmittance.width != face.width || face_transmittance.height != face.height)
        throw ContractViolation("composite_head: transmittance shape differs from image");
    Image out(face.width, face.height);
    for (std::size_t p = 0; p < face.pixel_count(); ++p) {
        const double a = 1.0 - face_transmittance.data[p];
        for (int c = 0; c < 3; ++c)
            out.data[p * 3 + c] = face.data[p * 3 + c] * a + mouth.data[p * 3 + c] * (1.0 - a);
    }
    return out;
}

/// `face` must be rendered on a black background; `mouth` with its own.
inline Image composite_head(const RenderArtifacts &face, const RenderArtifacts &mouth) {
    return composite_images(face.image, face.final_transmittance, mouth.image);
}

struct CompositeGrad {
    Image d_face;
    Plane d_face_transmittance;
    Image d_mouth;
};

inline CompositeGrad composite_backward(const RenderArtifacts &face, const RenderArtifacts &mouth,
                                        const Image &d_head) {
    require_same_shape(face.image, d_head, "composite_backward");
    require_same_shape(mouth.image, d_head, "composite_backward");
    CompositeGrad g{Image(d_head.width, d_head.height), Plane(d_head.width, d_head.height),
                    Image(d_head.width, d_head.height)};
    for (std::size_t p = 0; p < d_head.pixel_count(); ++p) {
        const double a = 1.0 - face.final_transmittance.data[p];
        double d_a = 0.0;
        for (int c = 0; c < 3; ++c) {
            const std::size_t k = p * 3 + c;
            g.d_face.data[k] = d_head.data[k] * a;
            g.d_mouth.data[k] = d_head.data[k] * (1.0 - a);
            d_a += d_head.data[k] * (face.image.data[k] - mouth.image.data[k]);
        }
        g.d_face_transmittance.data[p] = -d_a;
    }
    return g;
}

} // namespace pgst
