#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <vector>

namespace arapgs {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;
using Mat3d = Eigen::Matrix3d;

/// Quaternion stored (w, x, y, z) exactly as the PLY rot_0..rot_3 columns.
struct Quat4f {
    float w = 1.0f, x = 0.0f, y = 0.0f, z = 0.0f;

    friend bool operator==(const Quat4f&, const Quat4f&) = default;
};

/// Column-oriented Gaussian attributes. Everything is kept in the on-disk
/// parametrization (unnormalized quaternions, log-scales, opacity logits).
struct GaussianScene {
    std::vector<Vec3f> centers;
    std::vector<Quat4f> rotations;
    std::vector<Vec3f> log_scales;
    std::vector<float> opacity_logits;
    std::vector<Vec3f> sh_dc;
    /// Channel-major higher-order SH coefficients, rest_dim floats per
    /// Gaussian (f_rest_{c*K+k}, K = rest_dim/3). Empty for degree-0 scenes.
    std::vector<float> sh_rest;
    std::size_t rest_dim = 0;

    std::size_t size() const noexcept { return centers.size(); }
    bool empty() const noexcept { return centers.empty(); }

    void resize(std::size_t n, std::size_t rest = 0);

    /// SH degree implied by rest_dim (0..3).
    int sh_degree() const noexcept;

    /// Throws Data when arrays disagree in length or hold non-finite values.
    void validate() const;
};

/// Bitwise comparison of every float payload.
bool bitwise_equal(const GaussianScene& a, const GaussianScene& b);

inline float sigmoid(float logit) { return 1.0f / (1.0f + std::exp(-logit)); }

inline Vec3d activated_scale(const GaussianScene& s, std::size_t i) {
    return s.log_scales[i].cast<double>().array().exp().matrix();
}

/// Normalized rotation of Gaussian i as a double quaternion.
Eigen::Quaterniond unit_rotation(const Quat4f& q);

struct Aabb {
    Vec3d min = Vec3d::Constant(0.0);
    Vec3d max = Vec3d::Constant(0.0);

    double diagonal() const { return (max - min).norm(); }
};

Aabb bounds(const GaussianScene& scene);

} // namespace arapgs
