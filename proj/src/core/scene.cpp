#include "core/scene.hpp"

#include "core/error.hpp"

#include <cstring>
#include <limits>
#include <string>

namespace arapgs {
namespace {

template <typename T>
bool same_bytes(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

bool finite(const Vec3f& v) { return v.allFinite(); }

} // namespace

void GaussianScene::resize(std::size_t n, std::size_t rest) {
    centers.resize(n, Vec3f::Zero());
    rotations.resize(n);
    log_scales.resize(n, Vec3f::Zero());
    opacity_logits.resize(n, 0.0f);
    sh_dc.resize(n, Vec3f::Zero());
    rest_dim = rest;
    sh_rest.resize(n * rest, 0.0f);
}

int GaussianScene::sh_degree() const noexcept {
    switch (rest_dim) {
    case 9: return 1;
    case 24: return 2;
    case 45: return 3;
    default: return 0;
    }
}

void GaussianScene::validate() const {
    const std::size_t n = centers.size();
    if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
        sh_dc.size() != n || sh_rest.size() != n * rest_dim) {
        throw Error(ErrorCode::Data, "attribute arrays have inconsistent lengths");
    }
    if (rest_dim != 0 && rest_dim != 9 && rest_dim != 24 && rest_dim != 45) {
        throw Error(ErrorCode::Data, "unsupported SH rest size " + std::to_string(rest_dim));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Quat4f& q = rotations[i];
        bool ok = finite(centers[i]) && finite(log_scales[i]) && finite(sh_dc[i]) &&
                  std::isfinite(opacity_logits[i]) && std::isfinite(q.w) && std::isfinite(q.x) &&
                  std::isfinite(q.y) && std::isfinite(q.z);
        for (std::size_t k = 0; ok && k < rest_dim; ++k) ok = std::isfinite(sh_rest[i * rest_dim + k]);
        if (!ok) {
            throw Error(ErrorCode::Data, "non-finite attribute on Gaussian " + std::to_string(i));
        }
    }
}

bool bitwise_equal(const GaussianScene& a, const GaussianScene& b) {
    return a.rest_dim == b.rest_dim && same_bytes(a.centers, b.centers) &&
           same_bytes(a.rotations, b.rotations) && same_bytes(a.log_scales, b.log_scales) &&
           same_bytes(a.opacity_logits, b.opacity_logits) && same_bytes(a.sh_dc, b.sh_dc) &&
           same_bytes(a.sh_rest, b.sh_rest);
}

Eigen::Quaterniond unit_rotation(const Quat4f& q) {
    Eigen::Quaterniond out(q.w, q.x, q.y, q.z);
    const double n = out.norm();
    if (n < 1e-12) return Eigen::Quaterniond::Identity();
    out.coeffs() /= n;
    return out;
}

Aabb bounds(const GaussianScene& scene) {
    Aabb box;
    if (scene.empty()) return box;
    box.min = Vec3d::Constant(std::numeric_limits<double>::infinity());
    box.max = -box.min;
    for (const auto& c : scene.centers) {
        box.min = box.min.cwiseMin(c.cast<double>());
        box.max = box.max.cwiseMax(c.cast<double>());
    }
    return box;
}

} // namespace arapgs
