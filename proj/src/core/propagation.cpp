#include "core/propagation.hpp"

#include "core/error.hpp"
#include "core/log.hpp"
#include "core/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace arapgs {
namespace {

Eigen::Quaterniond canonical(const Mat3d& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1.0;
    return q;
}

bool is_identity(const Eigen::Quaterniond& q) {
    return q.w() == 1.0 && q.x() == 0.0 && q.y() == 0.0 && q.z() == 0.0;
}

Quat4f compose(const Eigen::Quaterniond& delta, const Quat4f& q) {
    if (is_identity(delta)) return q;
    const Eigen::Quaterniond out = delta * Eigen::Quaterniond(q.w, q.x, q.y, q.z);
    return Quat4f{static_cast<float>(out.w()), static_cast<float>(out.x()), static_cast<float>(out.y()),
                  static_cast<float>(out.z())};
}

Vec3f displace(const Vec3f& p, const Vec3d& d) {
    if (d.isZero(0.0)) return p;
    return (p.cast<double>() + d).cast<float>();
}

} // namespace

void SubsetTransform::validate(std::size_t scene_size) const {
    const std::size_t n = indices.size();
    if (p.size() != n || p_prime.size() != n || q_prime.size() != n) {
        throw Error(ErrorCode::Data, "subset transform arrays are not congruent");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (indices[i] >= scene_size) throw Error(ErrorCode::Data, "subset index out of range");
        if (std::abs(q_prime[i].norm() - 1.0) > 1e-9) {
            throw Error(ErrorCode::Data, "subset rotation " + std::to_string(i) + " is not unit length");
        }
    }
}

SubsetTransform make_subset_transform(const DeformGraph& graph, const ArapState& state) {
    SubsetTransform t;
    t.indices = graph.subset;
    t.p = state.p;
    t.p_prime = state.p_prime;
    t.q_prime.reserve(state.R.size());
    for (const auto& r : state.R) t.q_prime.push_back(canonical(r));
    return t;
}

InterpWeights interp_weights(const Vec3d& query, const KdTree& subset, std::size_t k, double temperature) {
    InterpWeights out;
    const auto nn = subset.nearest(query, k);
    if (nn.empty()) return out;
    const double tau = temperature > 0 ? temperature : 1.0;
    const double d0 = std::sqrt(nn.front().dist2);
    double sum = 0;
    for (const auto& n : nn) {
        const double w = std::exp(-(std::sqrt(n.dist2) - d0) / tau);
        out.nodes.push_back(n.index);
        out.weights.push_back(w);
        sum += w;
    }
    for (double& w : out.weights) w /= sum;
    return out;
}

double mean_spacing(const KdTree& subset) {
    if (subset.size() < 2) return 1.0;
    double sum = 0;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        sum += std::sqrt(subset.nearest(subset.points()[i], 1, i).front().dist2);
    }
    const double mean = sum / static_cast<double>(subset.size());
    return mean > 0 ? mean : 1.0;
}

GaussianScene propagate(const GaussianScene& scene, const std::optional<Region>& region,
                        const SubsetTransform& transform, const PropagationConfig& config,
                        PropagationStats* stats) {
    transform.validate(scene.size());
    if (transform.indices.empty()) throw Error(ErrorCode::Data, "empty subset transform");
    if (config.k == 0) throw Error(ErrorCode::Config, "interpolation neighbor count must be positive");
    const std::size_t k = std::min(config.k, transform.indices.size());

    const KdTree tree(transform.p);
    const double tau = config.temperature ? *config.temperature : mean_spacing(tree);
    if (!(tau > 0)) throw Error(ErrorCode::Config, "interpolation temperature must be positive");

    std::vector<std::ptrdiff_t> node_of(scene.size(), -1);
    for (std::size_t i = 0; i < transform.indices.size(); ++i) {
        node_of[transform.indices[i]] = static_cast<std::ptrdiff_t>(i);
    }
    std::vector<Vec3d> disp(transform.p.size());
    for (std::size_t i = 0; i < disp.size(); ++i) disp[i] = transform.p_prime[i] - transform.p[i];

    GaussianScene out = scene;
    std::vector<std::uint8_t> touched(scene.size(), 0), fallback(scene.size(), 0);

    parallel_for(0, scene.size(), [&](std::size_t l) {
        const Vec3d pl = scene.centers[l].cast<double>();
        if (region && !contains(*region, pl)) return;
        touched[l] = 1;
        if (const std::ptrdiff_t node = node_of[l]; node >= 0) {
            const auto i = static_cast<std::size_t>(node);
            out.centers[l] = disp[i].isZero(0.0) ? scene.centers[l] : transform.p_prime[i].cast<float>();
            out.rotations[l] = compose(transform.q_prime[i], scene.rotations[l]);
            return;
        }

        const InterpWeights iw = interp_weights(pl, tree, k, tau);
        // Blend relative to the dominant neighbor so equal displacements
        // reproduce exactly.
        const Vec3d& ref = disp[iw.nodes.front()];
        Vec3d d = ref;
        for (std::size_t n = 1; n < iw.nodes.size(); ++n) d += iw.weights[n] * (disp[iw.nodes[n]] - ref);
        out.centers[l] = displace(scene.centers[l], d);

        Eigen::Vector4d blend = Eigen::Vector4d::Zero();
        bool all_identity = true;
        for (std::size_t n = 0; n < iw.nodes.size(); ++n) {
            const Eigen::Quaterniond& q = transform.q_prime[iw.nodes[n]];
            all_identity = all_identity && is_identity(q);
            Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
            if (blend.dot(v) < 0) v = -v;
            blend += iw.weights[n] * v;
        }
        Eigen::Quaterniond delta = Eigen::Quaterniond::Identity();
        if (!all_identity) {
            const double norm = blend.norm();
            if (norm < 1e-8) {
                delta = transform.q_prime[iw.nodes.front()];
                fallback[l] = 1;
            } else {
                blend /= norm;
                delta = Eigen::Quaterniond(blend[0], blend[1], blend[2], blend[3]);
            }
        }
        out.rotations[l] = compose(delta, scene.rotations[l]);
    });

    const auto fallbacks = static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), 1));
    if (fallbacks > 0) {
        log::warn(std::to_string(fallbacks) +
                  " Gaussians had antipodal rotation blends; used the nearest node's rotation");
    }
    if (stats) {
        stats->updated = static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 1));
        stats->antipodal_fallbacks = fallbacks;
        stats->temperature = tau;
    }
    return out;
}

} // namespace arapgs
