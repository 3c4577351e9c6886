#include "core/neighborhood.hpp"

#include "core/error.hpp"
#include "core/knn.hpp"
#include "core/log.hpp"
#include "core/parallel.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <sstream>

namespace arapgs {

const char* to_string(ConstraintKind kind) {
    switch (kind) {
    case ConstraintKind::Handle: return "handle";
    case ConstraintKind::Anchor: return "anchor";
    case ConstraintKind::AutoAnchor: return "auto_anchor";
    case ConstraintKind::ComponentAnchor: return "component_anchor";
    }
    return "?";
}

namespace {

// Unbiased draw in [0, n); std::uniform_int_distribution is not portable
// across standard libraries, and sampling must be reproducible.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x < threshold);
    return x % n;
}

std::string fmt_vec(const Vec3d& v) {
    std::ostringstream s;
    s << '(' << v.x() << ", " << v.y() << ", " << v.z() << ')';
    return s.str();
}

void note(std::vector<std::string>* warnings, const std::string& msg) {
    log::warn(msg);
    if (warnings) warnings->push_back(msg);
}

} // namespace

SubsetSample sample_subset(const GaussianScene& scene, const std::optional<Region>& region, std::size_t n_sub,
                           std::uint64_t seed, std::span<const Vec3d> forced_points) {
    if (n_sub < 2) throw Error(ErrorCode::Config, "subset size must be at least 2");
    const std::vector<std::size_t> active = active_indices(scene, region);
    if (active.empty()) throw Error(ErrorCode::EmptySelection, "region filter selects no Gaussians");

    std::vector<std::size_t> chosen;
    if (n_sub >= active.size()) {
        chosen = active;
    } else {
        std::vector<std::size_t> pool = active;
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < n_sub; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_sub));
    }
    const std::size_t target_size = chosen.size();

    std::vector<bool> in_subset(scene.size(), false), forced(scene.size(), false);
    for (std::size_t g : chosen) in_subset[g] = true;

    SubsetSample out;
    out.snaps.reserve(forced_points.size());
    for (const Vec3d& point : forced_points) {
        std::size_t best = active.front();
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t g : active) {
            const double d2 = (scene.centers[g].cast<double>() - point).squaredNorm();
            if (d2 < best_d2) { // strict: ties keep the lower index
                best_d2 = d2;
                best = g;
            }
        }
        forced[best] = true;
        if (!in_subset[best]) {
            if (chosen.size() >= target_size) {
                // Evict the unforced member farthest from the forced point.
                std::size_t victim_pos = chosen.size();
                double victim_d2 = -1;
                for (std::size_t p = 0; p < chosen.size(); ++p) {
                    const std::size_t g = chosen[p];
                    if (forced[g]) continue;
                    const double d2 = (scene.centers[g].cast<double>() - point).squaredNorm();
                    if (d2 > victim_d2 || (d2 == victim_d2 && g < chosen[victim_pos])) {
                        victim_d2 = d2;
                        victim_pos = p;
                    }
                }
                if (victim_pos < chosen.size()) {
                    in_subset[chosen[victim_pos]] = false;
                    chosen[victim_pos] = best;
                } else {
                    chosen.push_back(best);
                }
            } else {
                chosen.push_back(best);
            }
            in_subset[best] = true;
        }
        out.snaps.push_back(Snap{point, best, 0, std::sqrt(best_d2)});
    }

    std::sort(chosen.begin(), chosen.end());
    out.indices = std::move(chosen);
    for (auto& s : out.snaps) {
        s.node = static_cast<std::size_t>(std::lower_bound(out.indices.begin(), out.indices.end(), s.gaussian) -
                                          out.indices.begin());
    }
    return out;
}

std::vector<std::size_t> DeformGraph::components(std::size_t* count) const {
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> label(size(), unset);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < size(); ++seed) {
        if (label[seed] != unset) continue;
        label[seed] = next;
        stack.push_back(seed);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t j : neighbors_of(i)) {
                if (label[j] == unset) {
                    label[j] = next;
                    stack.push_back(j);
                }
            }
        }
        ++next;
    }
    if (count) *count = next;
    return label;
}

DeformGraph build_graph(std::span<const Vec3d> positions, std::size_t k, WeightMode mode) {
    const std::size_t n = positions.size();
    if (k == 0) throw Error(ErrorCode::Config, "kNN size must be positive");
    if (n <= k) {
        throw Error(ErrorCode::Config,
                    "subset of " + std::to_string(n) + " points is too small for k=" + std::to_string(k));
    }

    DeformGraph graph;
    graph.positions.assign(positions.begin(), positions.end());
    const KdTree tree(graph.positions);

    std::vector<std::vector<Neighbor>> knn(n);
    parallel_for(0, n, [&](std::size_t i) { knn[i] = tree.nearest(graph.positions[i], k, i); }, 64);

    double dist_sum = 0;
    for (const auto& list : knn) {
        for (const auto& nb : list) dist_sum += std::sqrt(nb.dist2);
    }
    graph.mean_knn_distance = dist_sum / static_cast<double>(n * k);

    // Union symmetrization.
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& nb : knn[i]) {
            adj[i].push_back(nb.index);
            adj[nb.index].push_back(i);
        }
    }
    const double sigma2 = graph.mean_knn_distance * graph.mean_knn_distance;
    graph.offsets.assign(1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& list = adj[i];
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        for (std::size_t j : list) {
            graph.neighbors.push_back(j);
            double w = 1.0;
            if (mode == WeightMode::GaussianKernel && sigma2 > 0) {
                w = std::exp(-(graph.positions[i] - graph.positions[j]).squaredNorm() / sigma2);
            }
            graph.edge_weights.push_back(w);
        }
        graph.offsets.push_back(graph.neighbors.size());
    }
    graph.cell_weights.assign(n, 1.0);
    return graph;
}

std::vector<Constraint> handle_constraints(std::span<const Vec3d> node_positions, const DragSpec& spec,
                                           std::span<const Snap> snaps) {
    if (snaps.size() < spec.handles.size()) throw Error(ErrorCode::Internal, "missing handle snaps");
    std::map<std::size_t, Constraint> by_node;
    for (std::size_t h = 0; h < spec.handles.size(); ++h) {
        const Snap& s = snaps[h];
        const Vec3d target = node_positions[s.node] + (spec.handles[h].target - spec.handles[h].source);
        auto [it, inserted] = by_node.emplace(s.node, Constraint{s.node, target, ConstraintKind::Handle});
        if (!inserted && it->second.target != target) {
            throw Error(ErrorCode::ConflictingConstraint,
                        "handles " + std::to_string(h) + " and an earlier handle snap to Gaussian " +
                            std::to_string(s.gaussian) + " with different targets");
        }
    }
    for (std::size_t a = 0; a < spec.anchors.size(); ++a) {
        const std::size_t si = spec.handles.size() + a;
        if (si >= snaps.size()) throw Error(ErrorCode::Internal, "missing anchor snaps");
        const Snap& s = snaps[si];
        const Vec3d target = node_positions[s.node];
        auto [it, inserted] = by_node.emplace(s.node, Constraint{s.node, target, ConstraintKind::Anchor});
        if (!inserted && it->second.target != target) {
            throw Error(ErrorCode::ConflictingConstraint,
                        "anchor " + std::to_string(a) + " at " + fmt_vec(spec.anchors[a]) +
                            " snaps to a handle node with a nonzero drag (Gaussian " + std::to_string(s.gaussian) +
                            ")");
        }
    }
    std::vector<Constraint> out;
    out.reserve(by_node.size());
    for (auto& [node, c] : by_node) out.push_back(c);
    return out;
}

ConstraintStats assign_constraints(DeformGraph& graph, const DragSpec& spec, std::span<const Snap> snaps,
                                   std::vector<std::string>* warnings) {
    ConstraintStats stats;
    std::vector<Constraint> list = handle_constraints(graph.positions, spec, snaps);
    std::vector<bool> constrained(graph.size(), false);
    for (const auto& c : list) {
        constrained[c.node] = true;
        (c.kind == ConstraintKind::Handle ? stats.handles : stats.anchors)++;
    }

    if (spec.auto_anchor_radius) {
        const double r2 = *spec.auto_anchor_radius * *spec.auto_anchor_radius;
        for (std::size_t i = 0; i < graph.size(); ++i) {
            if (constrained[i]) continue;
            bool far = true;
            for (const auto& h : spec.handles) {
                if ((graph.positions[i] - h.source).squaredNorm() <= r2) {
                    far = false;
                    break;
                }
            }
            if (far) {
                list.push_back(Constraint{i, graph.positions[i], ConstraintKind::AutoAnchor});
                constrained[i] = true;
                ++stats.auto_anchors;
            }
        }
    }

    std::size_t n_comp = 0;
    const auto label = graph.components(&n_comp);
    std::vector<bool> has_constraint(n_comp, false);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        if (constrained[i]) has_constraint[label[i]] = true;
    }
    for (std::size_t i = 0; i < graph.size(); ++i) {
        // Nodes are visited in index order, so the first hit is the lowest.
        if (!has_constraint[label[i]]) {
            has_constraint[label[i]] = true;
            list.push_back(Constraint{i, graph.positions[i], ConstraintKind::ComponentAnchor});
            ++stats.component_anchors;
            note(warnings, "graph component " + std::to_string(label[i]) +
                               " has no constraint; anchoring its lowest node " + std::to_string(i));
        }
    }

    std::sort(list.begin(), list.end(), [](const Constraint& a, const Constraint& b) { return a.node < b.node; });
    graph.constraints = std::move(list);
    return stats;
}

} // namespace arapgs
