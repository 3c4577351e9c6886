#include "core/arap.hpp"

#include "core/error.hpp"
#include "core/parallel.hpp"

#include <Eigen/SVD>

namespace arapgs {

double arap_energy(const DeformGraph& graph, std::span<const Vec3d> p, std::span<const Vec3d> p_prime,
                   std::span<const Mat3d> R) {
    double total = 0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto nbrs = graph.neighbors_of(i);
        const auto w = graph.weights_of(i);
        double cell = 0;
        for (std::size_t e = 0; e < nbrs.size(); ++e) {
            const std::size_t j = nbrs[e];
            cell += w[e] * ((p_prime[i] - p_prime[j]) - R[i] * (p[i] - p[j])).squaredNorm();
        }
        total += graph.cell_weights[i] * cell;
    }
    return total;
}

Mat3d fit_rotation(const Mat3d& covariance) {
    Eigen::JacobiSVD<Mat3d> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3d& u = svd.matrixU();
    Mat3d v = svd.matrixV();
    Mat3d r = v * u.transpose();
    if (r.determinant() < 0) {
        // Singular values are sorted descending; flip the weakest axis.
        v.col(2) *= -1.0;
        r = v * u.transpose();
    }
    return r;
}

std::vector<Mat3d> fit_rotations(const DeformGraph& graph, std::span<const Vec3d> p,
                                 std::span<const Vec3d> p_prime) {
    std::vector<Mat3d> R(graph.size());
    parallel_for(0, graph.size(), [&](std::size_t i) {
        const auto nbrs = graph.neighbors_of(i);
        const auto w = graph.weights_of(i);
        Mat3d s = Mat3d::Zero();
        for (std::size_t e = 0; e < nbrs.size(); ++e) {
            const std::size_t j = nbrs[e];
            s.noalias() += w[e] * (p[i] - p[j]) * (p_prime[i] - p_prime[j]).transpose();
        }
        R[i] = fit_rotation(s);
    });
    return R;
}

GlobalSolver::GlobalSolver(const DeformGraph& graph) : graph_(graph) {
    const std::size_t n = graph.size();
    free_index_.assign(n, 0);
    targets_.assign(n, Vec3d::Zero());
    for (const auto& c : graph.constraints) {
        if (c.node >= n) throw Error(ErrorCode::Internal, "constraint references unknown node");
        free_index_[c.node] = -1;
        targets_[c.node] = c.target;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (free_index_[i] >= 0) {
            free_index_[i] = static_cast<std::ptrdiff_t>(free_nodes_.size());
            free_nodes_.push_back(i);
        }
    }

    std::size_t n_comp = 0;
    const auto label = graph.components(&n_comp);
    std::vector<bool> anchored(n_comp, false);
    for (const auto& c : graph.constraints) anchored[label[c.node]] = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (!anchored[label[i]]) {
            throw Error(ErrorCode::Solver, "reduced system is singular: graph component " +
                                               std::to_string(label[i]) + " (containing node " +
                                               std::to_string(i) + ") has no constrained node");
        }
    }

    if (free_nodes_.empty()) return;
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.directed_edge_count() + free_nodes_.size());
    for (std::size_t f = 0; f < free_nodes_.size(); ++f) {
        const std::size_t i = free_nodes_[f];
        const auto nbrs = graph.neighbors_of(i);
        const auto w = graph.weights_of(i);
        double diag = 0;
        for (std::size_t e = 0; e < nbrs.size(); ++e) {
            diag += w[e];
            const std::ptrdiff_t fj = free_index_[nbrs[e]];
            if (fj >= 0) triplets.emplace_back(static_cast<int>(f), static_cast<int>(fj), -w[e]);
        }
        triplets.emplace_back(static_cast<int>(f), static_cast<int>(f), diag);
    }
    const auto m = static_cast<Eigen::Index>(free_nodes_.size());
    Eigen::SparseMatrix<double> lap(m, m);
    lap.setFromTriplets(triplets.begin(), triplets.end());
    factor_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    factor_->compute(lap);
    if (factor_->info() != Eigen::Success || (factor_->vectorD().array() <= 0).any()) {
        throw Error(ErrorCode::Solver, "factorization of the reduced Laplacian failed");
    }
}

GlobalSolver::~GlobalSolver() = default;

std::vector<Vec3d> GlobalSolver::solve(std::span<const Vec3d> p, std::span<const Mat3d> R) const {
    const std::size_t n = graph_.size();
    std::vector<Vec3d> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (free_index_[i] < 0) out[i] = targets_[i];
    }
    if (free_nodes_.empty()) return out;

    Eigen::MatrixX3d rhs(static_cast<Eigen::Index>(free_nodes_.size()), 3);
    for (std::size_t f = 0; f < free_nodes_.size(); ++f) {
        const std::size_t i = free_nodes_[f];
        const auto nbrs = graph_.neighbors_of(i);
        const auto w = graph_.weights_of(i);
        Vec3d b = Vec3d::Zero();
        for (std::size_t e = 0; e < nbrs.size(); ++e) {
            const std::size_t j = nbrs[e];
            b += 0.5 * w[e] * ((R[i] + R[j]) * (p[i] - p[j]));
            if (free_index_[j] < 0) b += w[e] * targets_[j];
        }
        rhs.row(static_cast<Eigen::Index>(f)) = b.transpose();
    }
    const Eigen::MatrixX3d x = factor_->solve(rhs);
    if (factor_->info() != Eigen::Success || !x.allFinite()) {
        throw Error(ErrorCode::Solver, "global step produced a non-finite solution");
    }
    for (std::size_t f = 0; f < free_nodes_.size(); ++f) {
        out[free_nodes_[f]] = x.row(static_cast<Eigen::Index>(f)).transpose();
    }
    return out;
}

std::vector<Vec3d> solve_positions(const DeformGraph& graph, std::span<const Vec3d> p, std::span<const Mat3d> R) {
    return GlobalSolver(graph).solve(p, R);
}

ArapState arap_solve(const DeformGraph& graph, const ArapConfig& config, const ArapProgress& progress) {
    if (config.max_iters < 1) throw Error(ErrorCode::Config, "max_iters must be at least 1");
    if (!(config.rel_energy_tol >= 0)) throw Error(ErrorCode::Config, "rel_energy_tol must be non-negative");

    ArapState st;
    st.p = graph.positions;
    st.p_prime = st.p;
    for (const auto& c : graph.constraints) st.p_prime[c.node] = c.target;
    st.R.assign(graph.size(), Mat3d::Identity());
    st.energy = arap_energy(graph, st.p, st.p_prime, st.R);
    st.energy_trace.push_back(st.energy);

    // Zero energy at the start means every constraint already sits on its
    // rest position; (p, I) is then a global minimizer.
    if (st.energy == 0.0) {
        st.converged = true;
        if (progress) progress(0, st.energy);
        return st;
    }

    const GlobalSolver solver(graph);
    for (std::size_t it = 1; it <= config.max_iters; ++it) {
        st.R = fit_rotations(graph, st.p, st.p_prime);
        st.p_prime = solver.solve(st.p, st.R);
        const double e = arap_energy(graph, st.p, st.p_prime, st.R);
        const double prev = st.energy;
        st.energy = e;
        st.iteration = it;
        st.energy_trace.push_back(e);
        if (progress) progress(it, e);
        if (e == 0.0 || prev - e <= config.rel_energy_tol * prev) {
            st.converged = true;
            break;
        }
    }
    return st;
}

} // namespace arapgs
