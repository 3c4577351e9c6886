#pragma once

#include "core/neighborhood.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace arapgs {

struct ArapConfig {
    std::size_t max_iters = 16;
    double rel_energy_tol = 1e-6;
    WeightMode weight_mode = WeightMode::Uniform;
};

struct ArapState {
    std::vector<Vec3d> p;
    std::vector<Vec3d> p_prime;
    std::vector<Mat3d> R;
    double energy = 0;
    std::size_t iteration = 0;
    bool converged = false;
    /// Energy at initialization followed by the energy after every global step.
    std::vector<double> energy_trace;
};

/// sum_i w_i sum_{j in N(i)} w_ij |(p'_i - p'_j) - R_i (p_i - p_j)|^2
double arap_energy(const DeformGraph& graph, std::span<const Vec3d> p, std::span<const Vec3d> p_prime,
                   std::span<const Mat3d> R);

/// Proper rotation R maximizing tr(R S) for S = sum w e e'^T, i.e. the
/// best-fit rotation taking undeformed edges e onto deformed edges e'.
Mat3d fit_rotation(const Mat3d& covariance);

/// Local step: per-node best-fit rotation.
std::vector<Mat3d> fit_rotations(const DeformGraph& graph, std::span<const Vec3d> p,
                                 std::span<const Vec3d> p_prime);

/// Global step with hard constraints eliminated. The reduced Laplacian does
/// not depend on the rotations, so it is factorized once at construction
/// and every solve only rebuilds the right-hand side.
class GlobalSolver {
public:
    explicit GlobalSolver(const DeformGraph& graph);
    ~GlobalSolver();
    GlobalSolver(const GlobalSolver&) = delete;
    GlobalSolver& operator=(const GlobalSolver&) = delete;

    std::vector<Vec3d> solve(std::span<const Vec3d> p, std::span<const Mat3d> R) const;

    std::size_t free_count() const noexcept { return free_nodes_.size(); }

private:
    const DeformGraph& graph_;
    std::vector<std::ptrdiff_t> free_index_; ///< -1 for constrained nodes
    std::vector<std::size_t> free_nodes_;
    std::vector<Vec3d> targets_;             ///< indexed by node; valid where constrained
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor_;
};

/// One-shot global step; the constraints are read from graph.constraints.
std::vector<Vec3d> solve_positions(const DeformGraph& graph, std::span<const Vec3d> p, std::span<const Mat3d> R);

using ArapProgress = std::function<void(std::size_t iteration, double energy)>;

/// Alternating local/global minimization starting from p' = p (constrained
/// nodes clamped to their targets) and R = I.
ArapState arap_solve(const DeformGraph& graph, const ArapConfig& config, const ArapProgress& progress = {});

} // namespace arapgs
