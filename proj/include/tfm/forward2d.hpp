#pragma once

#include "tfm/fem.hpp"

namespace tfm {

enum class ParamSpace { L2, H10 };

struct NonlinearOpts {
    double newton_tol = 1e-10;  // relative: residual <= tol * (1 + |T|_L2)
    int max_newton = 25;        // per homotopy step
    int homotopy_steps = 1;     // auto-escalates to 10 on failure unless disabled
    bool auto_escalate = true;
    const FeFunction* initial_guess = nullptr;
};

struct NonlinearState {
    FeFunction u;
    bool converged = false;
    int newton_iterations = 0;
    double residual_norm = 0.0;
    int homotopy_steps_used = 1;
};

class NewtonError : public std::runtime_error {
public:
    NewtonError(const std::string& msg, NonlinearState state)
        : std::runtime_error(msg), state(std::move(state)) {}
    NonlinearState state;
};

/// Pure-2D forward maps on a clamped planar substrate: the linear
/// Hooke/Dirichlet solve, energy minimization for the polyconvex law by
/// Newton with load stepping, the tangent (Frechet) solve at a frozen state,
/// and its adjoints under the L2 and H10 parameter inner products.
class Forward2D {
public:
    /// Keeps its own copy of the mesh; the argument need not outlive the operator.
    Forward2D(const Mesh& mesh2, const MaterialParams& params, int order = 2, double cg_tol = 1e-11);

    const Mesh& mesh() const { return mesh_; }
    const FeSpace& space() const { return space_; }
    const MaterialParams& params() const { return params_; }

    /// -div sigma_lin(u) = T, u = 0 on the boundary.
    FeFunction solve_linear(const FeFunction& density) const;

    /// Minimizes the stored energy minus the load term. Homotopy scales the
    /// load in equidistant steps, warm-starting each Newton solve; each step
    /// backtracks on energy increase or loss of det F > 0.
    NonlinearState solve_nonlinear(const FeFunction& density, const NonlinearOpts& opts = {}) const;

    /// Tangent solve at a converged state: K_t v = M h, v = 0 on the boundary.
    FeFunction frechet_apply(const NonlinearState& state, const FeFunction& h) const;
    /// L2 mode returns the tangent solve itself (the derivative is
    /// self-adjoint in L2); H10 additionally applies the inverse vector
    /// Dirichlet Laplacian.
    FeFunction frechet_adjoint_apply(const NonlinearState& state, const FeFunction& g,
                                     ParamSpace param_space) const;

    /// Discrete energy W(F) dx - (T, u): the objective of the nonlinear solve.
    std::optional<double> energy(const Vec& u, const Vec& density) const;

    double ip_l2(const Vec& a, const Vec& b) const { return weighted_inner(mass_, a, b); }
    double ip_h10(const Vec& a, const Vec& b) const { return weighted_inner(laplacian_, a, b); }
    double norm_l2(const Vec& a) const { return weighted_norm(mass_, a); }

    const SparseMat& stiffness() const { return stiffness_; }
    const SparseMat& mass() const { return mass_; }
    const SparseMat& laplacian() const { return laplacian_; }
    double cg_tol() const { return cg_tol_; }

    /// Assembled hyperelastic tangent at a frozen displacement, Dirichlet
    /// rows/cols replaced by identity. Shared by Newton and the inversion
    /// drivers (which apply it many times at a fixed state).
    SparseMat assemble_tangent(const FeFunction& state_u) const;

private:
    Vec newton_loop(const Vec& load_vec, double load_norm, Vec u, const NonlinearOpts& opts,
                    int& iterations, double& res_norm) const;

    MaterialParams params_;
    Mesh mesh_;  // owned; must precede the space
    FeSpace space_;
    SparseMat stiffness_;  // linear elasticity, identity-constrained
    SparseMat mass_;       // raw
    SparseMat laplacian_;  // vector Dirichlet Laplacian, identity-constrained
    double cg_tol_;
};

// Free-function views of the operations above, for callers that do not keep
// an operator object around.
FeFunction solve_linear2(const FeFunction& density, const MaterialParams& params, const Mesh& mesh2,
                         int order = 2);
NonlinearState solve_nonlinear2(const FeFunction& density, const MaterialParams& params, const Mesh& mesh2,
                                const NonlinearOpts& opts = {}, int order = 2);

}  // namespace tfm
