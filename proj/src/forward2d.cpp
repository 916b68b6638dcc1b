#include "tfm/forward2d.hpp"

#include <cmath>

namespace tfm {

Forward2D::Forward2D(const Mesh& mesh2, const MaterialParams& params, int order, double cg_tol)
    : params_(params), mesh_(mesh2), space_(mesh_, order, 2), cg_tol_(cg_tol) {
    if (mesh2.dim != 2) throw std::invalid_argument("Forward2D: needs a 2D mesh");
    stiffness_ = assemble_bilinear(space_, BilinearForm::elasticity(params_), BcMode::Apply);
    mass_ = assemble_bilinear(space_, BilinearForm::mass(), BcMode::Raw);
    laplacian_ = assemble_bilinear(space_, BilinearForm::vector_laplacian(), BcMode::Apply);
}

FeFunction Forward2D::solve_linear(const FeFunction& density) const {
    if (density.space != &space_)
        throw std::invalid_argument("Forward2D::solve_linear: density not on the operator space");
    Vec rhs = mass_ * density.coeffs;
    zero_constrained(space_, rhs);
    return FeFunction(space_, solve_spd(stiffness_, rhs, cg_tol_));
}

SparseMat Forward2D::assemble_tangent(const FeFunction& state_u) const {
    return assemble_bilinear(space_, BilinearForm::hyperelastic_tangent(params_, state_u), BcMode::Apply);
}

std::optional<double> Forward2D::energy(const Vec& u, const Vec& density) const {
    const auto internal = hyperelastic_energy(space_, u, params_);
    if (!internal) return std::nullopt;
    Vec load = mass_ * density;
    zero_constrained(space_, load);
    return *internal - load.dot(u);
}

Vec Forward2D::newton_loop(const Vec& load_vec, double load_norm, Vec u, const NonlinearOpts& opts,
                           int& iterations, double& res_norm) const {
    const double tol = opts.newton_tol * (1.0 + load_norm);

    auto residual_at = [&](const Vec& v) -> std::optional<Vec> {
        auto r = hyperelastic_residual(space_, v, params_);
        if (!r) return std::nullopt;
        *r -= load_vec;
        return r;
    };
    auto energy_at = [&](const Vec& v) -> std::optional<double> {
        const auto e = hyperelastic_energy(space_, v, params_);
        if (!e) return std::nullopt;
        return *e - load_vec.dot(v);
    };

    auto res = residual_at(u);
    if (!res) {
        NonlinearState st{FeFunction(space_, u), false, 0, std::numeric_limits<double>::infinity(), 1};
        throw NewtonError("solve_nonlinear: initial state has det F <= 0", std::move(st));
    }
    res_norm = res->norm();

    for (int it = 0; it < opts.max_newton; ++it) {
        if (res_norm <= tol) return u;

        SparseMat tangent = assemble_tangent(FeFunction(space_, u));
        Vec step;
        try {
            // inexact Newton: the step need not be resolved much below the
            // current nonlinear residual scale
            const double step_tol = std::max(cg_tol_, 1e-8);
            step = solve_symmetric(tangent, -*res, step_tol);
        } catch (const SolveError& e) {
            NonlinearState st{FeFunction(space_, u), false, iterations, res_norm, 1};
            throw NewtonError(std::string("solve_nonlinear: tangent solve failed (") + e.what() + ")",
                              std::move(st));
        }
        ++iterations;

        // backtracking on energy increase or loss of det F > 0; near the
        // optimum the energy decrement drops below evaluation roundoff, so a
        // residual decrease also counts as progress
        const double e_cur = *energy_at(u);
        const double slack = 1e-12 * (1.0 + std::abs(e_cur));
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 20; ++ls) {
            Vec u_try = u + alpha * step;
            const auto e_try = energy_at(u_try);
            if (e_try) {
                const auto r_try = residual_at(u_try);
                if (r_try && (*e_try <= e_cur + slack || r_try->norm() <= 0.9 * res_norm)) {
                    u = std::move(u_try);
                    res = r_try;
                    res_norm = res->norm();
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            NonlinearState st{FeFunction(space_, u), false, iterations, res_norm, 1};
            throw NewtonError("solve_nonlinear: line search failed after 20 halvings", std::move(st));
        }
    }
    if (res_norm <= tol) return u;
    NonlinearState st{FeFunction(space_, u), false, iterations, res_norm, 1};
    throw NewtonError("solve_nonlinear: Newton iteration budget exhausted", std::move(st));
}

NonlinearState Forward2D::solve_nonlinear(const FeFunction& density, const NonlinearOpts& opts) const {
    if (density.space != &space_)
        throw std::invalid_argument("Forward2D::solve_nonlinear: density not on the operator space");

    Vec full_load = mass_ * density.coeffs;
    zero_constrained(space_, full_load);
    const double full_norm = norm_l2(density.coeffs);

    Vec u0 = Vec::Zero(space_.n_dofs());
    if (opts.initial_guess) {
        if (opts.initial_guess->space != &space_)
            throw std::invalid_argument("Forward2D::solve_nonlinear: initial guess on a different space");
        u0 = opts.initial_guess->coeffs;
    }

    auto run = [&](int steps) -> NonlinearState {
        Vec u = u0;
        int iterations = 0;
        double res_norm = 0.0;
        for (int k = 1; k <= steps; ++k) {
            const double s = static_cast<double>(k) / steps;
            // the tolerance stays pinned to the full load so that intermediate
            // steps do not chase the assembly roundoff floor
            u = newton_loop(s * full_load, full_norm, std::move(u), opts, iterations, res_norm);
        }
        NonlinearState state{FeFunction(space_, std::move(u)), true, iterations, res_norm, steps};
        return state;
    };

    try {
        return run(std::max(1, opts.homotopy_steps));
    } catch (const NewtonError&) {
        if (!opts.auto_escalate || opts.homotopy_steps >= 10) throw;
        NonlinearState state = run(10);
        return state;
    }
}

FeFunction Forward2D::frechet_apply(const NonlinearState& state, const FeFunction& h) const {
    if (!state.converged) throw std::invalid_argument("frechet_apply: state not converged");
    if (h.space != &space_) throw std::invalid_argument("frechet_apply: direction not on the operator space");
    SparseMat tangent = assemble_tangent(state.u);
    Vec rhs = mass_ * h.coeffs;
    zero_constrained(space_, rhs);
    return FeFunction(space_, solve_symmetric(tangent, rhs, cg_tol_));
}

FeFunction Forward2D::frechet_adjoint_apply(const NonlinearState& state, const FeFunction& g,
                                            ParamSpace param_space) const {
    FeFunction v = frechet_apply(state, g);
    if (param_space == ParamSpace::L2) return v;  // self-adjoint in L2
    Vec rhs = mass_ * v.coeffs;
    zero_constrained(space_, rhs);
    return FeFunction(space_, solve_spd(laplacian_, rhs, cg_tol_));
}

FeFunction solve_linear2(const FeFunction& density, const MaterialParams& params, const Mesh& mesh2,
                         int order) {
    Forward2D op(mesh2, params, order);
    FeFunction local(op.space(), density.coeffs);
    FeFunction u = op.solve_linear(local);
    // rebind to the caller's space (same mesh/order/layout)
    return FeFunction(*density.space, u.coeffs);
}

NonlinearState solve_nonlinear2(const FeFunction& density, const MaterialParams& params, const Mesh& mesh2,
                                const NonlinearOpts& opts, int order) {
    Forward2D op(mesh2, params, order);
    FeFunction local(op.space(), density.coeffs);
    NonlinearState st = op.solve_nonlinear(local, opts);
    return NonlinearState{FeFunction(*density.space, st.u.coeffs), st.converged, st.newton_iterations,
                          st.residual_norm, st.homotopy_steps_used};
}

}  // namespace tfm
