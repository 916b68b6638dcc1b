#include "tfm/operators.hpp"

namespace tfm {

LinearOperatorPair make_pair_25d(const LinearForward25& fwd) {
    LinearOperatorPair pair;
    const FeSpace& surface = fwd.traction_space();
    const FeSpace& volume = fwd.volume_space();
    pair.domain_size = surface.n_dofs();
    pair.range_size = volume.n_dofs();
    pair.apply = [&fwd, &surface](const Vec& t) {
        return fwd.forward(FeFunction(surface, t)).coeffs;
    };
    pair.adjoint = [&fwd, &volume](const Vec& w) {
        return fwd.adjoint(FeFunction(volume, w)).coeffs;
    };
    pair.ip_domain = [&fwd](const Vec& a, const Vec& b) { return fwd.ip_surface(a, b); };
    pair.ip_range = [&fwd](const Vec& a, const Vec& b) { return fwd.ip_volume(a, b); };
    return pair;
}

LinearOperatorPair make_pair_linear2d(const Forward2D& fwd, ParamSpace space) {
    LinearOperatorPair pair;
    const FeSpace& fe = fwd.space();
    pair.domain_size = fe.n_dofs();
    pair.range_size = fe.n_dofs();
    pair.apply = [&fwd, &fe](const Vec& t) { return fwd.solve_linear(FeFunction(fe, t)).coeffs; };
    if (space == ParamSpace::L2) {
        pair.adjoint = pair.apply;  // self-adjoint in L2
        pair.ip_domain = [&fwd](const Vec& a, const Vec& b) { return fwd.ip_l2(a, b); };
    } else {
        pair.adjoint = [&fwd, &fe](const Vec& g) {
            Vec v = fwd.solve_linear(FeFunction(fe, g)).coeffs;
            Vec rhs = fwd.mass() * v;
            zero_constrained(fe, rhs);
            return solve_spd(fwd.laplacian(), rhs, fwd.cg_tol());
        };
        pair.ip_domain = [&fwd](const Vec& a, const Vec& b) { return fwd.ip_h10(a, b); };
    }
    pair.ip_range = [&fwd](const Vec& a, const Vec& b) { return fwd.ip_l2(a, b); };
    pair.ip_error = pair.ip_range;  // errors are reported in L2 for both spaces
    return pair;
}

Nonlinear2DProblem::Nonlinear2DProblem(const Forward2D& fwd, ParamSpace space, NonlinearOpts opts)
    : fwd_(&fwd), space_(space), opts_(std::move(opts)) {}

Vec Nonlinear2DProblem::forward(const Vec& parameter) {
    NonlinearOpts opts = opts_;
    FeFunction guess;
    if (have_state_) {
        opts.initial_guess = &state_.u;  // warm start from the previous state
        opts.homotopy_steps = 1;         // load stepping makes no sense from there
    } else if (displacement_guess_) {
        guess = FeFunction(fwd_->space(), *displacement_guess_);
        opts.initial_guess = &guess;
        opts.homotopy_steps = 1;  // already near the solution
    }
    state_ = fwd_->solve_nonlinear(FeFunction(fwd_->space(), parameter), opts);
    have_state_ = true;
    return state_.u.coeffs;
}

LinearOperatorPair Nonlinear2DProblem::linearize() {
    if (!have_state_) throw std::logic_error("Nonlinear2DProblem::linearize: no forward evaluation yet");
    auto tangent = std::make_shared<SparseMat>(fwd_->assemble_tangent(state_.u));
    const Forward2D* fwd = fwd_;
    const FeSpace* fe = &fwd_->space();
    // the inner iteration is truncated at rho * R anyway; near-singular
    // tangents cannot be resolved to the full operator tolerance
    const double tol = std::max(fwd_->cg_tol(), 1e-9);

    LinearOperatorPair pair;
    pair.domain_size = fe->n_dofs();
    pair.range_size = fe->n_dofs();

    auto tangent_solve = [tangent, fwd, fe, tol](const Vec& h) {
        Vec rhs = fwd->mass() * h;
        zero_constrained(*fe, rhs);
        return solve_symmetric(*tangent, rhs, tol);
    };
    pair.apply = tangent_solve;
    if (space_ == ParamSpace::L2) {
        pair.adjoint = tangent_solve;  // self-adjoint in L2
        pair.ip_domain = [fwd](const Vec& a, const Vec& b) { return fwd->ip_l2(a, b); };
    } else {
        pair.adjoint = [tangent_solve, fwd, fe, tol](const Vec& g) {
            Vec v = tangent_solve(g);
            Vec rhs = fwd->mass() * v;
            zero_constrained(*fe, rhs);
            return solve_spd(fwd->laplacian(), rhs, tol);
        };
        pair.ip_domain = [fwd](const Vec& a, const Vec& b) { return fwd->ip_h10(a, b); };
    }
    pair.ip_range = [fwd](const Vec& a, const Vec& b) { return fwd->ip_l2(a, b); };
    return pair;
}

}  // namespace tfm
