#pragma once

#include <memory>

#include "tfm/forward25d.hpp"
#include "tfm/forward2d.hpp"
#include "tfm/inversion.hpp"

namespace tfm {

/// Operator pair for linear 2.5D inversion: domain L^2(Gamma_T, R^3),
/// range L^2(Omega, R^3). The forward object must outlive the pair.
LinearOperatorPair make_pair_25d(const LinearForward25& fwd);

/// Operator pair for the pure-2D linear model under the chosen parameter
/// inner product (the solve is L^2-self-adjoint; H10 composes the inverse
/// vector Dirichlet Laplacian).
LinearOperatorPair make_pair_linear2d(const Forward2D& fwd, ParamSpace space);

/// Nonlinear 2D problem for truncated Newton-CG. forward() warm-starts each
/// solve from the previous state; linearize() assembles the tangent once per
/// linearization point and shares it across all inner CG applications.
class Nonlinear2DProblem : public NonlinearProblem {
public:
    Nonlinear2DProblem(const Forward2D& fwd, ParamSpace space, NonlinearOpts opts = {});

    /// Displacement used to warm-start the first forward solve (e.g. the
    /// measured field when the initial parameter already approximates the
    /// solution). Later solves warm-start from the previous state.
    void set_displacement_guess(Vec u0) { displacement_guess_ = std::move(u0); }

    Vec forward(const Vec& parameter) override;
    LinearOperatorPair linearize() override;
    double ip_range(const Vec& a, const Vec& b) override { return fwd_->ip_l2(a, b); }
    double ip_domain(const Vec& a, const Vec& b) override {
        return space_ == ParamSpace::L2 ? fwd_->ip_l2(a, b) : fwd_->ip_h10(a, b);
    }
    double ip_error(const Vec& a, const Vec& b) override { return fwd_->ip_l2(a, b); }
    int domain_size() const override { return fwd_->space().n_dofs(); }

    const NonlinearState& last_state() const { return state_; }

private:
    const Forward2D* fwd_;
    ParamSpace space_;
    NonlinearOpts opts_;
    NonlinearState state_;
    bool have_state_ = false;
    std::optional<Vec> displacement_guess_;
};

}  // namespace tfm
