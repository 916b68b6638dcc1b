#include "tfm/forward25d.hpp"

namespace tfm {

LinearForward25::LinearForward25(const Mesh& mesh3, const MaterialParams& params, int order, double cg_tol)
    : params_(params),
      mesh_(mesh3),
      volume_space_(mesh_, order, 3),
      trace_(volume_space_, BoundaryTag::TOP),
      cg_tol_(cg_tol) {
    stiffness_ = assemble_bilinear(volume_space_, BilinearForm::elasticity(params_), BcMode::Apply);
    mass_volume_ = assemble_bilinear(volume_space_, BilinearForm::mass(), BcMode::Raw);
    mass_surface_ = assemble_bilinear(trace_.surface_space(), BilinearForm::mass(), BcMode::Raw);
}

FeFunction LinearForward25::forward(const FeFunction& traction) const {
    if (traction.space != &trace_.surface_space())
        throw std::invalid_argument("LinearForward25::forward: traction not on the top-surface space");
    // l_t(v) = (t, v)_{Gamma_T}; with matching surface/volume nodes this is
    // the surface mass applied to t, scattered into volume dofs.
    Vec rhs = trace_.scatter(mass_surface_ * traction.coeffs);
    zero_constrained(volume_space_, rhs);
    return FeFunction(volume_space_, solve_spd(stiffness_, rhs, cg_tol_));
}

FeFunction LinearForward25::adjoint(const FeFunction& w) const {
    if (w.space != &volume_space_)
        throw std::invalid_argument("LinearForward25::adjoint: argument not on the volume space");
    Vec rhs = mass_volume_ * w.coeffs;
    zero_constrained(volume_space_, rhs);
    FeFunction phi(volume_space_, solve_spd(stiffness_, rhs, cg_tol_));
    return trace_.trace(phi);
}

}  // namespace tfm
