#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace tfm {

/// Selects the additive constant of the stored energy. Paper3dConstant keeps
/// -3*mu/2 - lambda/4 (which leaves W(I) = -mu/2 for 2x2 gradients);
/// Consistent2d uses -mu - lambda/4 so that the natural state has zero energy.
/// Stress and tangent are unaffected either way.
enum class EnergyOffsetMode { Paper3dConstant, Consistent2d };

/// States with det F at or below this are treated as energetically forbidden.
inline constexpr double kDetGuard = 1e-8;

struct MaterialParams {
    double mu = 0.0;      // shear modulus [Pa]
    double lambda = 0.0;  // first Lame parameter [Pa]
    std::optional<double> young;    // provenance, if constructed from (E, nu)
    std::optional<double> poisson;
    EnergyOffsetMode offset_mode = EnergyOffsetMode::Consistent2d;

    static MaterialParams from_young_poisson(double young, double poisson,
                                             EnergyOffsetMode mode = EnergyOffsetMode::Consistent2d);
    static MaterialParams from_lame(double mu, double lambda,
                                    EnergyOffsetMode mode = EnergyOffsetMode::Consistent2d);
};

/// mu = E / (2(1+nu)), lambda = E*nu / ((1+nu)(1-2nu)). Requires E > 0 and
/// -1 < nu < 1/2 (lambda is singular at the limits).
std::pair<double, double> lame_from_young_poisson(double young, double poisson);

/// 2x2 deformation gradient with cached determinant and inverse.
struct DeformationState {
    Eigen::Matrix2d F;
    double detF = 1.0;
    Eigen::Matrix2d Finv;

    /// Throws std::domain_error when det F <= kDetGuard.
    static DeformationState from_gradient(const Eigen::Matrix2d& F);
};

/// Linear-elastic stress sigma = lambda tr(eps) I + 2 mu eps with the
/// symmetrized gradient eps. Works for 2x2 and 3x3 gradients.
Eigen::MatrixXd hooke_stress(const Eigen::MatrixXd& grad_u, const MaterialParams& p);

/// Polyconvex stored energy
///   W(F) = mu/2 |F|_F^2 + lambda/4 (det F)^2 - (mu + lambda/2) ln(det F) + offset.
double stored_energy(const Eigen::Matrix2d& F, const MaterialParams& p);

/// First Piola stress sigma = dW/dF = mu F + lambda/2 (det F)^2 F^-T - (mu + lambda/2) F^-T.
Eigen::Matrix2d piola_stress(const Eigen::Matrix2d& F, const MaterialParams& p);

/// Second-derivative (tangent) density at a frozen state F:
///   mu gv : gw + (mu + lambda/2 - lambda/2 (det F)^2) (F^-T gv^T F^-T) : gw
///   + lambda (det F)^2 (F^-T : gv)(F^-T : gw),
/// symmetric in (gv, gw).
double tangent_density(const Eigen::Matrix2d& F, const Eigen::Matrix2d& grad_v,
                       const Eigen::Matrix2d& grad_w, const MaterialParams& p);

/// lambda > 2 mu / (e - 1): guarantees quadratic coercivity of W.
bool check_coercivity_condition(const MaterialParams& p);

/// Constructive coercivity constants: W(F) >= C (|F|_F^2 + (det F)^2) + D
/// whenever check_coercivity_condition holds.
double coercivity_constant(const MaterialParams& p);  // C = min(mu/2, lambda/4 - (mu+lambda/2)/(2e))
double energy_offset(const MaterialParams& p);        // D = additive constant of W

/// Rebuilds F from a small symmetric strain E via F = (I + 2E)^(1/2)
/// (rotation-free square root). Requires I + 2E positive definite.
Eigen::Matrix2d deformation_from_strain(const Eigen::Matrix2d& strain);

/// |W(F(E)) - lambda/2 (tr E)^2 - mu tr(E^2)|, the defect of the quadratic
/// expansion around the natural state. Requires Consistent2d offset.
double expansion_residual(const MaterialParams& p, const Eigen::Matrix2d& strain);

/// Least-squares slope of log(residual) against log(scale) for the strain
/// family scale*direction. A cubic remainder gives a slope near 3.
/// Throws std::domain_error on a degenerate fit (all residuals ~ 0) and
/// std::invalid_argument when the offset mode is not Consistent2d.
double expansion_order(const MaterialParams& p, const Eigen::Matrix2d& direction,
                       const std::vector<double>& scales);

}  // namespace tfm
