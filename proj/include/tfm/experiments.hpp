#pragma once

#include <cstdint>

#include "tfm/fem.hpp"
#include "tfm/forward2d.hpp"

namespace tfm {

/// One compactly supported force spot: a bump profile of unit radius around
/// a center, pulling along a fixed direction.
struct ForceSpot {
    Eigen::Vector2d center;
    Eigen::Vector2d direction;
    double magnitude = 0.0;
    double radius = 1.0;
};

/// The four spots of the synthetic "cell" force field.
std::vector<ForceSpot> standard_force_spots(double magnitude = 10.0);

/// Radially symmetric ring pulling towards the origin:
///   t(x) = a exp(-1 / (1 - |x|^2)) (-x1, -x2, 0) for |x| < 1, zero outside.
Eigen::Vector3d force_ring(double a, const Eigen::Vector3d& x);

/// Sum of bump-profile spots: b exp(-1 / (1 - |x - y_i|^2)) (d_i, 0) over all
/// spots with |x - y_i| < 1. Overlapping spots add.
Eigen::Vector3d force_spots(double b, const Eigen::Vector3d& x);
Eigen::Vector3d force_spots(const std::vector<ForceSpot>& spots, const Eigen::Vector3d& x);

struct NoisyData {
    FeFunction field;
    double delta = 0.0;  // L2 norm of the injected noise
    double level_percent = 0.0;
    std::uint64_t seed = 0;
};

/// Adds white Gaussian noise in the coefficient basis, rescaled so that
/// 100 * |noise|_L2 / |exact|_L2 equals level_percent exactly. The mass
/// matrix must be the raw (unconstrained) Gram matrix of the field's space.
NoisyData add_noise(const FeFunction& exact, const SparseMat& mass, double level_percent,
                    std::uint64_t seed);

/// T = t / h and back (pointwise coefficient scaling).
FeFunction traction_to_density(const FeFunction& traction, double thickness);
FeFunction density_to_traction(const FeFunction& density, double thickness);

/// 100 * |rec - truth|_L2 / |truth|_L2 with the given raw mass matrix.
double relative_error_percent(const FeFunction& rec, const FeFunction& truth, const SparseMat& mass);

/// |t|_L2 divided by the norm of the all-ones field on the same space.
double relative_force_norm(const FeFunction& t, const SparseMat& mass);

struct ModelComparisonRow {
    double magnitude = 0.0;
    double relative_force = 0.0;
    double discrepancy_percent = 0.0;  // 100 |u_lin - u_nl| / |u_nl|
    bool solver_failed = false;
};

/// Linear vs nonlinear forward displacements for the ring field across load
/// magnitudes. Zero magnitude reports zero discrepancy by convention;
/// nonlinear solver failures annotate the row instead of aborting the sweep.
std::vector<ModelComparisonRow> compare_models(const std::vector<double>& magnitudes,
                                               const Forward2D& fwd);

/// Noise estimate from a displacement margin: the L2 norm over an axis-aligned
/// box scaled by sqrt(|Omega| / |region|). Both measures use the same
/// quadrature so a constant field gives |c| sqrt(|Omega|) exactly.
double estimate_noise_from_margin(const FeFunction& field, const Eigen::Vector2d& box_lo,
                                  const Eigen::Vector2d& box_hi);

}  // namespace tfm
