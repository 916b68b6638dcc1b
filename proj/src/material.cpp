#include "tfm/material.hpp"

#include <cmath>
#include <stdexcept>

namespace tfm {

std::pair<double, double> lame_from_young_poisson(double young, double poisson) {
    if (young <= 0.0) throw std::invalid_argument("lame_from_young_poisson: Young modulus must be positive");
    if (poisson <= -1.0 || poisson >= 0.5)
        throw std::invalid_argument("lame_from_young_poisson: Poisson ratio must lie in (-1, 1/2)");
    const double mu = young / (2.0 * (1.0 + poisson));
    const double lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    return {mu, lambda};
}

MaterialParams MaterialParams::from_young_poisson(double young, double poisson, EnergyOffsetMode mode) {
    auto [mu, lambda] = lame_from_young_poisson(young, poisson);
    MaterialParams p;
    p.mu = mu;
    p.lambda = lambda;
    p.young = young;
    p.poisson = poisson;
    p.offset_mode = mode;
    return p;
}

MaterialParams MaterialParams::from_lame(double mu, double lambda, EnergyOffsetMode mode) {
    if (mu <= 0.0 || lambda <= 0.0)
        throw std::invalid_argument("MaterialParams: Lame constants must be positive");
    MaterialParams p;
    p.mu = mu;
    p.lambda = lambda;
    p.offset_mode = mode;
    return p;
}

DeformationState DeformationState::from_gradient(const Eigen::Matrix2d& F) {
    const double det = F.determinant();
    if (det <= kDetGuard) throw std::domain_error("DeformationState: det F <= 0 (orientation lost)");
    DeformationState s;
    s.F = F;
    s.detF = det;
    s.Finv = F.inverse();
    return s;
}

Eigen::MatrixXd hooke_stress(const Eigen::MatrixXd& grad_u, const MaterialParams& p) {
    const auto n = grad_u.rows();
    Eigen::MatrixXd eps = 0.5 * (grad_u + grad_u.transpose());
    return p.lambda * eps.trace() * Eigen::MatrixXd::Identity(n, n) + 2.0 * p.mu * eps;
}

double energy_offset(const MaterialParams& p) {
    return p.offset_mode == EnergyOffsetMode::Paper3dConstant ? -1.5 * p.mu - 0.25 * p.lambda
                                                              : -p.mu - 0.25 * p.lambda;
}

double stored_energy(const Eigen::Matrix2d& F, const MaterialParams& p) {
    const double det = F.determinant();
    if (det <= kDetGuard) throw std::domain_error("stored_energy: det F <= 0");
    return 0.5 * p.mu * F.squaredNorm() + 0.25 * p.lambda * det * det -
           (p.mu + 0.5 * p.lambda) * std::log(det) + energy_offset(p);
}

Eigen::Matrix2d piola_stress(const Eigen::Matrix2d& F, const MaterialParams& p) {
    const double det = F.determinant();
    if (det <= kDetGuard) throw std::domain_error("piola_stress: det F <= 0");
    Eigen::Matrix2d FinvT = F.inverse().transpose();
    return p.mu * F + (0.5 * p.lambda * det * det - p.mu - 0.5 * p.lambda) * FinvT;
}

double tangent_density(const Eigen::Matrix2d& F, const Eigen::Matrix2d& grad_v,
                       const Eigen::Matrix2d& grad_w, const MaterialParams& p) {
    const double det = F.determinant();
    if (det <= kDetGuard) throw std::domain_error("tangent_density: det F <= 0");
    const Eigen::Matrix2d Finv = F.inverse();
    const double det2 = det * det;
    const double kappa = p.mu + 0.5 * p.lambda - 0.5 * p.lambda * det2;
    // (F^-T gv^T F^-T) : gw = tr(F^-1 gv F^-1 gw); accumulation is grouped so
    // that swapping gv and gw gives the bit-identical value
    const Eigen::Matrix2d P = Finv * grad_v;
    const Eigen::Matrix2d Q = Finv * grad_w;
    const double mixed = (P(0, 0) * Q(0, 0) + P(1, 1) * Q(1, 1)) + (P(0, 1) * Q(1, 0) + P(1, 0) * Q(0, 1));
    const double trace_v = Finv.transpose().cwiseProduct(grad_v).sum();
    const double trace_w = Finv.transpose().cwiseProduct(grad_w).sum();
    return p.mu * grad_v.cwiseProduct(grad_w).sum() + kappa * mixed +
           p.lambda * det2 * (trace_v * trace_w);
}

bool check_coercivity_condition(const MaterialParams& p) {
    return p.lambda > 2.0 * p.mu / (std::exp(1.0) - 1.0);
}

double coercivity_constant(const MaterialParams& p) {
    const double b = 0.25 * p.lambda - (p.mu + 0.5 * p.lambda) / (2.0 * std::exp(1.0));
    return std::min(0.5 * p.mu, b);
}

Eigen::Matrix2d deformation_from_strain(const Eigen::Matrix2d& strain) {
    Eigen::Matrix2d C = Eigen::Matrix2d::Identity() + 2.0 * strain;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(C);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw std::domain_error("deformation_from_strain: I + 2E is not positive definite");
    return eig.operatorSqrt();
}

double expansion_residual(const MaterialParams& p, const Eigen::Matrix2d& strain) {
    Eigen::Matrix2d F = deformation_from_strain(strain);
    const double quadratic =
        0.5 * p.lambda * strain.trace() * strain.trace() + p.mu * (strain * strain).trace();
    return std::abs(stored_energy(F, p) - quadratic);
}

double expansion_order(const MaterialParams& p, const Eigen::Matrix2d& direction,
                       const std::vector<double>& scales) {
    if (p.offset_mode != EnergyOffsetMode::Consistent2d)
        throw std::invalid_argument("expansion_order: requires the Consistent2d energy offset");
    if (scales.size() < 2) throw std::invalid_argument("expansion_order: need at least two scales");

    std::vector<double> xs, ys;
    const double floor = 1e-300;
    for (double s : scales) {
        const double r = expansion_residual(p, s * direction);
        if (r > floor) {
            xs.push_back(std::log(s));
            ys.push_back(std::log(r));
        }
    }
    if (xs.size() < 2) throw std::domain_error("expansion_order: degenerate fit (residuals vanish)");

    // least-squares slope
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    if (den == 0.0) throw std::domain_error("expansion_order: degenerate fit (identical scales)");
    return num / den;
}

}  // namespace tfm
