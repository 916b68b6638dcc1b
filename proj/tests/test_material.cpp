#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tfm/material.hpp"

using namespace tfm;

namespace {

std::mt19937_64 rng(42);

Eigen::Matrix2d random_gradient(double scale) {
    std::uniform_real_distribution<double> uni(-scale, scale);
    Eigen::Matrix2d g;
    g << uni(rng), uni(rng), uni(rng), uni(rng);
    return g;
}

Eigen::Matrix2d random_deformation(double min_det) {
    while (true) {
        Eigen::Matrix2d F = Eigen::Matrix2d::Identity() + random_gradient(0.4);
        if (F.determinant() > min_det) return F;
    }
}

const MaterialParams kSoft = MaterialParams::from_young_poisson(10000.0, 0.45);

}  // namespace

TEST_CASE("Lame constants from Young modulus and Poisson ratio") {
    auto [mu, lambda] = lame_from_young_poisson(10000.0, 0.45);
    CHECK(mu == doctest::Approx(3448.0).epsilon(2e-4));      // ~3448 Pa
    CHECK(lambda == doctest::Approx(31034.0).epsilon(2e-5));  // ~31034 Pa

    auto [mu0, lambda0] = lame_from_young_poisson(7000.0, 0.0);
    CHECK(mu0 == doctest::Approx(3500.0));
    CHECK(lambda0 == doctest::Approx(0.0));

    // direct formula evaluation for the stiffer experimental gel
    auto [mu34, lambda34] = lame_from_young_poisson(34000.0, 0.45);
    CHECK(mu34 == doctest::Approx(34000.0 / 2.9).epsilon(1e-14));
    CHECK(lambda34 == doctest::Approx(34000.0 * 0.45 / (1.45 * 0.1)).epsilon(1e-14));

    CHECK_THROWS_AS(lame_from_young_poisson(10000.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(lame_from_young_poisson(10000.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(lame_from_young_poisson(-1.0, 0.3), std::invalid_argument);
}

TEST_CASE("provenance satisfies the conversion identity") {
    const MaterialParams p = MaterialParams::from_young_poisson(12345.0, 0.37);
    REQUIRE(p.young.has_value());
    const double mu = *p.young / (2.0 * (1.0 + *p.poisson));
    const double lambda = *p.young * *p.poisson / ((1.0 + *p.poisson) * (1.0 - 2.0 * *p.poisson));
    CHECK(p.mu == doctest::Approx(mu).epsilon(1e-12));
    CHECK(p.lambda == doctest::Approx(lambda).epsilon(1e-12));
}

TEST_CASE("Hooke stress: zero, isotropic dilation, componentwise oracle") {
    CHECK(hooke_stress(Eigen::Matrix2d::Zero(), kSoft).norm() == 0.0);

    const Eigen::MatrixXd dil = hooke_stress(Eigen::Matrix2d::Identity(), kSoft);
    CHECK((dil - (2 * kSoft.lambda + 2 * kSoft.mu) * Eigen::Matrix2d::Identity()).norm() < 1e-10);

    for (int n : {2, 3}) {
        Eigen::MatrixXd g(n, n);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = uni(rng);
        const Eigen::MatrixXd sigma = hooke_stress(g, kSoft);
        // independent componentwise expansion
        double trace_eps = 0.0;
        for (int i = 0; i < n; ++i) trace_eps += g(i, i);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double eps_ij = 0.5 * (g(i, j) + g(j, i));
                const double expected = kSoft.lambda * trace_eps * (i == j ? 1.0 : 0.0) +
                                        2.0 * kSoft.mu * eps_ij;
                CHECK(sigma(i, j) == doctest::Approx(expected).epsilon(1e-12));
            }
    }
}

TEST_CASE("stored energy at the natural state per offset mode") {
    MaterialParams consistent = kSoft;
    CHECK(stored_energy(Eigen::Matrix2d::Identity(), consistent) == doctest::Approx(0.0));

    MaterialParams paper = MaterialParams::from_young_poisson(10000.0, 0.45, EnergyOffsetMode::Paper3dConstant);
    CHECK(stored_energy(Eigen::Matrix2d::Identity(), paper) == doctest::Approx(-0.5 * paper.mu).epsilon(1e-12));
}

TEST_CASE("stored energy: direct evaluation at F = 2I") {
    for (auto mode : {EnergyOffsetMode::Consistent2d, EnergyOffsetMode::Paper3dConstant}) {
        MaterialParams p = MaterialParams::from_young_poisson(10000.0, 0.45, mode);
        const double offset = (mode == EnergyOffsetMode::Consistent2d) ? -p.mu - 0.25 * p.lambda
                                                                       : -1.5 * p.mu - 0.25 * p.lambda;
        const double expected =
            0.5 * p.mu * 8.0 + 0.25 * p.lambda * 16.0 - (p.mu + 0.5 * p.lambda) * std::log(4.0) + offset;
        CHECK(stored_energy(2.0 * Eigen::Matrix2d::Identity(), p) ==
              doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("stored energy rejects inverted states") {
    Eigen::Matrix2d F = Eigen::Matrix2d::Identity();
    F(0, 0) = -1.0;
    CHECK_THROWS_AS(stored_energy(F, kSoft), std::domain_error);
    CHECK_THROWS_AS(piola_stress(F, kSoft), std::domain_error);
    CHECK_THROWS_AS(DeformationState::from_gradient(F), std::domain_error);
}

TEST_CASE("deformation state caches a consistent inverse") {
    const Eigen::Matrix2d F = random_deformation(0.3);
    const DeformationState s = DeformationState::from_gradient(F);
    CHECK((s.Finv * s.F - Eigen::Matrix2d::Identity()).norm() < 1e-12);
    CHECK(s.detF == doctest::Approx(F.determinant()));
}

TEST_CASE("Piola stress vanishes at the natural state, exactly") {
    const Eigen::Matrix2d sigma = piola_stress(Eigen::Matrix2d::Identity(), kSoft);
    CHECK(sigma.norm() == 0.0);
}

TEST_CASE("Piola stress: closed form for a diagonal stretch") {
    const Eigen::Matrix2d F = Eigen::Vector2d(2.0, 1.0).asDiagonal();
    const Eigen::Matrix2d sigma = piola_stress(F, kSoft);
    const Eigen::Matrix2d FinvT = Eigen::Vector2d(0.5, 1.0).asDiagonal();
    const Eigen::Matrix2d expected =
        kSoft.mu * F + (0.5 * kSoft.lambda * 4.0) * FinvT - (kSoft.mu + 0.5 * kSoft.lambda) * FinvT;
    CHECK((sigma - expected).norm() < 1e-10 * expected.norm());
}

TEST_CASE("Piola stress equals central differences of the stored energy") {
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Matrix2d F = random_deformation(0.3);
        const double h = 1e-5 * F.norm();
        const Eigen::Matrix2d sigma = piola_stress(F, kSoft);
        Eigen::Matrix2d fd;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                Eigen::Matrix2d Fp = F, Fm = F;
                Fp(i, j) += h;
                Fm(i, j) -= h;
                fd(i, j) = (stored_energy(Fp, kSoft) - stored_energy(Fm, kSoft)) / (2.0 * h);
            }
        CHECK((fd - sigma).norm() <= 1e-6 * sigma.norm());
    }
}

TEST_CASE("tangent density at identity reduces to the Hooke tangent") {
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Matrix2d gv = random_gradient(1.0);
        const Eigen::Matrix2d gw = random_gradient(1.0);
        const double value = tangent_density(Eigen::Matrix2d::Identity(), gv, gw, kSoft);
        const double hooke = kSoft.mu * gv.cwiseProduct(gw).sum() +
                             kSoft.mu * gv.transpose().cwiseProduct(gw).sum() +
                             kSoft.lambda * gv.trace() * gw.trace();
        CHECK(value == doctest::Approx(hooke).epsilon(1e-12));
    }
}

TEST_CASE("tangent density is symmetric in its two directions, exactly") {
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Matrix2d F = random_deformation(0.2);
        const Eigen::Matrix2d gv = random_gradient(1.0);
        const Eigen::Matrix2d gw = random_gradient(1.0);
        CHECK(tangent_density(F, gv, gw, kSoft) == tangent_density(F, gw, gv, kSoft));
    }
}

TEST_CASE("tangent density equals central differences of the Piola stress") {
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Matrix2d F = random_deformation(0.3);
        const Eigen::Matrix2d gv = random_gradient(1.0);
        const Eigen::Matrix2d gw = random_gradient(1.0);
        const double h = 1e-5;
        const Eigen::Matrix2d sp = piola_stress(F + h * gv, kSoft);
        const Eigen::Matrix2d sm = piola_stress(F - h * gv, kSoft);
        const double fd = ((sp - sm) / (2.0 * h)).cwiseProduct(gw).sum();
        const double value = tangent_density(F, gv, gw, kSoft);
        const double scale = kSoft.mu * gv.norm() * gw.norm();
        CHECK(std::abs(fd - value) <= 1e-6 * std::max(scale, std::abs(value)));
    }
}

TEST_CASE("coercivity condition on the Lame constants") {
    CHECK(check_coercivity_condition(MaterialParams::from_lame(3448.0, 31034.0)));
    CHECK_FALSE(check_coercivity_condition(MaterialParams::from_lame(1.0, 1.0)));
    // boundary case is strict
    const double boundary = 2.0 / (std::exp(1.0) - 1.0);
    CHECK_FALSE(check_coercivity_condition(MaterialParams::from_lame(1.0, boundary)));
    CHECK(check_coercivity_condition(MaterialParams::from_lame(1.0, boundary * (1.0 + 1e-12))));
}

TEST_CASE("coercivity sampling with the constructive constants") {
    REQUIRE(check_coercivity_condition(kSoft));
    const double C = coercivity_constant(kSoft);
    const double D = energy_offset(kSoft);
    REQUIRE(C > 0.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Matrix2d F = random_deformation(0.05);
        const double W = stored_energy(F, kSoft);
        const double bound = C * (F.squaredNorm() + F.determinant() * F.determinant()) + D;
        CHECK(W >= bound - 1e-9 * std::abs(bound));
    }
}

TEST_CASE("midpoint convexity of the determinant part") {
    // delta -> lambda/4 delta^2 - (mu + lambda/2) ln(delta) on (0, inf)
    auto gamma = [&](double d) {
        return 0.25 * kSoft.lambda * d * d - (kSoft.mu + 0.5 * kSoft.lambda) * std::log(d);
    };
    std::uniform_real_distribution<double> uni(0.01, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double x = uni(rng), y = uni(rng);
        CHECK(gamma(0.5 * (x + y)) <= 0.5 * (gamma(x) + gamma(y)) + 1e-9);
    }
}

TEST_CASE("expansion: zero direction gives zero residuals and a degenerate fit") {
    const Eigen::Matrix2d zero = Eigen::Matrix2d::Zero();
    CHECK(expansion_residual(kSoft, zero) == 0.0);
    CHECK_THROWS_AS(expansion_order(kSoft, zero, {1e-1, 1e-2, 1e-3}), std::domain_error);
}

TEST_CASE("expansion order: cubic remainder for random strain directions") {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const std::vector<double> scales = {1e-1, 3.16e-2, 1e-2, 3.16e-3, 1e-3};
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::Matrix2d E;
        const double a = uni(rng), b = uni(rng), c = uni(rng);
        E << a, b, b, c;
        if (E.norm() < 0.1) continue;
        E /= E.norm();
        CHECK(expansion_order(kSoft, E, scales) >= 2.9);
    }
}

TEST_CASE("expansion residual: closed form for an isotropic strain") {
    // E = sI: F = sqrt(1+2s) I, tr E = 2s, tr E^2 = 2s^2
    const double s = 0.03;
    const Eigen::Matrix2d E = s * Eigen::Matrix2d::Identity();
    const double det = 1.0 + 2.0 * s;  // det F = 1 + 2s for F = sqrt(1+2s) I
    const double W = 0.5 * kSoft.mu * 2.0 * (1.0 + 2.0 * s) + 0.25 * kSoft.lambda * det * det -
                     (kSoft.mu + 0.5 * kSoft.lambda) * std::log(det) - kSoft.mu - 0.25 * kSoft.lambda;
    const double quadratic = 0.5 * kSoft.lambda * 4.0 * s * s + kSoft.mu * 2.0 * s * s;
    CHECK(expansion_residual(kSoft, E) == doctest::Approx(std::abs(W - quadratic)).epsilon(1e-10));
}

TEST_CASE("expansion order requires the 2D-consistent offset") {
    MaterialParams paper = MaterialParams::from_young_poisson(10000.0, 0.45, EnergyOffsetMode::Paper3dConstant);
    Eigen::Matrix2d E;
    E << 1.0, 0.2, 0.2, -0.5;
    CHECK_THROWS_AS(expansion_order(paper, E, {1e-1, 1e-2, 1e-3}), std::invalid_argument);
}

TEST_CASE("stress and tangent do not depend on the offset mode") {
    MaterialParams paper = MaterialParams::from_young_poisson(10000.0, 0.45, EnergyOffsetMode::Paper3dConstant);
    const Eigen::Matrix2d F = random_deformation(0.3);
    const Eigen::Matrix2d gv = random_gradient(1.0);
    const Eigen::Matrix2d gw = random_gradient(1.0);
    CHECK((piola_stress(F, kSoft) - piola_stress(F, paper)).norm() == 0.0);
    CHECK(tangent_density(F, gv, gw, kSoft) == tangent_density(F, gv, gw, paper));
}
