#include "tfm/experiments.hpp"

#include <cmath>
#include <random>

namespace tfm {

namespace {

// bump profile exp(-1/(1 - r2)) with exact zero outside the unit disc
double bump(double r2) {
    if (r2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r2));
}

}  // namespace

std::vector<ForceSpot> standard_force_spots(double magnitude) {
    return {
        {{-0.6, -0.2}, {1.0, -0.4}, magnitude, 1.0},
        {{0.3, 0.2}, {-1.0, 0.4}, magnitude, 1.0},
        {{0.6, -0.8}, {-0.2, 1.0}, magnitude, 1.0},
        {{-0.4, 1.2}, {0.2, -1.0}, magnitude, 1.0},
    };
}

Eigen::Vector3d force_ring(double a, const Eigen::Vector3d& x) {
    const double r2 = x.x() * x.x() + x.y() * x.y();
    const double profile = a * bump(r2);
    return {-profile * x.x(), -profile * x.y(), 0.0};
}

Eigen::Vector3d force_spots(const std::vector<ForceSpot>& spots, const Eigen::Vector3d& x) {
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (const auto& spot : spots) {
        const Eigen::Vector2d d = Eigen::Vector2d(x.x(), x.y()) - spot.center;
        const double r2 = d.squaredNorm() / (spot.radius * spot.radius);
        const double profile = spot.magnitude * bump(r2);
        out.x() += profile * spot.direction.x();
        out.y() += profile * spot.direction.y();
    }
    return out;
}

Eigen::Vector3d force_spots(double b, const Eigen::Vector3d& x) {
    return force_spots(standard_force_spots(b), x);
}

NoisyData add_noise(const FeFunction& exact, const SparseMat& mass, double level_percent,
                    std::uint64_t seed) {
    if (level_percent < 0.0) throw std::invalid_argument("add_noise: noise level must be >= 0");
    const double exact_norm = weighted_norm(mass, exact.coeffs);

    NoisyData out;
    out.seed = seed;
    out.level_percent = level_percent;
    if (level_percent == 0.0) {
        out.field = exact;
        out.delta = 0.0;
        return out;
    }
    if (exact_norm == 0.0)
        throw std::invalid_argument("add_noise: cannot impose a relative level on zero data");

    // Marsaglia polar normals from a seeded engine: deterministic across
    // standard library implementations.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Vec noise(exact.coeffs.size());
    Eigen::Index i = 0;
    while (i < noise.size()) {
        double a, b, s;
        do {
            a = uni(rng);
            b = uni(rng);
            s = a * a + b * b;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        noise(i++) = a * factor;
        if (i < noise.size()) noise(i++) = b * factor;
    }

    const double target = level_percent / 100.0 * exact_norm;
    const double raw_norm = weighted_norm(mass, noise);
    noise *= target / raw_norm;

    out.field = FeFunction(*exact.space, exact.coeffs + noise);
    out.delta = target;
    return out;
}

FeFunction traction_to_density(const FeFunction& traction, double thickness) {
    if (thickness <= 0.0) throw std::invalid_argument("traction_to_density: thickness must be positive");
    return FeFunction(*traction.space, traction.coeffs / thickness);
}

FeFunction density_to_traction(const FeFunction& density, double thickness) {
    if (thickness <= 0.0) throw std::invalid_argument("density_to_traction: thickness must be positive");
    return FeFunction(*density.space, density.coeffs * thickness);
}

double relative_error_percent(const FeFunction& rec, const FeFunction& truth, const SparseMat& mass) {
    if (rec.coeffs.size() != truth.coeffs.size())
        throw std::invalid_argument("relative_error_percent: mismatched spaces");
    const double denom = weighted_norm(mass, truth.coeffs);
    if (denom == 0.0) throw std::invalid_argument("relative_error_percent: zero ground truth");
    return 100.0 * weighted_norm(mass, rec.coeffs - truth.coeffs) / denom;
}

double relative_force_norm(const FeFunction& t, const SparseMat& mass) {
    const Vec ones = Vec::Ones(t.coeffs.size());
    return weighted_norm(mass, t.coeffs) / weighted_norm(mass, ones);
}

std::vector<ModelComparisonRow> compare_models(const std::vector<double>& magnitudes,
                                               const Forward2D& fwd) {
    std::vector<ModelComparisonRow> rows;
    const FeSpace& space = fwd.space();
    for (double a : magnitudes) {
        ModelComparisonRow row;
        row.magnitude = a;
        FeFunction density(space, space.interpolate([a](const Eigen::Vector3d& x) { return force_ring(a, x); }));
        row.relative_force = relative_force_norm(density, fwd.mass());
        if (a == 0.0) {
            rows.push_back(row);  // 0/0 guard: zero by convention
            continue;
        }
        try {
            NonlinearOpts opts;
            opts.homotopy_steps = 1;  // escalates automatically on failure
            const FeFunction u_lin = fwd.solve_linear(density);
            const NonlinearState nl = fwd.solve_nonlinear(density, opts);
            const double denom = fwd.norm_l2(nl.u.coeffs);
            row.discrepancy_percent = 100.0 * fwd.norm_l2(u_lin.coeffs - nl.u.coeffs) / denom;
        } catch (const std::exception&) {
            row.solver_failed = true;
        }
        rows.push_back(row);
    }
    return rows;
}

double estimate_noise_from_margin(const FeFunction& field, const Eigen::Vector2d& box_lo,
                                  const Eigen::Vector2d& box_hi) {
    const FeSpace& space = *field.space;
    const Mesh& mesh = space.mesh();
    if (mesh.dim != 2) throw std::invalid_argument("estimate_noise_from_margin: needs a 2D field");
    if ((box_hi - box_lo).minCoeff() <= 0.0)
        throw std::invalid_argument("estimate_noise_from_margin: empty margin region");

    const QuadratureRule rule = (mesh.cell_type == CellType::Triangle)
                                    ? triangle_rule(2 * space.order())
                                    : tensor_rule(mesh.cell_type, space.order() + 1);
    Eigen::VectorXd N;
    Eigen::Matrix<double, Eigen::Dynamic, 3> dN;
    std::vector<Eigen::VectorXd> values(rule.size());
    for (int q = 0; q < rule.size(); ++q)
        eval_basis(mesh.cell_type, space.order(), rule.points[q], values[q], dN);

    double norm2_inside = 0.0, area_inside = 0.0, area_total = 0.0;
    Eigen::Vector3d x;
    Eigen::Matrix3d J;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        const auto& nodes = space.cell_nodes(c);
        for (int q = 0; q < rule.size(); ++q) {
            // geometry
            if (mesh.cell_type == CellType::Triangle) {
                const Eigen::Vector3d& v0 = mesh.vertices[cell[0]];
                const Eigen::Vector3d e1 = mesh.vertices[cell[1]] - v0;
                const Eigen::Vector3d e2 = mesh.vertices[cell[2]] - v0;
                x = v0 + rule.points[q].x() * e1 + rule.points[q].y() * e2;
                J.setIdentity();
                J(0, 0) = e1.x();
                J(1, 0) = e1.y();
                J(0, 1) = e2.x();
                J(1, 1) = e2.y();
            } else {
                throw std::invalid_argument("estimate_noise_from_margin: triangle meshes only");
            }
            const double w = rule.weights[q] * std::abs(J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0));
            area_total += w;
            const bool inside = x.x() >= box_lo.x() && x.x() <= box_hi.x() && x.y() >= box_lo.y() &&
                                x.y() <= box_hi.y();
            if (!inside) continue;
            area_inside += w;
            double f2 = 0.0;
            for (int comp = 0; comp < space.value_dim(); ++comp) {
                double v = 0.0;
                for (int a = 0; a < values[q].size(); ++a)
                    v += values[q](a) * field.coeffs(space.dof(nodes[a], comp));
                f2 += v * v;
            }
            norm2_inside += w * f2;
        }
    }
    if (area_inside <= 0.0)
        throw std::invalid_argument("estimate_noise_from_margin: margin region contains no quadrature points");
    return std::sqrt(norm2_inside) * std::sqrt(area_total / area_inside);
}

}  // namespace tfm
