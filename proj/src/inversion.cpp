#include "tfm/inversion.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace tfm {

void InversionConfig::validate() const {
    if (tau <= 1.0) throw std::invalid_argument("InversionConfig: tau must be > 1");
    if (rho <= 0.0 || rho >= 1.0) throw std::invalid_argument("InversionConfig: rho must lie in (0, 1)");
    if (delta < 0.0) throw std::invalid_argument("InversionConfig: delta must be >= 0");
    if (max_outer < 0 || max_inner < 1) throw std::invalid_argument("InversionConfig: iteration budgets invalid");
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::Discrepancy: return "DISCREPANCY";
        case StopReason::MaxIter: return "MAX_ITER";
        case StopReason::Breakdown: return "BREAKDOWN";
        case StopReason::Aborted: return "ABORTED";
    }
    return "?";
}

double discrepancy_threshold(const InversionConfig& cfg) {
    if (cfg.delta > 0.0) return std::max(cfg.tau * cfg.delta, 1e-14);
    return cfg.noise_free_tol;
}

bool discrepancy_reached(double residual_norm, const InversionConfig& cfg) {
    return residual_norm <= discrepancy_threshold(cfg);
}

namespace {

double rel_error_percent(const LinearOperatorPair& op, const Vec& t, const Vec& truth) {
    const auto& ip = op.ip_error ? op.ip_error : op.ip_domain;
    const Vec diff = t - truth;
    const double denom = std::sqrt(ip(truth, truth));
    if (denom == 0.0) return 0.0;
    return 100.0 * std::sqrt(ip(diff, diff)) / denom;
}

void check_adjoint_pair(const LinearOperatorPair& op, std::uint64_t seed) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        Vec x(op.domain_size), y(op.range_size);
        for (int i = 0; i < x.size(); ++i) x(i) = normal(rng);
        for (int i = 0; i < y.size(); ++i) y(i) = normal(rng);
        const Vec Ax = op.apply(x);
        const Vec Aty = op.adjoint(y);
        const double lhs = op.ip_range(Ax, y);
        const double rhs = op.ip_domain(x, Aty);
        const double scale = std::sqrt(op.ip_domain(x, x) * op.ip_range(y, y));
        if (std::abs(lhs - rhs) > 1e-8 * std::max(scale, 1e-30))
            throw std::logic_error("cgne: operator pair fails the adjoint identity");
    }
}

// Core CGNE iteration with an explicit residual threshold (used directly by
// the inner loop of newton_cg).
std::pair<Vec, SolveReport> cgne_core(const LinearOperatorPair& op, const Vec& data, double threshold,
                                      int max_iter, const Vec* initial, const Vec* truth) {
    const auto t_start = std::chrono::steady_clock::now();
    SolveReport report;

    Vec t = initial ? *initial : Vec(Vec::Zero(op.domain_size));
    Vec r = data - op.apply(t);
    double res = std::sqrt(op.ip_range(r, r));
    report.residual_history.push_back(res);
    if (truth) report.error_history.push_back(rel_error_percent(op, t, *truth));

    auto finish = [&](StopReason reason) {
        report.stop_reason = reason;
        if (truth) report.final_relative_error = report.error_history.back();
        report.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return std::make_pair(std::move(t), std::move(report));
    };

    if (res <= threshold) return finish(StopReason::Discrepancy);

    Vec d = op.adjoint(r);
    Vec p = d;
    double gamma = op.ip_domain(d, d);

    for (int k = 1; k <= max_iter; ++k) {
        if (gamma <= 1e-300) {
            report.breakdown = true;
            return finish(StopReason::Breakdown);
        }
        const Vec q = op.apply(p);
        const double qq = op.ip_range(q, q);
        if (qq <= 1e-300) {
            report.breakdown = true;
            return finish(StopReason::Breakdown);
        }
        const double alpha = gamma / qq;
        t += alpha * p;
        r -= alpha * q;
        res = std::sqrt(std::max(0.0, op.ip_range(r, r)));
        report.outer_iterations = k;
        report.residual_history.push_back(res);
        if (truth) report.error_history.push_back(rel_error_percent(op, t, *truth));
        if (res <= threshold) return finish(StopReason::Discrepancy);

        d = op.adjoint(r);
        const double gamma_new = op.ip_domain(d, d);
        p = d + (gamma_new / gamma) * p;
        gamma = gamma_new;
    }
    return finish(StopReason::MaxIter);
}

}  // namespace

std::pair<Vec, SolveReport> cgne(const LinearOperatorPair& op, const Vec& data, const InversionConfig& cfg,
                                 const Vec* truth, const Vec* initial) {
    cfg.validate();
    if (cfg.debug_adjoint_check) check_adjoint_pair(op, cfg.seed);
    return cgne_core(op, data, discrepancy_threshold(cfg), cfg.max_inner, initial, truth);
}

std::pair<Vec, SolveReport> newton_cg(NonlinearProblem& problem, const Vec& data,
                                      const InversionConfig& cfg, const Vec* initial, const Vec* truth) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    SolveReport report;

    Vec param = initial ? *initial : Vec(Vec::Zero(problem.domain_size()));

    auto record_error = [&](const Vec& t) {
        if (!truth) return;
        const Vec diff = t - *truth;
        const double denom = std::sqrt(problem.ip_error(*truth, *truth));
        report.error_history.push_back(denom == 0.0 ? 0.0
                                                    : 100.0 * std::sqrt(problem.ip_error(diff, diff)) / denom);
    };
    auto finish = [&](StopReason reason) {
        report.stop_reason = reason;
        if (truth && !report.error_history.empty()) report.final_relative_error = report.error_history.back();
        report.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return std::make_pair(std::move(param), std::move(report));
    };

    for (int outer = 0; outer <= cfg.max_outer; ++outer) {
        Vec residual;
        double res_norm;
        try {
            const Vec u = problem.forward(param);
            residual = data - u;
            res_norm = std::sqrt(std::max(0.0, problem.ip_range(residual, residual)));
        } catch (const std::exception&) {
            return finish(StopReason::Aborted);
        }
        report.outer_iterations = outer;
        report.residual_history.push_back(res_norm);
        record_error(param);

        if (discrepancy_reached(res_norm, cfg)) return finish(StopReason::Discrepancy);
        if (outer == cfg.max_outer) return finish(StopReason::MaxIter);

        try {
            LinearOperatorPair tangent = problem.linearize();
            auto [step, inner_report] =
                cgne_core(tangent, residual, cfg.rho * res_norm, cfg.max_inner, nullptr, nullptr);
            report.inner_iterations_per_outer.push_back(inner_report.outer_iterations);
            if (inner_report.breakdown && inner_report.outer_iterations == 0) {
                report.breakdown = true;
                return finish(StopReason::Breakdown);
            }
            param += step;
        } catch (const std::exception&) {
            return finish(StopReason::Aborted);
        }
    }
    return finish(StopReason::MaxIter);
}

}  // namespace tfm
