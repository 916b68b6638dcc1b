#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tfm/fem.hpp"
#include "tfm/forward2d.hpp"  // ParamSpace

namespace tfm {

struct InversionConfig {
    double tau = 1.2;    // discrepancy factor, > 1
    double delta = 0.0;  // noise norm in L^2 of the data space
    double rho = 0.7;    // inner residual reduction of truncated Newton-CG, in (0, 1)
    int max_outer = 50;
    int max_inner = 500;
    ParamSpace param_space = ParamSpace::L2;
    std::uint64_t seed = 0;
    double noise_free_tol = 1e-12;    // absolute residual target when delta == 0
    bool debug_adjoint_check = false;  // verify the operator pair before iterating

    void validate() const;
};

enum class StopReason { Discrepancy, MaxIter, Breakdown, Aborted };
std::string to_string(StopReason reason);

struct SolveReport {
    int outer_iterations = 0;
    std::vector<int> inner_iterations_per_outer;  // empty for plain CGNE
    std::vector<double> residual_history;         // data-space residual norms, entry 0 = initial
    StopReason stop_reason = StopReason::MaxIter;
    double wall_time_seconds = 0.0;
    std::optional<double> final_relative_error;  // percent, when ground truth supplied
    std::vector<double> error_history;           // percent per iterate, when truth supplied
    bool breakdown = false;
};

/// A linear forward operator together with its adjoint and the inner
/// products of its domain (parameter) and range (data) spaces. The adjoint
/// must be taken with respect to exactly these inner products. Reported
/// reconstruction errors use ip_error when set (the L2 metric for H10-space
/// runs) and fall back to ip_domain.
struct LinearOperatorPair {
    std::function<Vec(const Vec&)> apply;
    std::function<Vec(const Vec&)> adjoint;
    std::function<double(const Vec&, const Vec&)> ip_domain;
    std::function<double(const Vec&, const Vec&)> ip_range;
    std::function<double(const Vec&, const Vec&)> ip_error;  // optional
    int domain_size = 0;
    int range_size = 0;
};

/// residual_norm <= tau * delta (non-strict); noise-free configurations use
/// the absolute noise_free_tol instead, and tau*delta is floored at 1e-14.
bool discrepancy_reached(double residual_norm, const InversionConfig& cfg);
double discrepancy_threshold(const InversionConfig& cfg);

/// Conjugate gradients on the normal equations, regularized by stopping at
/// the discrepancy inequality. Residual norms decrease monotonically; on
/// breakdown (vanishing gradient or curvature) the current iterate is
/// returned with the breakdown flag set.
std::pair<Vec, SolveReport> cgne(const LinearOperatorPair& op, const Vec& data, const InversionConfig& cfg,
                                 const Vec* truth = nullptr, const Vec* initial = nullptr);

/// Nonlinear forward map interface for newton_cg. forward() evaluates and
/// freezes the linearization point; linearize() must return the tangent pair
/// at the most recent forward() call.
class NonlinearProblem {
public:
    virtual ~NonlinearProblem() = default;
    virtual Vec forward(const Vec& parameter) = 0;
    virtual LinearOperatorPair linearize() = 0;
    virtual double ip_range(const Vec& a, const Vec& b) = 0;
    virtual double ip_domain(const Vec& a, const Vec& b) = 0;
    /// Metric for reported reconstruction errors (L2 regardless of the
    /// parameter space); defaults to the domain inner product.
    virtual double ip_error(const Vec& a, const Vec& b) { return ip_domain(a, b); }
    virtual int domain_size() const = 0;
};

/// Truncated Newton-CG: outer updates T_{k+1} = T_k + h_k where h_k comes
/// from an inner CGNE run on the frozen tangent, stopped when the linearized
/// residual drops below rho times the outer residual. The outer loop stops
/// by the discrepancy principle. A forward failure aborts with the partial
/// report (stop_reason Aborted).
std::pair<Vec, SolveReport> newton_cg(NonlinearProblem& problem, const Vec& data,
                                      const InversionConfig& cfg, const Vec* initial = nullptr,
                                      const Vec* truth = nullptr);

}  // namespace tfm
