#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tfm/inversion.hpp"

using namespace tfm;

namespace {

// Euclidean operator pair from a dense matrix
LinearOperatorPair dense_pair(const Eigen::MatrixXd& A) {
    LinearOperatorPair pair;
    pair.domain_size = static_cast<int>(A.cols());
    pair.range_size = static_cast<int>(A.rows());
    pair.apply = [A](const Vec& x) { return Vec(A * x); };
    pair.adjoint = [A](const Vec& y) { return Vec(A.transpose() * y); };
    pair.ip_domain = [](const Vec& a, const Vec& b) { return a.dot(b); };
    pair.ip_range = [](const Vec& a, const Vec& b) { return a.dot(b); };
    return pair;
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd A(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) A(i, j) = normal(rng);
    return A;
}

}  // namespace

TEST_CASE("discrepancy inequality is non-strict") {
    InversionConfig cfg;
    cfg.tau = 1.2;
    cfg.delta = 1.0;
    CHECK(discrepancy_reached(0.0, cfg));
    CHECK(discrepancy_reached(1.2, cfg));
    CHECK_FALSE(discrepancy_reached(1.3, cfg));
}

TEST_CASE("noise-free configurations use the absolute floor") {
    InversionConfig cfg;
    cfg.delta = 0.0;
    cfg.noise_free_tol = 1e-12;
    CHECK(discrepancy_threshold(cfg) == 1e-12);
    cfg.delta = 1e-20;  // tau*delta would underflow the residual scale
    CHECK(discrepancy_threshold(cfg) == 1e-14);
}

TEST_CASE("config invariants are validated") {
    InversionConfig cfg;
    cfg.tau = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.tau = 1.2;
    cfg.rho = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.rho = 0.7;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("cgne on zero data returns the zero iterate immediately") {
    const auto pair = dense_pair(random_matrix(8, 5, 1));
    InversionConfig cfg;
    cfg.delta = 0.0;
    auto [x, report] = cgne(pair, Vec::Zero(8), cfg);
    CHECK(x.norm() == 0.0);
    CHECK(report.outer_iterations == 0);
    CHECK(report.stop_reason == StopReason::Discrepancy);
}

TEST_CASE("cgne converges on consistent noise-free data") {
    const Eigen::MatrixXd A = random_matrix(12, 12, 2) + 6.0 * Eigen::MatrixXd::Identity(12, 12);
    const auto pair = dense_pair(A);
    const Vec x_true = random_matrix(12, 1, 3).col(0);
    const Vec data = A * x_true;
    InversionConfig cfg;
    cfg.delta = 0.0;
    cfg.noise_free_tol = 1e-8 * data.norm();
    cfg.max_inner = 500;
    auto [x, report] = cgne(pair, data, cfg, &x_true);
    CHECK(report.stop_reason == StopReason::Discrepancy);
    CHECK(report.residual_history.back() <= cfg.noise_free_tol);
    CHECK((x - x_true).norm() <= 1e-6 * x_true.norm());
    REQUIRE(report.final_relative_error.has_value());
    CHECK(*report.final_relative_error <= 1e-4);
}

TEST_CASE("cgne residual history is monotone up to roundoff slack") {
    const Eigen::MatrixXd A = random_matrix(30, 20, 4);
    const auto pair = dense_pair(A);
    Vec data = random_matrix(30, 1, 5).col(0);  // inconsistent rhs
    InversionConfig cfg;
    cfg.delta = 1e-6;  // unreachable: iterate to the budget
    cfg.max_inner = 40;
    auto [x, report] = cgne(pair, data, cfg);
    CHECK(report.stop_reason == StopReason::MaxIter);
    for (std::size_t k = 1; k < report.residual_history.size(); ++k)
        CHECK(report.residual_history[k] <= report.residual_history[k - 1] + 1e-12);
}

TEST_CASE("cgne flags breakdown on a vanishing gradient") {
    const auto pair = dense_pair(Eigen::MatrixXd::Zero(6, 4));
    InversionConfig cfg;
    cfg.delta = 0.1;
    Vec data = Vec::Ones(6);
    auto [x, report] = cgne(pair, data, cfg);
    CHECK(report.breakdown);
    CHECK(report.stop_reason == StopReason::Breakdown);
    CHECK(x.norm() == 0.0);
}

TEST_CASE("the debug adjoint check rejects an inconsistent pair") {
    auto pair = dense_pair(random_matrix(7, 7, 6));
    pair.adjoint = pair.apply;  // wrong for a non-symmetric matrix
    InversionConfig cfg;
    cfg.debug_adjoint_check = true;
    CHECK_THROWS_AS(cgne(pair, Vec::Ones(7), cfg), std::logic_error);
}

TEST_CASE("parameter-space CGNE equals Euclidean CGNE on the transformed operator") {
    // domain inner product <a, b>_L with SPD L: iterates of CGNE using
    // (A, L^-1 A^T, ip_L) must match x_k = R^-1 s_k where s_k comes from
    // Euclidean CGNE on A R^-1 and L = R^T R
    const int n = 10, m = 14;
    const Eigen::MatrixXd A = random_matrix(m, n, 7);
    Eigen::MatrixXd B = random_matrix(n, n, 8);
    const Eigen::MatrixXd L = B * B.transpose() + static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LLT<Eigen::MatrixXd> llt(L);
    const Eigen::MatrixXd R = llt.matrixU();

    LinearOperatorPair weighted;
    weighted.domain_size = n;
    weighted.range_size = m;
    weighted.apply = [&](const Vec& x) { return Vec(A * x); };
    weighted.adjoint = [&](const Vec& y) { return Vec(llt.solve(A.transpose() * y)); };
    weighted.ip_domain = [&](const Vec& a, const Vec& b) { return a.dot(L * b); };
    weighted.ip_range = [](const Vec& a, const Vec& b) { return a.dot(b); };

    const Eigen::MatrixXd A_transformed = A * R.inverse();
    const auto euclid = dense_pair(A_transformed);

    const Vec data = random_matrix(m, 1, 9).col(0);
    InversionConfig cfg;
    cfg.delta = 1e-9;
    cfg.max_inner = 12;
    auto [x_w, rep_w] = cgne(weighted, data, cfg);
    auto [s, rep_e] = cgne(euclid, data, cfg);
    const Vec x_oracle = R.inverse() * s;
    CHECK(rep_w.outer_iterations == rep_e.outer_iterations);
    CHECK((x_w - x_oracle).norm() <= 1e-10 * std::max(1.0, x_oracle.norm()));
}

namespace {

// small smooth nonlinear map S(T) = A T + 0.5 * B (T .* T) with dense tangents
class QuadraticProblem : public NonlinearProblem {
public:
    QuadraticProblem(int n, std::uint64_t seed)
        : A_(random_matrix(n, n, seed) + 4.0 * Eigen::MatrixXd::Identity(n, n)),
          B_(0.05 * random_matrix(n, n, seed + 1)),
          n_(n) {}

    Vec forward(const Vec& t) override {
        last_ = t;
        return A_ * t + 0.5 * (B_ * Vec(t.array().square().matrix()));
    }
    LinearOperatorPair linearize() override {
        Eigen::MatrixXd J = A_;
        for (int j = 0; j < n_; ++j) J.col(j) += B_.col(j) * last_(j);
        return dense_pair(J);
    }
    double ip_range(const Vec& a, const Vec& b) override { return a.dot(b); }
    double ip_domain(const Vec& a, const Vec& b) override { return a.dot(b); }
    int domain_size() const override { return n_; }

private:
    Eigen::MatrixXd A_, B_;
    Vec last_;
    int n_;
};

}  // namespace

TEST_CASE("newton_cg returns immediately when the data matches the initial guess") {
    QuadraticProblem problem(6, 11);
    const Vec data = problem.forward(Vec::Zero(6));
    InversionConfig cfg;
    cfg.delta = 0.0;
    cfg.noise_free_tol = 1e-12;
    auto [t, report] = newton_cg(problem, data, cfg);
    CHECK(report.outer_iterations == 0);
    CHECK(report.stop_reason == StopReason::Discrepancy);
    CHECK(t.norm() == 0.0);
}

TEST_CASE("newton_cg recovers the parameter of a mildly nonlinear map") {
    // with the inner loop truncated at rho * R, the outer residual contracts
    // linearly at a rate near rho
    QuadraticProblem problem(8, 13);
    const Vec t_true = 0.5 * random_matrix(8, 1, 14).col(0);
    const Vec data = problem.forward(t_true);
    InversionConfig cfg;
    cfg.delta = 0.0;
    cfg.noise_free_tol = 1e-7 * data.norm();
    cfg.max_outer = 80;
    cfg.max_inner = 100;
    cfg.rho = 0.7;
    auto [t, report] = newton_cg(problem, data, cfg, nullptr, &t_true);
    CHECK(report.stop_reason == StopReason::Discrepancy);
    CHECK((t - t_true).norm() <= 1e-5 * t_true.norm());
    // inner iteration counts were recorded per outer step
    CHECK(report.inner_iterations_per_outer.size() == static_cast<std::size_t>(report.outer_iterations));
    // the contraction rate stays below one
    const auto& res = report.residual_history;
    for (std::size_t k = 1; k < res.size(); ++k) CHECK(res[k] < res[k - 1]);
}

TEST_CASE("newton_cg aborts with a partial report when the forward map throws") {
    class ThrowingProblem : public QuadraticProblem {
    public:
        using QuadraticProblem::QuadraticProblem;
        Vec forward(const Vec& t) override {
            if (++calls_ > 2) throw std::runtime_error("synthetic forward failure");
            return QuadraticProblem::forward(t);
        }

    private:
        int calls_ = 0;
    };
    ThrowingProblem problem(5, 17);
    const Vec data = 10.0 * Vec::Ones(5);
    InversionConfig cfg;
    cfg.delta = 1e-12;
    cfg.max_outer = 10;
    auto [t, report] = newton_cg(problem, data, cfg);
    CHECK(report.stop_reason == StopReason::Aborted);
    CHECK(report.residual_history.size() >= 1);
}

TEST_CASE("semi-convergence on an ill-posed synthetic operator") {
    // Hilbert-like severely ill-conditioned matrix: with noise the true error
    // dips and then grows; the discrepancy stop lands near the minimum
    const int n = 24;
    Eigen::MatrixXd H(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) H(i, j) = 1.0 / (1.0 + i + j);
    const auto pair = dense_pair(H);

    std::mt19937_64 rng(19);
    std::normal_distribution<double> normal;
    Vec x_true(n);
    for (int i = 0; i < n; ++i) x_true(i) = std::sin(0.4 * i) + 0.3 * std::cos(1.1 * i);
    const Vec clean = H * x_true;
    Vec noise(n);
    for (int i = 0; i < n; ++i) noise(i) = normal(rng);
    noise *= 0.01 * clean.norm() / noise.norm();

    InversionConfig cfg;
    cfg.delta = noise.norm();
    cfg.tau = 1.2;
    cfg.max_inner = 200;
    auto [x, report] = cgne(pair, clean + noise, cfg, &x_true);
    REQUIRE(report.stop_reason == StopReason::Discrepancy);
    CHECK(report.residual_history.back() <= cfg.tau * cfg.delta);

    const auto min_it = std::min_element(report.error_history.begin(), report.error_history.end());
    const int argmin = static_cast<int>(min_it - report.error_history.begin());
    // error grows again after the minimum (semi-convergence is observable)
    CHECK(report.error_history.back() >= *min_it);
    CHECK(std::abs(report.outer_iterations - argmin) <= 3);
}
