#include "tfm/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "tfm/experiments.hpp"
#include "tfm/forward25d.hpp"
#include "tfm/io.hpp"
#include "tfm/operators.hpp"

namespace tfm::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

Mesh build_sim_mesh(const ExperimentConfig& cfg) {
    if (cfg.is_2d()) return build_rect_mesh(cfg.half_width, cfg.nx, cfg.ny, cfg.flip_diagonal);
    return build_box_mesh(cfg.half_width, cfg.depth, cfg.nx, cfg.ny, cfg.nz);
}

Mesh build_recon_mesh(const ExperimentConfig& cfg) {
    const int nx = cfg.recon_nx.value_or(cfg.nx);
    const int ny = cfg.recon_ny.value_or(cfg.ny);
    const int nz = cfg.recon_nz.value_or(cfg.nz);
    const bool flip = cfg.recon_flip.value_or(cfg.flip_diagonal);
    if (cfg.is_2d()) return build_rect_mesh(cfg.half_width, nx, ny, flip);
    return build_box_mesh(cfg.half_width, cfg.depth, nx, ny, nz);
}

int recon_order(const ExperimentConfig& cfg) { return cfg.recon_order.value_or(cfg.order); }

VectorField make_force_field(const ExperimentConfig& cfg) {
    switch (cfg.force) {
        case ForceKind::Ring: {
            const double a = cfg.magnitude;
            return [a](const Eigen::Vector3d& x) { return force_ring(a, x); };
        }
        case ForceKind::Spots: {
            const double b = cfg.magnitude;
            return [b](const Eigen::Vector3d& x) { return force_spots(b, x); };
        }
        case ForceKind::FromCsv: {
            auto grid = std::make_shared<GridField2>(GridField2::read_csv(cfg.force_csv));
            return [grid](const Eigen::Vector3d& x) { return grid->value(x.head<2>()); };
        }
    }
    throw std::logic_error("make_force_field: unreachable");
}

NonlinearOpts nonlinear_opts(const ExperimentConfig& cfg) {
    NonlinearOpts opts;
    opts.newton_tol = cfg.newton_tol;
    opts.homotopy_steps = cfg.homotopy_steps;
    return opts;
}

InversionConfig inversion_config(const ExperimentConfig& cfg, double delta) {
    InversionConfig icfg;
    icfg.tau = cfg.tau;
    icfg.delta = delta;
    icfg.rho = cfg.rho;
    icfg.max_outer = cfg.max_outer;
    icfg.max_inner = cfg.max_inner;
    icfg.param_space = cfg.param_space;
    icfg.seed = cfg.seed;
    return icfg;
}

std::vector<Eigen::Vector3d> vertex_values(const FeFunction& f) {
    const FeSpace& space = *f.space;
    std::vector<Eigen::Vector3d> out(space.mesh().n_vertices(), Eigen::Vector3d::Zero());
    for (int v = 0; v < space.mesh().n_vertices(); ++v)
        for (int c = 0; c < space.value_dim(); ++c) out[v](c) = f.coeffs(space.dof(v, c));
    return out;
}

std::vector<std::pair<std::string, std::string>> base_manifest(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> m;
    m.emplace_back("code_version", kVersion);
    m.emplace_back("model", to_string(cfg.model));
    m.emplace_back("seed", std::to_string(cfg.seed));
    if (!cfg.config_path.empty()) {
        m.emplace_back("config", cfg.config_path);
        m.emplace_back("config_hash", std::to_string(cfg.config_hash));
    }
    return m;
}

// noise with an absolute delta target: reuses the exact-level machinery
NoisyData add_noise_delta(const FeFunction& exact, const SparseMat& mass, double delta,
                          std::uint64_t seed) {
    const double norm = weighted_norm(mass, exact.coeffs);
    if (norm == 0.0) throw std::invalid_argument("noise: cannot scale noise against zero data");
    return add_noise(exact, mass, 100.0 * delta / norm, seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    try {
        fs::create_directories(out_dir);
        const VectorField force = make_force_field(cfg);
        const MaterialParams material = cfg.material();

        if (cfg.model == ModelKind::Linear25D) {
            const Mesh mesh3 = build_sim_mesh(cfg);
            LinearForward25 fwd(mesh3, material, cfg.order);
            const FeSpace& tspace = fwd.traction_space();

            FeFunction traction(tspace, tspace.interpolate(force));
            FeFunction u = fwd.forward(traction);

            NoisyData noisy;
            if (weighted_norm(fwd.volume_mass(), u.coeffs) == 0.0) {
                noisy = NoisyData{u, 0.0, 0.0, cfg.seed};
            } else if (cfg.noise == NoiseKind::Delta) {
                noisy = add_noise_delta(u, fwd.volume_mass(), cfg.noise_delta, cfg.seed);
            } else if (cfg.noise == NoiseKind::LevelPercent) {
                noisy = add_noise(u, fwd.volume_mass(), cfg.noise_level, cfg.seed);
            } else {
                throw std::invalid_argument("simulate: margin-based noise applies to reconstruction only");
            }

            write_field_csv(traction, join(out_dir, "truth_traction.csv"), {"t1", "t2", "t3"});
            write_field_csv(u, join(out_dir, "displacement.csv"), {"u1", "u2", "u3"});
            write_field_csv(noisy.field, join(out_dir, "displacement_noisy.csv"), {"u1", "u2", "u3"});
            write_vtk(mesh3, join(out_dir, "displacement.vtk"), {{"displacement", vertex_values(u)}});
            write_vtk(tspace.mesh(), join(out_dir, "traction.vtk"), {{"traction", vertex_values(traction)}});

            auto manifest = base_manifest(cfg);
            manifest.emplace_back("delta", format_full(noisy.delta));
            manifest.emplace_back("noise_level_percent", format_full(noisy.level_percent));
            manifest.emplace_back("volume_dofs", std::to_string(fwd.volume_space().n_dofs()));
            manifest.emplace_back("traction_dofs", std::to_string(tspace.n_dofs()));
            manifest.emplace_back("mesh_hash", std::to_string(mesh3.content_hash()));
            write_manifest(join(out_dir, "manifest.txt"), manifest);
            log << "simulate: wrote 2.5D fields to " << out_dir << " (delta = " << noisy.delta << ")\n";
            return 0;
        }

        const Mesh mesh2 = build_sim_mesh(cfg);
        Forward2D fwd(mesh2, material, cfg.order);
        const FeSpace& space = fwd.space();

        FeFunction traction(space, space.interpolate(force));
        FeFunction density = traction_to_density(traction, cfg.thickness);

        FeFunction u = FeFunction::zero(space);
        if (cfg.model == ModelKind::Linear2D) {
            u = fwd.solve_linear(density);
        } else {
            const NonlinearState state = fwd.solve_nonlinear(density, nonlinear_opts(cfg));
            u = state.u;
            log << "simulate: nonlinear forward converged in " << state.newton_iterations
                << " Newton iterations (" << state.homotopy_steps_used << " homotopy steps)\n";
        }

        NoisyData noisy;
        if (fwd.norm_l2(u.coeffs) == 0.0) {
            noisy = NoisyData{u, 0.0, 0.0, cfg.seed};
        } else if (cfg.noise == NoiseKind::Delta) {
            noisy = add_noise_delta(u, fwd.mass(), cfg.noise_delta, cfg.seed);
        } else if (cfg.noise == NoiseKind::LevelPercent) {
            noisy = add_noise(u, fwd.mass(), cfg.noise_level, cfg.seed);
        } else {
            throw std::invalid_argument("simulate: margin-based noise applies to reconstruction only");
        }

        write_field_csv(traction, join(out_dir, "truth_traction.csv"), {"tx", "ty"});
        write_field_csv(u, join(out_dir, "displacement.csv"), {"ux", "uy"});
        write_field_csv(noisy.field, join(out_dir, "displacement_noisy.csv"), {"ux", "uy"});
        write_vtk(mesh2, join(out_dir, "displacement.vtk"),
                  {{"displacement", vertex_values(u)}, {"traction", vertex_values(traction)}});

        auto manifest = base_manifest(cfg);
        manifest.emplace_back("delta", format_full(noisy.delta));
        manifest.emplace_back("noise_level_percent", format_full(noisy.level_percent));
        manifest.emplace_back("dofs", std::to_string(space.n_dofs()));
        manifest.emplace_back("thickness", format_full(cfg.thickness));
        manifest.emplace_back("mesh_hash", std::to_string(mesh2.content_hash()));
        write_manifest(join(out_dir, "manifest.txt"), manifest);
        log << "simulate: wrote 2D fields to " << out_dir << " (delta = " << noisy.delta << ")\n";
        return 0;
    } catch (const std::exception& e) {
        log << "simulate: error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& data_path, const std::string& out_dir,
                    std::ostream& log) {
    try {
        fs::create_directories(out_dir);
        const MaterialParams material = cfg.material();
        const Mesh mesh = build_recon_mesh(cfg);
        const int order = recon_order(cfg);

        auto manifest = base_manifest(cfg);
        manifest.emplace_back("data", data_path);
        manifest.emplace_back("mesh_hash", std::to_string(mesh.content_hash()));

        if (cfg.model == ModelKind::Linear25D) {
            LinearForward25 fwd(mesh, material, order);
            const GridField3 grid = GridField3::read_csv(data_path);
            if (grid.matches_nodes(fwd.volume_space()))
                log << "reconstruct: warning: data grid equals the reconstruction mesh "
                       "(inverse crime)\n";
            const FeFunction data = grid.interpolate(fwd.volume_space());

            double delta = 0.0;
            if (cfg.noise == NoiseKind::Delta)
                delta = cfg.noise_delta;
            else if (cfg.noise == NoiseKind::LevelPercent)
                delta = cfg.noise_level / 100.0 * fwd.norm_volume(data.coeffs);
            else
                throw std::invalid_argument("reconstruct: margin estimation needs a 2D model");

            std::optional<FeFunction> truth;
            if (!cfg.truth_csv.empty())
                truth = GridField2::read_csv(cfg.truth_csv).interpolate(fwd.traction_space());

            const LinearOperatorPair pair = make_pair_25d(fwd);
            const InversionConfig icfg = inversion_config(cfg, delta);
            auto [t_rec, report] =
                cgne(pair, data.coeffs, icfg, truth ? &truth->coeffs : nullptr);

            FeFunction rec(fwd.traction_space(), t_rec);
            write_field_csv(rec, join(out_dir, "reconstruction.csv"), {"t1", "t2", "t3"});
            write_vtk(fwd.traction_space().mesh(), join(out_dir, "reconstruction.vtk"),
                      {{"traction", vertex_values(rec)}});
            write_report_kv(report, join(out_dir, "report.txt"));
            write_report_csv(report, join(out_dir, "report_history.csv"));
            manifest.emplace_back("delta", format_full(delta));
            manifest.emplace_back("traction_dofs", std::to_string(fwd.traction_space().n_dofs()));
            manifest.emplace_back("stop_reason", to_string(report.stop_reason));
            if (report.final_relative_error)
                manifest.emplace_back("relative_error_percent", format_full(*report.final_relative_error));
            write_manifest(join(out_dir, "manifest.txt"), manifest);
            log << "reconstruct: " << report.outer_iterations << " CGNE iterations, stop "
                << to_string(report.stop_reason);
            if (report.final_relative_error) log << ", error " << *report.final_relative_error << "%";
            log << "\n";
            return report.stop_reason == StopReason::Aborted ? 1 : 0;
        }

        Forward2D fwd(mesh, material, order);
        const FeSpace& space = fwd.space();
        const GridField2 grid = GridField2::read_csv(data_path);
        if (grid.matches_nodes(space))
            log << "reconstruct: warning: data grid equals the reconstruction mesh (inverse crime)\n";
        const FeFunction data = grid.interpolate(space);

        double delta = 0.0;
        if (cfg.noise == NoiseKind::Delta) {
            delta = cfg.noise_delta;
        } else if (cfg.noise == NoiseKind::LevelPercent) {
            delta = cfg.noise_level / 100.0 * fwd.norm_l2(data.coeffs);
        } else {
            delta = estimate_noise_from_margin(data, cfg.margin_box.head<2>(), cfg.margin_box.tail<2>());
            log << "reconstruct: margin noise estimate delta = " << delta << "\n";
        }

        std::optional<FeFunction> truth_density;
        if (!cfg.truth_csv.empty()) {
            FeFunction truth_traction = GridField2::read_csv(cfg.truth_csv).interpolate(space);
            truth_density = traction_to_density(truth_traction, cfg.thickness);
        }

        const InversionConfig icfg = inversion_config(cfg, delta);
        Vec density_rec;
        SolveReport report;
        if (cfg.model == ModelKind::Linear2D) {
            const LinearOperatorPair pair = make_pair_linear2d(fwd, cfg.param_space);
            std::tie(density_rec, report) =
                cgne(pair, data.coeffs, icfg, truth_density ? &truth_density->coeffs : nullptr);
        } else {
            Nonlinear2DProblem problem(fwd, cfg.param_space, nonlinear_opts(cfg));
            std::tie(density_rec, report) = newton_cg(problem, data.coeffs, icfg, nullptr,
                                                      truth_density ? &truth_density->coeffs : nullptr);
        }

        FeFunction rec_traction =
            density_to_traction(FeFunction(space, density_rec), cfg.thickness);
        write_field_csv(rec_traction, join(out_dir, "reconstruction.csv"), {"tx", "ty"});
        write_vtk(mesh, join(out_dir, "reconstruction.vtk"), {{"traction", vertex_values(rec_traction)}});
        write_report_kv(report, join(out_dir, "report.txt"));
        write_report_csv(report, join(out_dir, "report_history.csv"));
        manifest.emplace_back("delta", format_full(delta));
        manifest.emplace_back("dofs", std::to_string(space.n_dofs()));
        manifest.emplace_back("thickness", format_full(cfg.thickness));
        manifest.emplace_back("stop_reason", to_string(report.stop_reason));
        if (report.final_relative_error)
            manifest.emplace_back("relative_error_percent", format_full(*report.final_relative_error));
        write_manifest(join(out_dir, "manifest.txt"), manifest);
        log << "reconstruct: " << report.outer_iterations << " outer iterations, stop "
            << to_string(report.stop_reason);
        if (report.final_relative_error) log << ", error " << *report.final_relative_error << "%";
        log << "\n";
        return report.stop_reason == StopReason::Aborted ? 1 : 0;
    } catch (const std::exception& e) {
        log << "reconstruct: error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

namespace {

struct TwoStageResult {
    double linear_best_error = 0.0;
    int linear_best_iteration = 0;
    double nonlinear_best_error = 0.0;
    int nonlinear_best_outer = 0;
};

TwoStageResult run_two_stage(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    const MaterialParams material = cfg.material();
    const double a = cfg.two_stage_magnitude;

    // noise-free data from the nonlinear model on the simulation mesh
    const Mesh sim_mesh = build_sim_mesh(cfg);
    Forward2D sim(sim_mesh, material, cfg.order);
    FeFunction sim_density(sim.space(), sim.space().interpolate([a, &cfg](const Eigen::Vector3d& x) {
        return force_ring(a, x) / cfg.thickness;
    }));
    NonlinearOpts sim_opts = nonlinear_opts(cfg);
    const NonlinearState sim_state = sim.solve_nonlinear(sim_density, sim_opts);
    log << "compare: two-stage data solved with " << sim_state.homotopy_steps_used
        << " homotopy steps, " << sim_state.newton_iterations << " Newton iterations\n";

    // reconstruction operator (possibly different mesh)
    const Mesh rec_mesh = build_recon_mesh(cfg);
    Forward2D rec(rec_mesh, material, recon_order(cfg));
    const FeFunction data = interpolate_onto(sim_state.u, rec.space());
    FeFunction truth(rec.space(), rec.space().interpolate([a, &cfg](const Eigen::Vector3d& x) {
        return force_ring(a, x) / cfg.thickness;
    }));

    InversionConfig icfg = inversion_config(cfg, 0.0);
    icfg.noise_free_tol = 1e-14;

    // stage 1: linear CGNE; pick the iterate with minimal true error
    const LinearOperatorPair pair = make_pair_linear2d(rec, cfg.param_space);
    auto [t_lin, lin_report] = cgne(pair, data.coeffs, icfg, &truth.coeffs);
    const auto lin_best =
        std::min_element(lin_report.error_history.begin(), lin_report.error_history.end());
    TwoStageResult result;
    result.linear_best_iteration =
        static_cast<int>(lin_best - lin_report.error_history.begin());
    result.linear_best_error = *lin_best;

    InversionConfig best_cfg = icfg;
    best_cfg.max_inner = std::max(1, result.linear_best_iteration);
    auto [t_lin_best, lin_report2] = cgne(pair, data.coeffs, best_cfg, &truth.coeffs);

    // stage 2: nonlinear Newton-CG from the linear reconstruction
    Nonlinear2DProblem problem(rec, cfg.param_space, nonlinear_opts(cfg));
    auto [t_nl, nl_report] = newton_cg(problem, data.coeffs, icfg, &t_lin_best, &truth.coeffs);
    const auto nl_best = std::min_element(nl_report.error_history.begin(), nl_report.error_history.end());
    result.nonlinear_best_outer = static_cast<int>(nl_best - nl_report.error_history.begin());
    result.nonlinear_best_error = *nl_best;

    write_report_csv(lin_report, join(out_dir, "two_stage_linear_history.csv"));
    write_report_csv(nl_report, join(out_dir, "two_stage_nonlinear_history.csv"));
    FeFunction lin_fn(rec.space(), t_lin_best);
    write_field_csv(density_to_traction(lin_fn, cfg.thickness), join(out_dir, "two_stage_linear.csv"),
                    {"tx", "ty"});
    FeFunction nl_fn(rec.space(), t_nl);
    write_field_csv(density_to_traction(nl_fn, cfg.thickness), join(out_dir, "two_stage_nonlinear.csv"),
                    {"tx", "ty"});
    return result;
}

}  // namespace

int cmd_compare(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    try {
        if (cfg.compare_magnitudes.empty() && !cfg.two_stage) {
            log << "compare: usage error: [compare] magnitudes is empty and two_stage is off\n";
            return 2;
        }
        fs::create_directories(out_dir);
        const Mesh mesh2 = build_sim_mesh(cfg);
        Forward2D fwd(mesh2, cfg.material(), cfg.order);

        if (!cfg.compare_magnitudes.empty()) {
            const auto rows = compare_models(cfg.compare_magnitudes, fwd);
            std::ofstream csv(join(out_dir, "comparison.csv"));
            csv << "magnitude,relative_force_norm,discrepancy_percent,solver_failed\n";
            for (const auto& row : rows)
                csv << format_full(row.magnitude) << ',' << format_full(row.relative_force)
                    << ',' << format_full(row.discrepancy_percent) << ','
                    << (row.solver_failed ? "true" : "false") << '\n';
            log << "compare: wrote " << rows.size() << " sweep rows\n";
        }

        const MaterialParams mat = cfg.material();
        std::ofstream summary(join(out_dir, "summary.txt"));
        summary << "model comparison, mu = " << mat.mu << ", lambda = " << mat.lambda << "\n";
        if (cfg.two_stage) {
            const TwoStageResult ts = run_two_stage(cfg, out_dir, log);
            summary << "two_stage_linear_best_error_percent = " << format_full(ts.linear_best_error)
                    << " (iteration " << ts.linear_best_iteration << ")\n";
            summary << "two_stage_nonlinear_best_error_percent = "
                    << format_full(ts.nonlinear_best_error) << " (outer " << ts.nonlinear_best_outer
                    << ")\n";
            log << "compare: two-stage linear best " << ts.linear_best_error << "%, nonlinear best "
                << ts.nonlinear_best_error << "%\n";
        }
        return 0;
    } catch (const std::exception& e) {
        log << "compare: error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

namespace {

struct CheckRunner {
    std::ostream& log;
    bool all_passed = true;

    void run(const std::string& name, const std::function<bool(std::string&)>& check) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = check(detail);
        } catch (const std::exception& e) {
            detail = e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%8.3fs", seconds);
        log << (ok ? "PASS" : "FAIL") << "  " << buf << "  " << name;
        if (!detail.empty()) log << "  [" << detail << "]";
        log << "\n";
        all_passed = all_passed && ok;
    }
};

}  // namespace

int cmd_selftest(const SelftestOptions& opts, std::ostream& log) {
    CheckRunner runner{log};
    const MaterialParams mat = MaterialParams::from_young_poisson(10000.0, 0.45);

    runner.run("material: Piola stress matches FD of the stored energy", [&](std::string& detail) {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> uni(-0.3, 0.3);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::Matrix2d F;
            do {
                F = Eigen::Matrix2d::Identity();
                for (int i = 0; i < 4; ++i) F(i / 2, i % 2) += uni(rng);
            } while (F.determinant() < 0.3);
            const double h = 1e-5 * F.norm();
            const Eigen::Matrix2d sigma = piola_stress(F, mat);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    Eigen::Matrix2d Fp = F, Fm = F;
                    Fp(i, j) += h;
                    Fm(i, j) -= h;
                    const double fd = (stored_energy(Fp, mat) - stored_energy(Fm, mat)) / (2 * h);
                    worst = std::max(worst, std::abs(fd - sigma(i, j)) / std::max(1.0, std::abs(sigma(i, j))));
                }
        }
        detail = "max relative defect " + format_full(worst);
        return worst < 1e-6;
    });

    runner.run("forward 2.5D: adjoint identity on a coarse box", [&](std::string& detail) {
        const Mesh mesh3 = build_box_mesh(2.0, 1.0, 6, 6, 3);
        LinearForward25 fwd(mesh3, mat, 1, 1e-12);
        const LinearOperatorPair pair = make_pair_25d(fwd);
        std::mt19937_64 rng(11);
        std::normal_distribution<double> normal;
        double worst = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            Vec t(pair.domain_size), w(pair.range_size);
            for (int i = 0; i < t.size(); ++i) t(i) = normal(rng);
            for (int i = 0; i < w.size(); ++i) w(i) = normal(rng);
            const double lhs = pair.ip_range(pair.apply(t), w);
            const double rhs = pair.ip_domain(t, pair.adjoint(w));
            const double scale = std::sqrt(pair.ip_domain(t, t) * pair.ip_range(w, w));
            worst = std::max(worst, std::abs(lhs - rhs) / scale);
        }
        detail = "max defect " + format_full(worst);
        return worst < 1e-10;
    });

    runner.run("fem: P1 stiffness matches a dense hand assembly", [&](std::string& detail) {
        const Mesh mesh2 = build_rect_mesh(1.0, 1, 1);
        FeSpace space(mesh2, 1, 2);
        const SparseMat K = assemble_bilinear(space, BilinearForm::elasticity(mat), BcMode::Raw);
        // independent dense assembly from the constant P1 gradients
        Eigen::MatrixXd Kd = Eigen::MatrixXd::Zero(space.n_dofs(), space.n_dofs());
        for (int c = 0; c < mesh2.n_cells(); ++c) {
            const auto& cell = mesh2.cells[c];
            Eigen::Matrix2d edges;
            edges.col(0) = (mesh2.vertices[cell[1]] - mesh2.vertices[cell[0]]).head<2>();
            edges.col(1) = (mesh2.vertices[cell[2]] - mesh2.vertices[cell[0]]).head<2>();
            const double area = 0.5 * edges.determinant();
            Eigen::Matrix2d JinvT = edges.inverse().transpose();
            Eigen::Matrix<double, 2, 3> g;
            g.col(1) = JinvT.col(0);
            g.col(2) = JinvT.col(1);
            g.col(0) = -g.col(1) - g.col(2);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    for (int ca = 0; ca < 2; ++ca)
                        for (int cb = 0; cb < 2; ++cb) {
                            double v = mat.mu * g(cb, a) * g(ca, b) + mat.lambda * g(ca, a) * g(cb, b);
                            if (ca == cb) v += mat.mu * g.col(a).dot(g.col(b));
                            Kd(space.dof(cell[a], ca), space.dof(cell[b], cb)) += area * v;
                        }
        }
        const double defect = (Eigen::MatrixXd(K) - Kd).cwiseAbs().maxCoeff();
        detail = "max entry defect " + format_full(defect);
        return defect < 1e-12 * Kd.cwiseAbs().maxCoeff();
    });

    runner.run("forward 2D: tangent solve agrees with finite differences", [&](std::string& detail) {
        const Mesh mesh2 = build_rect_mesh(3.0, 10, 10);
        Forward2D fwd(mesh2, mat, 2, 1e-12);
        const FeSpace& space = fwd.space();
        FeFunction T(space, space.interpolate([](const Eigen::Vector3d& x) { return force_ring(2000.0, x); }));
        FeFunction h(space, space.interpolate([](const Eigen::Vector3d& x) { return force_spots(300.0, x); }));
        NonlinearOpts nl;
        nl.newton_tol = 1e-12;
        const NonlinearState base = fwd.solve_nonlinear(T, nl);
        FeFunction v = fwd.frechet_apply(base, h);
        if (opts.corrupt_tangent_sign) v.coeffs = -v.coeffs;  // negative control
        const double eps = 1e-3;
        NonlinearOpts warm = nl;
        warm.initial_guess = &base.u;
        const NonlinearState up = fwd.solve_nonlinear(FeFunction(space, T.coeffs + eps * h.coeffs), warm);
        const Vec fd = (up.u.coeffs - base.u.coeffs) / eps;
        const double defect = fwd.norm_l2(fd - v.coeffs) / fwd.norm_l2(v.coeffs);
        detail = "relative defect " + format_full(defect);
        return defect < 0.05;  // first-order FD: O(eps) agreement
    });

    runner.run("material: quadratic expansion has a cubic remainder", [&](std::string& detail) {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        double worst = 10.0;
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::Matrix2d E;
            const double a = uni(rng), b = uni(rng), c = uni(rng);
            E << a, b, b, c;
            E /= E.norm();
            const double slope = expansion_order(mat, E, {1e-1, 3e-2, 1e-2, 3e-3, 1e-3});
            worst = std::min(worst, slope);
        }
        detail = "min slope " + format_full(worst);
        return worst >= 2.9;
    });

    runner.run("inversion: CGNE stops by the discrepancy principle", [&](std::string& detail) {
        const Mesh mesh3 = build_box_mesh(2.0, 1.0, 6, 6, 3);
        LinearForward25 fwd(mesh3, mat, 1);
        const FeSpace& tspace = fwd.traction_space();
        FeFunction truth(tspace, tspace.interpolate([](const Eigen::Vector3d& x) { return force_ring(1000.0, x); }));
        const FeFunction u = fwd.forward(truth);
        const NoisyData noisy = add_noise(u, fwd.volume_mass(), 5.0, 3);
        InversionConfig icfg;
        icfg.tau = 1.2;
        icfg.delta = noisy.delta;
        icfg.max_inner = 200;
        auto [t_rec, report] = cgne(make_pair_25d(fwd), noisy.field.coeffs, icfg, &truth.coeffs);
        detail = "stop " + to_string(report.stop_reason) + " after " +
                 std::to_string(report.outer_iterations) + " iterations, residual " +
                 format_full(report.residual_history.back());
        return report.stop_reason == StopReason::Discrepancy &&
               report.residual_history.back() <= icfg.tau * icfg.delta;
    });

    log << (runner.all_passed ? "selftest: all checks passed\n" : "selftest: FAILURES present\n");
    return runner.all_passed ? 0 : 1;
}

// ---------------------------------------------------------------------------
// mesh-info
// ---------------------------------------------------------------------------

int cmd_mesh_info(const ExperimentConfig& cfg, std::ostream& log) {
    try {
        auto describe = [&](const char* label, const Mesh& mesh, int order) {
            log << label << ": dim " << mesh.dim << ", " << mesh.n_vertices() << " vertices, "
                << mesh.n_cells() << " cells, " << mesh.boundary_facets.size() << " boundary facets, "
                << "volume " << mesh.total_volume() << "\n";
            int top = 0, side = 0, bottom = 0, dirichlet = 0;
            for (const auto& f : mesh.boundary_facets) {
                if (f.tag == BoundaryTag::TOP) ++top;
                if (f.tag == BoundaryTag::SIDE) ++side;
                if (f.tag == BoundaryTag::BOTTOM) ++bottom;
                if (f.tag == BoundaryTag::DIRICHLET) ++dirichlet;
            }
            if (mesh.dim == 3)
                log << "  facets: TOP " << top << ", SIDE " << side << ", BOTTOM " << bottom << "\n";
            else
                log << "  facets: DIRICHLET " << dirichlet << "\n";
            FeSpace space(mesh, order, mesh.dim);
            log << "  order " << order << ": " << space.n_dofs() << " dofs (" << space.n_constrained()
                << " constrained), mesh hash " << mesh.content_hash() << "\n";
        };
        const Mesh sim = build_sim_mesh(cfg);
        describe("simulation mesh", sim, cfg.order);
        const Mesh rec = build_recon_mesh(cfg);
        describe("reconstruction mesh", rec, recon_order(cfg));
        return 0;
    } catch (const std::exception& e) {
        log << "mesh-info: error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tfm::cli
