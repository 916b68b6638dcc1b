#pragma once

#include <iostream>
#include <string>

#include "tfm/config.hpp"

namespace tfm::cli {

/// Forward simulation: truth traction CSV, clean and noisy displacement CSVs,
/// VTK fields and a manifest, all deterministic given (config, seed).
int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log = std::cout);

/// Inversion from a displacement CSV (own simulate output or measured data).
/// Uses the [reconstruction] mesh overrides; warns when the data grid
/// coincides with the reconstruction mesh (inverse crime).
int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& data_path, const std::string& out_dir,
                    std::ostream& log = std::cout);

/// Linear-vs-nonlinear forward sweep, plus the optional two-stage workflow
/// (linear reconstruction refined by the nonlinear model).
int cmd_compare(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log = std::cout);

struct SelftestOptions {
    bool corrupt_tangent_sign = false;  // negative-control fixture
};
/// Coarse-mesh adjoint, derivative and oracle checks with per-check timing.
int cmd_selftest(const SelftestOptions& opts = {}, std::ostream& log = std::cout);

int cmd_mesh_info(const ExperimentConfig& cfg, std::ostream& log = std::cout);

}  // namespace tfm::cli
