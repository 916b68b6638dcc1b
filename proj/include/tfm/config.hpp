#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfm/forward2d.hpp"  // ParamSpace
#include "tfm/material.hpp"

namespace tfm {

enum class ModelKind { Linear25D, Linear2D, Nonlinear2D };
enum class ForceKind { Ring, Spots, FromCsv };
enum class NoiseKind { LevelPercent, Delta, FromMargin };

/// Declarative description of one experiment, parsed from an INI-style file
/// with [section] headers and key = value lines. Parse and validation errors
/// carry file/line positions.
struct ExperimentConfig {
    ModelKind model = ModelKind::Linear2D;

    // [domain] simulation mesh
    double half_width = 3.0;
    double depth = 1.0;  // 3D only
    int nx = 32, ny = 32, nz = 8;
    int order = 2;
    bool flip_diagonal = false;

    // [reconstruction] optional overrides; absent keys fall back to [domain]
    std::optional<int> recon_nx, recon_ny, recon_nz, recon_order;
    std::optional<bool> recon_flip;

    // [material]
    bool material_from_lame = false;
    double young = 10000.0, poisson = 0.45;
    double mu = 0.0, lambda = 0.0;

    // [force]
    ForceKind force = ForceKind::Ring;
    double magnitude = 1000.0;
    std::string force_csv;

    // [experiment]
    double thickness = 1.0;
    std::string truth_csv;

    // [noise]
    NoiseKind noise = NoiseKind::LevelPercent;
    double noise_level = 5.0;
    double noise_delta = 0.0;
    Eigen::Vector4d margin_box = Eigen::Vector4d::Zero();  // x0 y0 x1 y1
    std::uint64_t seed = 1;

    // [inversion]
    double tau = 1.2;
    double rho = 0.7;
    int max_outer = 50;
    int max_inner = 300;
    ParamSpace param_space = ParamSpace::L2;
    double newton_tol = 1e-10;
    int homotopy_steps = 1;

    // [compare]
    std::vector<double> compare_magnitudes;
    bool two_stage = false;
    double two_stage_magnitude = 2e5;

    // [output]
    std::string output_dir = "out";

    // provenance, filled by load()
    std::string config_path;
    std::uint64_t config_hash = 0;

    static ExperimentConfig load(const std::string& path);
    void validate() const;  // invariants: one force source, one noise spec, tau > 1
    MaterialParams material() const;
    bool is_2d() const { return model != ModelKind::Linear25D; }
};

std::string to_string(ModelKind m);

}  // namespace tfm
