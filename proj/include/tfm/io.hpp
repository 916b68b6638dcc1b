#pragma once

#include <string>
#include <vector>

#include "tfm/fem.hpp"
#include "tfm/inversion.hpp"

namespace tfm {

std::string format_full(double v);  // round-trip decimal formatting

/// One row per scalar node: coordinates (x,y for 2D meshes, x,y,z for 3D)
/// followed by the field components under the given names.
void write_field_csv(const FeFunction& f, const std::string& path,
                     const std::vector<std::string>& component_names);

/// Regular-grid planar vector field with 2 or 3 components, read from CSV
/// with header x,y,<c1>,<c2>[,<c3>]. Rows may come in any order but must
/// fill a complete tensor grid.
class GridField2 {
public:
    static GridField2 read_csv(const std::string& path);

    Eigen::Vector3d value(const Eigen::Vector2d& point) const;  // bilinear; unused comps zero
    int ncomp() const { return ncomp_; }
    int nx() const { return static_cast<int>(xs_.size()); }
    int ny() const { return static_cast<int>(ys_.size()); }
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }

    /// True when the grid points coincide with the space's scalar nodes
    /// (the inverse-crime situation).
    bool matches_nodes(const FeSpace& space, double rel_tol = 1e-10) const;

    /// Nodal interpolation onto a space with value_dim <= ncomp.
    FeFunction interpolate(const FeSpace& space) const;

private:
    int ncomp_ = 2;
    std::vector<double> xs_, ys_;
    std::vector<Eigen::Vector3d> values_;  // ny x nx, row-major in y
};

/// Regular-grid 3D vector field from CSV with header x,y,z,<a>,<b>,<c>.
class GridField3 {
public:
    static GridField3 read_csv(const std::string& path);

    Eigen::Vector3d value(const Eigen::Vector3d& point) const;  // trilinear
    bool matches_nodes(const FeSpace& space, double rel_tol = 1e-10) const;
    FeFunction interpolate(const FeSpace& space) const;

private:
    std::vector<double> xs_, ys_, zs_;
    std::vector<Eigen::Vector3d> values_;
};

void write_report_kv(const SolveReport& report, const std::string& path);
void write_report_csv(const SolveReport& report, const std::string& path);

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);
std::uint64_t hash_file(const std::string& path);

}  // namespace tfm
