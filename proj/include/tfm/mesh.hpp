#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tfm {

/// Boundary region labels. TOP/SIDE/BOTTOM are used on 3D substrate meshes,
/// DIRICHLET on 2D meshes where the whole boundary is clamped.
enum class BoundaryTag { TOP, SIDE, BOTTOM, DIRICHLET };

enum class CellType { Triangle, Quad, Hexahedron };

std::string to_string(BoundaryTag tag);

/// One boundary facet: an edge (2D) or a quadrilateral face (3D).
/// Vertices are ordered so that the outer normal follows the right-hand rule
/// (2D: outward is the tangent rotated by -90 degrees).
struct BoundaryFacet {
    std::array<int, 4> vertices{-1, -1, -1, -1};
    int n_vertices = 0;
    int cell = -1;  // owning cell (each boundary facet belongs to exactly one)
    BoundaryTag tag = BoundaryTag::DIRICHLET;
};

/// Lattice metadata kept for meshes produced by the structured generators.
/// Enables O(1) point location for interpolation between meshes.
struct StructuredInfo {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d spacing = Eigen::Vector3d::Zero();
    std::array<int, 3> divisions{0, 0, 0};  // nx, ny, nz (nz = 0 in 2D)
    bool flipped_diagonal = false;          // triangle split direction (2D)
};

/// Immutable simplicial/tensor-product mesh. Values are safe to share across
/// concurrent solves once constructed.
struct Mesh {
    int dim = 2;
    CellType cell_type = CellType::Triangle;
    std::vector<Eigen::Vector3d> vertices;  // z = 0 for 2D meshes
    std::vector<std::vector<int>> cells;
    std::vector<BoundaryFacet> boundary_facets;
    std::optional<StructuredInfo> structured;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_cells() const { return static_cast<int>(cells.size()); }

    /// Signed volume (area in 2D) of one cell under its stored orientation.
    double cell_volume(int c) const;
    double total_volume() const;

    /// Area (length in 2D) of a boundary facet.
    double facet_area(int f) const;
    /// Outward unit normal of a planar boundary facet.
    Eigen::Vector3d facet_normal(int f) const;

    /// FNV-1a hash over vertex coordinates and connectivity; used in manifests.
    std::uint64_t content_hash() const;
};

/// Uniform triangulation of [-half_width, half_width]^2; every grid cell is
/// split into two triangles and all boundary edges are tagged DIRICHLET.
/// flip_diagonal selects the opposite split direction, which gives a distinct
/// discretization for reconstruction meshes (inverse-crime avoidance).
Mesh build_rect_mesh(double half_width, int nx, int ny, bool flip_diagonal = false);

/// Uniform hexahedral mesh of [-half_width, half_width]^2 x [-depth, 0].
/// Facets at x3 = 0 are tagged TOP, at x3 = -depth BOTTOM, the rest SIDE.
Mesh build_box_mesh(double half_width, double depth, int nx, int ny, int nz);

/// Writes the mesh (and optional per-vertex vector fields) as legacy ASCII
/// VTK unstructured grid. Fields are padded to 3 components.
void write_vtk(const Mesh& mesh, const std::string& path,
               const std::vector<std::pair<std::string, std::vector<Eigen::Vector3d>>>& point_fields = {});

}  // namespace tfm
