#include "tfm/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tfm {

std::string to_string(BoundaryTag tag) {
    switch (tag) {
        case BoundaryTag::TOP: return "TOP";
        case BoundaryTag::SIDE: return "SIDE";
        case BoundaryTag::BOTTOM: return "BOTTOM";
        case BoundaryTag::DIRICHLET: return "DIRICHLET";
    }
    return "?";
}

double Mesh::cell_volume(int c) const {
    const auto& cell = cells[c];
    if (cell_type == CellType::Triangle) {
        const Eigen::Vector3d& a = vertices[cell[0]];
        const Eigen::Vector3d& b = vertices[cell[1]];
        const Eigen::Vector3d& d = vertices[cell[2]];
        return 0.5 * ((b.x() - a.x()) * (d.y() - a.y()) - (b.y() - a.y()) * (d.x() - a.x()));
    }
    if (cell_type == CellType::Quad) {
        // split along the 0-2 diagonal; exact for planar quads
        const Eigen::Vector3d& a = vertices[cell[0]];
        const Eigen::Vector3d& b = vertices[cell[1]];
        const Eigen::Vector3d& c2 = vertices[cell[2]];
        const Eigen::Vector3d& d = vertices[cell[3]];
        auto tri = [](const Eigen::Vector3d& p, const Eigen::Vector3d& q, const Eigen::Vector3d& r) {
            return 0.5 * ((q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x()));
        };
        return tri(a, b, c2) + tri(a, c2, d);
    }
    // Hexahedron: decompose into 6 tetrahedra around the 0-6 diagonal.
    auto tet = [&](int i, int j, int k, int l) {
        Eigen::Vector3d u = vertices[cell[j]] - vertices[cell[i]];
        Eigen::Vector3d v = vertices[cell[k]] - vertices[cell[i]];
        Eigen::Vector3d w = vertices[cell[l]] - vertices[cell[i]];
        return u.cross(v).dot(w) / 6.0;
    };
    return tet(0, 1, 2, 6) + tet(0, 2, 3, 6) + tet(0, 3, 7, 6) +
           tet(0, 7, 4, 6) + tet(0, 4, 5, 6) + tet(0, 5, 1, 6);
}

double Mesh::total_volume() const {
    double v = 0.0;
    for (int c = 0; c < n_cells(); ++c) v += cell_volume(c);
    return v;
}

double Mesh::facet_area(int f) const {
    const BoundaryFacet& bf = boundary_facets[f];
    if (bf.n_vertices == 2) {
        return (vertices[bf.vertices[1]] - vertices[bf.vertices[0]]).norm();
    }
    const Eigen::Vector3d& a = vertices[bf.vertices[0]];
    const Eigen::Vector3d& b = vertices[bf.vertices[1]];
    const Eigen::Vector3d& c = vertices[bf.vertices[2]];
    const Eigen::Vector3d& d = vertices[bf.vertices[3]];
    return 0.5 * ((b - a).cross(c - a)).norm() + 0.5 * ((c - a).cross(d - a)).norm();
}

Eigen::Vector3d Mesh::facet_normal(int f) const {
    const BoundaryFacet& bf = boundary_facets[f];
    if (bf.n_vertices == 2) {
        Eigen::Vector3d t = vertices[bf.vertices[1]] - vertices[bf.vertices[0]];
        Eigen::Vector3d n(t.y(), -t.x(), 0.0);
        return n.normalized();
    }
    const Eigen::Vector3d& a = vertices[bf.vertices[0]];
    const Eigen::Vector3d& b = vertices[bf.vertices[1]];
    const Eigen::Vector3d& d = vertices[bf.vertices[3]];
    return ((b - a).cross(d - a)).normalized();
}

std::uint64_t Mesh::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    mix(&dim, sizeof dim);
    for (const auto& v : vertices) {
        double c[3] = {v.x(), v.y(), v.z()};
        mix(c, sizeof c);
    }
    for (const auto& cell : cells)
        for (int idx : cell) mix(&idx, sizeof idx);
    for (const auto& bf : boundary_facets) {
        mix(bf.vertices.data(), sizeof(int) * bf.n_vertices);
        int t = static_cast<int>(bf.tag);
        mix(&t, sizeof t);
    }
    return h;
}

Mesh build_rect_mesh(double half_width, int nx, int ny, bool flip_diagonal) {
    if (half_width <= 0.0) throw std::invalid_argument("build_rect_mesh: half_width must be positive");
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_rect_mesh: cell counts must be >= 1");

    Mesh mesh;
    mesh.dim = 2;
    mesh.cell_type = CellType::Triangle;

    const double hx = 2.0 * half_width / nx;
    const double hy = 2.0 * half_width / ny;
    auto vid = [&](int i, int j) { return j * (nx + 1) + i; };

    mesh.vertices.reserve((nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.emplace_back(-half_width + i * hx, -half_width + j * hy, 0.0);

    mesh.cells.reserve(2 * nx * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            int v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
            if (!flip_diagonal) {
                // diagonal v00 -- v11
                mesh.cells.push_back({v00, v10, v11});
                mesh.cells.push_back({v00, v11, v01});
            } else {
                // diagonal v10 -- v01
                mesh.cells.push_back({v00, v10, v01});
                mesh.cells.push_back({v10, v11, v01});
            }
        }
    }

    // Boundary edges, counterclockwise along the outer boundary.
    auto owner_of_edge = [&](int i, int j, bool first_tri) {
        // cell index of grid cell (i, j), triangle 0 or 1
        return 2 * (j * nx + i) + (first_tri ? 0 : 1);
    };
    for (int i = 0; i < nx; ++i) {  // bottom y = -hw
        BoundaryFacet f;
        f.vertices = {vid(i, 0), vid(i + 1, 0), -1, -1};
        f.n_vertices = 2;
        f.cell = owner_of_edge(i, 0, true);
        f.tag = BoundaryTag::DIRICHLET;
        mesh.boundary_facets.push_back(f);
    }
    for (int j = 0; j < ny; ++j) {  // right x = +hw
        BoundaryFacet f;
        f.vertices = {vid(nx, j), vid(nx, j + 1), -1, -1};
        f.n_vertices = 2;
        f.cell = owner_of_edge(nx - 1, j, !flip_diagonal);
        f.tag = BoundaryTag::DIRICHLET;
        mesh.boundary_facets.push_back(f);
    }
    for (int i = nx; i > 0; --i) {  // top y = +hw
        BoundaryFacet f;
        f.vertices = {vid(i, ny), vid(i - 1, ny), -1, -1};
        f.n_vertices = 2;
        f.cell = owner_of_edge(i - 1, ny - 1, false);
        f.tag = BoundaryTag::DIRICHLET;
        mesh.boundary_facets.push_back(f);
    }
    for (int j = ny; j > 0; --j) {  // left x = -hw
        BoundaryFacet f;
        f.vertices = {vid(0, j), vid(0, j - 1), -1, -1};
        f.n_vertices = 2;
        f.cell = owner_of_edge(0, j - 1, flip_diagonal);
        f.tag = BoundaryTag::DIRICHLET;
        mesh.boundary_facets.push_back(f);
    }

    StructuredInfo info;
    info.origin = Eigen::Vector3d(-half_width, -half_width, 0.0);
    info.spacing = Eigen::Vector3d(hx, hy, 0.0);
    info.divisions = {nx, ny, 0};
    info.flipped_diagonal = flip_diagonal;
    mesh.structured = info;
    return mesh;
}

Mesh build_box_mesh(double half_width, double depth, int nx, int ny, int nz) {
    if (half_width <= 0.0 || depth <= 0.0)
        throw std::invalid_argument("build_box_mesh: extents must be positive");
    if (nx < 1 || ny < 1 || nz < 1) throw std::invalid_argument("build_box_mesh: cell counts must be >= 1");

    Mesh mesh;
    mesh.dim = 3;
    mesh.cell_type = CellType::Hexahedron;

    const double hx = 2.0 * half_width / nx;
    const double hy = 2.0 * half_width / ny;
    const double hz = depth / nz;
    auto vid = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };

    mesh.vertices.reserve((nx + 1) * (ny + 1) * (nz + 1));
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                mesh.vertices.emplace_back(-half_width + i * hx, -half_width + j * hy, -depth + k * hz);

    auto cid = [&](int i, int j, int k) { return (k * ny + j) * nx + i; };
    mesh.cells.reserve(nx * ny * nz);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                mesh.cells.push_back({vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k),
                                      vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j + 1, k + 1),
                                      vid(i, j + 1, k + 1)});

    auto push_facet = [&](std::array<int, 4> verts, int cell, BoundaryTag tag) {
        BoundaryFacet f;
        f.vertices = verts;
        f.n_vertices = 4;
        f.cell = cell;
        f.tag = tag;
        mesh.boundary_facets.push_back(f);
    };

    for (int j = 0; j < ny; ++j)  // TOP (x3 = 0), outward normal +z
        for (int i = 0; i < nx; ++i)
            push_facet({vid(i, j, nz), vid(i + 1, j, nz), vid(i + 1, j + 1, nz), vid(i, j + 1, nz)},
                       cid(i, j, nz - 1), BoundaryTag::TOP);
    for (int j = 0; j < ny; ++j)  // BOTTOM (x3 = -depth), outward normal -z
        for (int i = 0; i < nx; ++i)
            push_facet({vid(i, j, 0), vid(i, j + 1, 0), vid(i + 1, j + 1, 0), vid(i + 1, j, 0)},
                       cid(i, j, 0), BoundaryTag::BOTTOM);
    for (int k = 0; k < nz; ++k) {
        for (int i = 0; i < nx; ++i) {  // front y = -hw, outward -y
            push_facet({vid(i, 0, k), vid(i + 1, 0, k), vid(i + 1, 0, k + 1), vid(i, 0, k + 1)},
                       cid(i, 0, k), BoundaryTag::SIDE);
            // back y = +hw, outward +y
            push_facet({vid(i + 1, ny, k), vid(i, ny, k), vid(i, ny, k + 1), vid(i + 1, ny, k + 1)},
                       cid(i, ny - 1, k), BoundaryTag::SIDE);
        }
        for (int j = 0; j < ny; ++j) {  // left x = -hw, outward -x
            push_facet({vid(0, j + 1, k), vid(0, j, k), vid(0, j, k + 1), vid(0, j + 1, k + 1)},
                       cid(0, j, k), BoundaryTag::SIDE);
            // right x = +hw, outward +x
            push_facet({vid(nx, j, k), vid(nx, j + 1, k), vid(nx, j + 1, k + 1), vid(nx, j, k + 1)},
                       cid(nx - 1, j, k), BoundaryTag::SIDE);
        }
    }

    StructuredInfo info;
    info.origin = Eigen::Vector3d(-half_width, -half_width, -depth);
    info.spacing = Eigen::Vector3d(hx, hy, hz);
    info.divisions = {nx, ny, nz};
    mesh.structured = info;
    return mesh;
}

void write_vtk(const Mesh& mesh, const std::string& path,
               const std::vector<std::pair<std::string, std::vector<Eigen::Vector3d>>>& point_fields) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
    char buf[96];

    out << "# vtk DataFile Version 3.0\n";
    out << "tfm mesh\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.n_vertices() << " double\n";
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }

    const int npc = static_cast<int>(mesh.cells.empty() ? 0 : mesh.cells[0].size());
    out << "CELLS " << mesh.n_cells() << " " << mesh.n_cells() * (npc + 1) << "\n";
    for (const auto& cell : mesh.cells) {
        out << cell.size();
        for (int v : cell) out << ' ' << v;
        out << '\n';
    }
    int vtk_type = 5;  // triangle
    if (mesh.cell_type == CellType::Quad) vtk_type = 9;
    if (mesh.cell_type == CellType::Hexahedron) vtk_type = 12;
    out << "CELL_TYPES " << mesh.n_cells() << "\n";
    for (int c = 0; c < mesh.n_cells(); ++c) out << vtk_type << '\n';

    if (!point_fields.empty()) {
        out << "POINT_DATA " << mesh.n_vertices() << "\n";
        for (const auto& [name, values] : point_fields) {
            if (static_cast<int>(values.size()) != mesh.n_vertices())
                throw std::invalid_argument("write_vtk: field '" + name + "' has wrong length");
            out << "VECTORS " << name << " double\n";
            for (const auto& v : values) {
                std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
                out << buf;
            }
        }
    }
}

}  // namespace tfm
