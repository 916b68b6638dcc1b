#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "tfm/mesh.hpp"

using namespace tfm;

TEST_CASE("rect mesh: minimal grid") {
    const Mesh mesh = build_rect_mesh(1.0, 1, 1);
    CHECK(mesh.dim == 2);
    CHECK(mesh.n_vertices() == 4);
    CHECK(mesh.n_cells() == 2);
    CHECK(mesh.boundary_facets.size() == 4);
    for (const auto& f : mesh.boundary_facets) CHECK(f.tag == BoundaryTag::DIRICHLET);
}

TEST_CASE("rect mesh: total area matches the analytic domain") {
    const Mesh mesh = build_rect_mesh(3.0, 64, 64);
    CHECK(mesh.total_volume() == doctest::Approx(36.0).epsilon(1e-12));
}

TEST_CASE("rect mesh: boundary facet endpoints lie on the boundary square") {
    const Mesh mesh = build_rect_mesh(3.0, 4, 4);
    CHECK(mesh.boundary_facets.size() == 16);  // 2*(nx+ny)
    for (const auto& f : mesh.boundary_facets)
        for (int v = 0; v < f.n_vertices; ++v) {
            const auto& p = mesh.vertices[f.vertices[v]];
            CHECK(std::max(std::abs(p.x()), std::abs(p.y())) == doctest::Approx(3.0).epsilon(1e-14));
        }
}

TEST_CASE("rect mesh: positive orientation and unique facet owners") {
    for (bool flip : {false, true}) {
        const Mesh mesh = build_rect_mesh(2.0, 3, 5, flip);
        for (int c = 0; c < mesh.n_cells(); ++c) CHECK(mesh.cell_volume(c) > 0.0);
        for (const auto& f : mesh.boundary_facets) {
            REQUIRE(f.cell >= 0);
            REQUIRE(f.cell < mesh.n_cells());
            // every facet vertex belongs to the owning cell
            const auto& cell = mesh.cells[f.cell];
            for (int v = 0; v < f.n_vertices; ++v)
                CHECK(std::count(cell.begin(), cell.end(), f.vertices[v]) == 1);
        }
    }
}

TEST_CASE("rect mesh: invalid arguments") {
    CHECK_THROWS_AS(build_rect_mesh(1.0, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_rect_mesh(1.0, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_rect_mesh(-1.0, 4, 4), std::invalid_argument);
}

TEST_CASE("box mesh: single hexahedron") {
    const Mesh mesh = build_box_mesh(1.0, 1.0, 1, 1, 1);
    CHECK(mesh.n_vertices() == 8);
    CHECK(mesh.n_cells() == 1);
    CHECK(mesh.boundary_facets.size() == 6);
    int top = 0, bottom = 0, side = 0;
    for (const auto& f : mesh.boundary_facets) {
        if (f.tag == BoundaryTag::TOP) ++top;
        if (f.tag == BoundaryTag::BOTTOM) ++bottom;
        if (f.tag == BoundaryTag::SIDE) ++side;
    }
    CHECK(top == 1);
    CHECK(bottom == 1);
    CHECK(side == 4);
}

TEST_CASE("box mesh: volume identity") {
    const Mesh mesh = build_box_mesh(2.0, 1.0, 8, 8, 4);
    CHECK(mesh.total_volume() == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("box mesh: TOP facets sit at the surface plane") {
    const Mesh mesh = build_box_mesh(2.0, 1.0, 2, 2, 2);
    int top_count = 0;
    for (const auto& f : mesh.boundary_facets) {
        if (f.tag != BoundaryTag::TOP) continue;
        ++top_count;
        for (int v = 0; v < 4; ++v) CHECK(mesh.vertices[f.vertices[v]].z() == doctest::Approx(0.0));
    }
    CHECK(top_count == 4);
}

TEST_CASE("box mesh: outer normals of TOP and BOTTOM facets") {
    const Mesh mesh = build_box_mesh(1.5, 0.5, 3, 2, 2);
    for (int f = 0; f < static_cast<int>(mesh.boundary_facets.size()); ++f) {
        const auto tag = mesh.boundary_facets[f].tag;
        const Eigen::Vector3d n = mesh.facet_normal(f);
        if (tag == BoundaryTag::TOP) CHECK((n - Eigen::Vector3d(0, 0, 1)).norm() < 1e-14);
        if (tag == BoundaryTag::BOTTOM) CHECK((n - Eigen::Vector3d(0, 0, -1)).norm() < 1e-14);
        if (tag == BoundaryTag::SIDE) CHECK(std::abs(n.z()) < 1e-14);
    }
}

TEST_CASE("refinement multiplies cell counts and preserves volume") {
    const Mesh coarse2 = build_rect_mesh(2.5, 3, 4);
    const Mesh fine2 = build_rect_mesh(2.5, 6, 8);
    CHECK(fine2.n_cells() == 4 * coarse2.n_cells());
    CHECK(fine2.total_volume() == doctest::Approx(coarse2.total_volume()).epsilon(1e-12));

    const Mesh coarse3 = build_box_mesh(2.0, 1.0, 2, 3, 2);
    const Mesh fine3 = build_box_mesh(2.0, 1.0, 4, 6, 4);
    CHECK(fine3.n_cells() == 8 * coarse3.n_cells());
    CHECK(fine3.total_volume() == doctest::Approx(coarse3.total_volume()).epsilon(1e-12));
}

TEST_CASE("3D boundary facets cover the full boundary area") {
    const Mesh mesh = build_box_mesh(2.0, 1.0, 3, 3, 2);
    double area = 0.0;
    for (int f = 0; f < static_cast<int>(mesh.boundary_facets.size()); ++f) area += mesh.facet_area(f);
    const double expected = 2 * 16.0 + 4 * 4.0 * 1.0;  // two squares + four side walls
    CHECK(area == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("diagonal flip changes the triangulation but not the geometry") {
    const Mesh a = build_rect_mesh(1.0, 2, 2, false);
    const Mesh b = build_rect_mesh(1.0, 2, 2, true);
    CHECK(a.n_cells() == b.n_cells());
    CHECK(a.total_volume() == doctest::Approx(b.total_volume()).epsilon(1e-14));
    CHECK(a.content_hash() != b.content_hash());
    CHECK(a.content_hash() == build_rect_mesh(1.0, 2, 2, false).content_hash());
}

TEST_CASE("VTK export writes a parseable unstructured grid") {
    const Mesh mesh = build_box_mesh(1.0, 1.0, 2, 2, 1);
    std::vector<Eigen::Vector3d> field(mesh.n_vertices(), Eigen::Vector3d(1, 2, 3));
    const std::string path = "mesh_test_out.vtk";
    write_vtk(mesh, path, {{"displacement", field}});
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# vtk DataFile Version 3.0");
    bool saw_points = false, saw_celltypes = false, saw_vectors = false;
    while (std::getline(in, line)) {
        if (line.rfind("POINTS 18 double", 0) == 0) saw_points = true;
        if (line.rfind("CELL_TYPES 4", 0) == 0) saw_celltypes = true;
        if (line.rfind("VECTORS displacement double", 0) == 0) saw_vectors = true;
    }
    CHECK(saw_points);
    CHECK(saw_celltypes);
    CHECK(saw_vectors);
    std::remove(path.c_str());
}
