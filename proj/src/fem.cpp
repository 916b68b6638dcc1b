#include "tfm/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

namespace tfm {

namespace {

// ---------------------------------------------------------------------------
// quadrature tables
// ---------------------------------------------------------------------------

// barycentric (l0, l1, l2) with reference coordinates (xi, eta) = (l1, l2)
void push_bary(QuadratureRule& rule, double l1, double l2, double w) {
    rule.points.emplace_back(l1, l2, 0.0);
    rule.weights.push_back(w * 0.5);  // reference triangle area
}

void push_group3(QuadratureRule& rule, double a, double w) {
    const double c = 1.0 - 2.0 * a;
    push_bary(rule, a, c, w);
    push_bary(rule, c, a, w);
    push_bary(rule, a, a, w);
}

void push_group6(QuadratureRule& rule, double a, double b, double w) {
    const double c = 1.0 - a - b;
    push_bary(rule, b, c, w);
    push_bary(rule, c, b, w);
    push_bary(rule, a, c, w);
    push_bary(rule, c, a, w);
    push_bary(rule, a, b, w);
    push_bary(rule, b, a, w);
}

}  // namespace

QuadratureRule triangle_rule(int degree) {
    QuadratureRule rule;
    if (degree <= 1) {
        push_bary(rule, 1.0 / 3.0, 1.0 / 3.0, 1.0);
    } else if (degree <= 2) {
        push_group3(rule, 1.0 / 6.0, 1.0 / 3.0);
    } else if (degree <= 4) {
        push_group3(rule, 0.445948490915965, 0.223381589678011);
        push_group3(rule, 0.091576213509771, 0.109951743655322);
    } else if (degree <= 6) {
        push_group3(rule, 0.0630890144915020, 0.0508449063702068);
        push_group3(rule, 0.2492867451709100, 0.1167862757263789);
        push_group6(rule, 0.3103524510337844, 0.0531450498448160, 0.0828510756183736);
    } else if (degree <= 8) {
        push_bary(rule, 1.0 / 3.0, 1.0 / 3.0, 0.1443156076777872);
        push_group3(rule, 0.4592925882927230, 0.0950916342672846);
        push_group3(rule, 0.1705693077517602, 0.1032173705347183);
        push_group3(rule, 0.0505472283170310, 0.0324584976231980);
        push_group6(rule, 0.2631128296346381, 0.0083947774099576, 0.0272303141744350);
    } else {
        throw std::invalid_argument("triangle_rule: quadrature degree > 8 not available");
    }
    return rule;
}

QuadratureRule gauss1d(int npoints) {
    // abscissas/weights on [-1, 1], mapped to [0, 1]
    static const std::vector<std::vector<std::pair<double, double>>> tables = {
        {{0.0, 2.0}},
        {{-0.5773502691896257, 1.0}, {0.5773502691896257, 1.0}},
        {{-0.7745966692414834, 5.0 / 9.0}, {0.0, 8.0 / 9.0}, {0.7745966692414834, 5.0 / 9.0}},
        {{-0.8611363115940526, 0.3478548451374538},
         {-0.3399810435848563, 0.6521451548625461},
         {0.3399810435848563, 0.6521451548625461},
         {0.8611363115940526, 0.3478548451374538}},
        {{-0.9061798459386640, 0.2369268850561891},
         {-0.5384693101056831, 0.4786286704993665},
         {0.0, 0.5688888888888889},
         {0.5384693101056831, 0.4786286704993665},
         {0.9061798459386640, 0.2369268850561891}},
    };
    if (npoints < 1 || npoints > static_cast<int>(tables.size()))
        throw std::invalid_argument("gauss1d: unsupported point count");
    QuadratureRule rule;
    for (const auto& [x, w] : tables[npoints - 1]) {
        rule.points.emplace_back(0.5 * (1.0 + x), 0.0, 0.0);
        rule.weights.push_back(0.5 * w);
    }
    return rule;
}

QuadratureRule tensor_rule(CellType type, int npoints_per_dim) {
    const QuadratureRule g = gauss1d(npoints_per_dim);
    QuadratureRule rule;
    if (type == CellType::Quad) {
        for (int j = 0; j < g.size(); ++j)
            for (int i = 0; i < g.size(); ++i) {
                rule.points.emplace_back(g.points[i].x(), g.points[j].x(), 0.0);
                rule.weights.push_back(g.weights[i] * g.weights[j]);
            }
    } else if (type == CellType::Hexahedron) {
        for (int k = 0; k < g.size(); ++k)
            for (int j = 0; j < g.size(); ++j)
                for (int i = 0; i < g.size(); ++i) {
                    rule.points.emplace_back(g.points[i].x(), g.points[j].x(), g.points[k].x());
                    rule.weights.push_back(g.weights[i] * g.weights[j] * g.weights[k]);
                }
    } else {
        throw std::invalid_argument("tensor_rule: not a tensor-product cell");
    }
    return rule;
}

// ---------------------------------------------------------------------------
// reference elements
// ---------------------------------------------------------------------------

namespace {

CellLayout make_triangle_layout(int p) {
    CellLayout layout;
    auto add = [&](int b0, int b1, int b2) {
        layout.idx.push_back({b0, b1, b2});
        layout.ref_coords.emplace_back(static_cast<double>(b1) / p, static_cast<double>(b2) / p, 0.0);
    };
    add(p, 0, 0);
    add(0, p, 0);
    add(0, 0, p);
    for (int k = 1; k < p; ++k) add(p - k, k, 0);  // edge (0,1)
    for (int k = 1; k < p; ++k) add(0, p - k, k);  // edge (1,2)
    for (int k = 1; k < p; ++k) add(k, 0, p - k);  // edge (2,0)
    if (p == 3) add(1, 1, 1);
    layout.nbasis = static_cast<int>(layout.idx.size());
    return layout;
}

CellLayout make_tensor_layout(CellType type, int p) {
    CellLayout layout;
    const int kmax = (type == CellType::Hexahedron) ? p : 0;
    for (int k = 0; k <= kmax; ++k)
        for (int j = 0; j <= p; ++j)
            for (int i = 0; i <= p; ++i) {
                layout.idx.push_back({i, j, k});
                layout.ref_coords.emplace_back(static_cast<double>(i) / p, static_cast<double>(j) / p,
                                               static_cast<double>(k) / p);
            }
    layout.nbasis = static_cast<int>(layout.idx.size());
    return layout;
}

// Silvester polynomial S_m(lambda) = prod_{r<m} (p*lambda - r)/(m - r) and derivative.
void silvester(int m, int p, double lam, double& val, double& der) {
    val = 1.0;
    der = 0.0;
    for (int r = 0; r < m; ++r) {
        const double factor = (p * lam - r) / (m - r);
        der = der * factor + val * (static_cast<double>(p) / (m - r));
        val *= factor;
    }
}

// 1D Lagrange basis on equispaced nodes a/p over [0, 1].
void lagrange1d(int p, int a, double t, double& val, double& der) {
    val = 1.0;
    der = 0.0;
    for (int m = 0; m <= p; ++m) {
        if (m == a) continue;
        const double denom = static_cast<double>(a - m) / p;
        const double factor = (t - static_cast<double>(m) / p) / denom;
        der = der * factor + val / denom;
        val *= factor;
    }
}

}  // namespace

const CellLayout& cell_layout(CellType type, int order) {
    if (order < 1 || order > 3) throw std::invalid_argument("cell_layout: order must be 1..3");
    static const std::map<std::pair<int, int>, CellLayout> cache = [] {
        std::map<std::pair<int, int>, CellLayout> m;
        for (int p = 1; p <= 3; ++p) {
            m[{static_cast<int>(CellType::Triangle), p}] = make_triangle_layout(p);
            m[{static_cast<int>(CellType::Quad), p}] = make_tensor_layout(CellType::Quad, p);
            m[{static_cast<int>(CellType::Hexahedron), p}] = make_tensor_layout(CellType::Hexahedron, p);
        }
        return m;
    }();
    return cache.at({static_cast<int>(type), order});
}

void eval_basis(CellType type, int order, const Eigen::Vector3d& ref, Eigen::VectorXd& values,
                Eigen::Matrix<double, Eigen::Dynamic, 3>& gradients) {
    const CellLayout& layout = cell_layout(type, order);
    values.resize(layout.nbasis);
    gradients.setZero(layout.nbasis, 3);

    if (type == CellType::Triangle) {
        const double lam[3] = {1.0 - ref.x() - ref.y(), ref.x(), ref.y()};
        for (int n = 0; n < layout.nbasis; ++n) {
            double v[3], d[3];
            for (int c = 0; c < 3; ++c) silvester(layout.idx[n][c], order, lam[c], v[c], d[c]);
            values(n) = v[0] * v[1] * v[2];
            const double dl0 = d[0] * v[1] * v[2];
            const double dl1 = v[0] * d[1] * v[2];
            const double dl2 = v[0] * v[1] * d[2];
            gradients(n, 0) = dl1 - dl0;
            gradients(n, 1) = dl2 - dl0;
        }
        return;
    }

    const int dim = (type == CellType::Hexahedron) ? 3 : 2;
    // 1D values/derivatives per axis and node index
    double lv[3][4], ld[3][4];
    for (int c = 0; c < dim; ++c)
        for (int a = 0; a <= order; ++a) lagrange1d(order, a, ref(c), lv[c][a], ld[c][a]);
    for (int n = 0; n < layout.nbasis; ++n) {
        const auto& id = layout.idx[n];
        if (dim == 2) {
            values(n) = lv[0][id[0]] * lv[1][id[1]];
            gradients(n, 0) = ld[0][id[0]] * lv[1][id[1]];
            gradients(n, 1) = lv[0][id[0]] * ld[1][id[1]];
        } else {
            values(n) = lv[0][id[0]] * lv[1][id[1]] * lv[2][id[2]];
            gradients(n, 0) = ld[0][id[0]] * lv[1][id[1]] * lv[2][id[2]];
            gradients(n, 1) = lv[0][id[0]] * ld[1][id[1]] * lv[2][id[2]];
            gradients(n, 2) = lv[0][id[0]] * lv[1][id[1]] * ld[2][id[2]];
        }
    }
}

// ---------------------------------------------------------------------------
// geometry maps
// ---------------------------------------------------------------------------

namespace {

// VTK reference vertex coordinates
const int kQuadVerts[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
const int kHexVerts[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                             {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

const int kTriEdges[3][2] = {{0, 1}, {1, 2}, {2, 0}};
const int kQuadEdges[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
const int kHexEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct HexFace {
    int loop[4];     // local vertices at face-lattice (0,0), (p,0), (p,p), (0,p)
    int axes[2];     // lattice axes spanning the face
    int fixed_axis;  // remaining axis
    int fixed_top;   // 0: coordinate 0, 1: coordinate p
};
const HexFace kHexFaces[6] = {
    {{0, 1, 2, 3}, {0, 1}, 2, 0}, {{4, 5, 6, 7}, {0, 1}, 2, 1}, {{0, 1, 5, 4}, {0, 2}, 1, 0},
    {{3, 2, 6, 7}, {0, 2}, 1, 1}, {{0, 3, 7, 4}, {1, 2}, 0, 0}, {{1, 2, 6, 5}, {1, 2}, 0, 1},
};

Eigen::Vector3d bilinear_point(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                               const Eigen::Vector3d& p2, const Eigen::Vector3d& p3, double a, double b) {
    return (1 - a) * (1 - b) * p0 + a * (1 - b) * p1 + a * b * p2 + (1 - a) * b * p3;
}

void geometry_at(const Mesh& mesh, const std::vector<int>& cell, const Eigen::Vector3d& ref,
                 Eigen::Vector3d& x, Eigen::Matrix3d& J) {
    J.setIdentity();
    if (mesh.cell_type == CellType::Triangle) {
        const Eigen::Vector3d& v0 = mesh.vertices[cell[0]];
        const Eigen::Vector3d e1 = mesh.vertices[cell[1]] - v0;
        const Eigen::Vector3d e2 = mesh.vertices[cell[2]] - v0;
        x = v0 + ref.x() * e1 + ref.y() * e2;
        J.col(0).head<2>() = e1.head<2>();
        J.col(1).head<2>() = e2.head<2>();
        J(2, 2) = 1.0;
        return;
    }
    if (mesh.cell_type == CellType::Quad) {
        x.setZero();
        Eigen::Vector3d dxi = Eigen::Vector3d::Zero(), deta = Eigen::Vector3d::Zero();
        for (int a = 0; a < 4; ++a) {
            const double fx = kQuadVerts[a][0] ? ref.x() : 1.0 - ref.x();
            const double fy = kQuadVerts[a][1] ? ref.y() : 1.0 - ref.y();
            const double gx = kQuadVerts[a][0] ? 1.0 : -1.0;
            const double gy = kQuadVerts[a][1] ? 1.0 : -1.0;
            const Eigen::Vector3d& v = mesh.vertices[cell[a]];
            x += fx * fy * v;
            dxi += gx * fy * v;
            deta += fx * gy * v;
        }
        J.setIdentity();
        J.col(0).head<2>() = dxi.head<2>();
        J.col(1).head<2>() = deta.head<2>();
        return;
    }
    x.setZero();
    J.setZero();
    for (int a = 0; a < 8; ++a) {
        double f[3], g[3];
        for (int c = 0; c < 3; ++c) {
            f[c] = kHexVerts[a][c] ? ref(c) : 1.0 - ref(c);
            g[c] = kHexVerts[a][c] ? 1.0 : -1.0;
        }
        const Eigen::Vector3d& v = mesh.vertices[cell[a]];
        x += f[0] * f[1] * f[2] * v;
        J.col(0) += g[0] * f[1] * f[2] * v;
        J.col(1) += f[0] * g[1] * f[2] * v;
        J.col(2) += f[0] * f[1] * g[2] * v;
    }
}

double jacobian_det(const Mesh& mesh, const Eigen::Matrix3d& J) {
    if (mesh.dim == 2) return J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
    return J.determinant();
}

// physical gradients G = gradients_ref * J^{-1} (rows are basis functions)
void physical_gradients(const Mesh& mesh, const Eigen::Matrix3d& J,
                        const Eigen::Matrix<double, Eigen::Dynamic, 3>& ref_grads,
                        Eigen::Matrix<double, Eigen::Dynamic, 3>& phys) {
    if (mesh.dim == 2) {
        Eigen::Matrix2d Jinv = J.topLeftCorner<2, 2>().inverse();
        phys.setZero(ref_grads.rows(), 3);
        phys.leftCols<2>() = ref_grads.leftCols<2>() * Jinv;
    } else {
        phys = ref_grads * J.inverse();
    }
}

// quantized coordinate lookup with tolerance (used by the trace operator)
class NodeLocator {
public:
    explicit NodeLocator(double tol) : tol_(tol) {}
    void insert(double x, double y, int idx) { map_.emplace(key(llround(x / tol_), llround(y / tol_)), Entry{x, y, idx}); }
    int find(double x, double y) const {
        const long long qx = llround(x / tol_), qy = llround(y / tol_);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy) {
                auto range = map_.equal_range(key(qx + dx, qy + dy));
                for (auto it = range.first; it != range.second; ++it) {
                    const Entry& e = it->second;
                    if (std::abs(e.x - x) < 50 * tol_ && std::abs(e.y - y) < 50 * tol_) return e.idx;
                }
            }
        return -1;
    }

private:
    struct Entry {
        double x, y;
        int idx;
    };
    static std::uint64_t key(long long a, long long b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }
    double tol_;
    std::unordered_multimap<std::uint64_t, Entry> map_;
};

}  // namespace

// ---------------------------------------------------------------------------
// FeSpace
// ---------------------------------------------------------------------------

FeSpace::FeSpace(const Mesh& mesh, int order, int value_dim)
    : mesh_(&mesh), order_(order), value_dim_(value_dim) {
    if (order < 1 || order > 3) throw std::invalid_argument("FeSpace: order must be 1..3");
    if (value_dim < 2 || value_dim > 3) throw std::invalid_argument("FeSpace: value dimension must be 2 or 3");

    const int p = order;
    const CellLayout& layout = cell_layout(mesh.cell_type, p);

    // entity enumeration
    std::map<std::pair<int, int>, int> edge_ids;
    std::map<std::array<int, 4>, int> face_ids;
    std::vector<std::array<int, 4>> face_frames;  // canonical corner loops (global vertex ids)

    auto edge_of = [&](int a, int b) -> int {
        auto key = std::minmax(a, b);
        auto [it, inserted] = edge_ids.try_emplace({key.first, key.second}, static_cast<int>(edge_ids.size()));
        return it->second;
    };

    auto canonical_frame = [](const std::array<int, 4>& loop) {
        int m = 0;
        for (int i = 1; i < 4; ++i)
            if (loop[i] < loop[m]) m = i;
        const int next = (m + 1) % 4, prev = (m + 3) % 4;
        const int second = (loop[next] < loop[prev]) ? next : prev;
        const int other = (second == next) ? prev : next;
        return std::array<int, 4>{loop[m], loop[second], loop[(m + 2) % 4], loop[other]};
    };

    auto face_of = [&](const std::array<int, 4>& loop) -> int {
        std::array<int, 4> key = loop;
        std::sort(key.begin(), key.end());
        auto [it, inserted] = face_ids.try_emplace(key, static_cast<int>(face_ids.size()));
        if (inserted) face_frames.push_back(canonical_frame(loop));
        return it->second;
    };

    const int ncells = mesh.n_cells();
    for (int c = 0; c < ncells; ++c) {
        const auto& cell = mesh.cells[c];
        switch (mesh.cell_type) {
            case CellType::Triangle:
                for (auto& e : kTriEdges) edge_of(cell[e[0]], cell[e[1]]);
                break;
            case CellType::Quad:
                for (auto& e : kQuadEdges) edge_of(cell[e[0]], cell[e[1]]);
                break;
            case CellType::Hexahedron:
                for (auto& e : kHexEdges) edge_of(cell[e[0]], cell[e[1]]);
                for (auto& f : kHexFaces)
                    face_of({cell[f.loop[0]], cell[f.loop[1]], cell[f.loop[2]], cell[f.loop[3]]});
                break;
        }
    }

    const int nv = mesh.n_vertices();
    const int ne = static_cast<int>(edge_ids.size());
    const int nf = static_cast<int>(face_ids.size());
    const int per_edge = p - 1;
    const int per_face = (p - 1) * (p - 1);
    int per_cell = 0;
    if (mesh.cell_type == CellType::Triangle) per_cell = (p == 3) ? 1 : 0;
    if (mesh.cell_type == CellType::Quad) per_cell = (p - 1) * (p - 1);
    if (mesh.cell_type == CellType::Hexahedron) per_cell = (p - 1) * (p - 1) * (p - 1);

    const int edge_base = nv;
    const int face_base = edge_base + ne * per_edge;
    const int cell_base =
        face_base + (mesh.cell_type == CellType::Hexahedron ? nf * per_face : 0);
    const int total_nodes = cell_base + ncells * per_cell;

    node_coords_.assign(total_nodes, Eigen::Vector3d::Zero());
    for (int v = 0; v < nv; ++v) node_coords_[v] = mesh.vertices[v];
    for (const auto& [key, eid] : edge_ids) {
        const Eigen::Vector3d& va = mesh.vertices[key.first];
        const Eigen::Vector3d& vb = mesh.vertices[key.second];
        for (int k = 1; k < p; ++k)
            node_coords_[edge_base + eid * per_edge + (k - 1)] =
                va + (static_cast<double>(k) / p) * (vb - va);
    }
    if (mesh.cell_type == CellType::Hexahedron && per_face > 0) {
        for (const auto& [key, fid] : face_ids) {
            const auto& fr = face_frames[fid];
            for (int j = 1; j < p; ++j)
                for (int i = 1; i < p; ++i)
                    node_coords_[face_base + fid * per_face + (j - 1) * (p - 1) + (i - 1)] =
                        bilinear_point(mesh.vertices[fr[0]], mesh.vertices[fr[1]], mesh.vertices[fr[2]],
                                       mesh.vertices[fr[3]], static_cast<double>(i) / p,
                                       static_cast<double>(j) / p);
        }
    }

    // cell-local resolution
    cell_nodes_.resize(ncells);
    const int face_lattice_corner[4][2] = {{0, 0}, {p, 0}, {p, p}, {0, p}};

    for (int c = 0; c < ncells; ++c) {
        const auto& cell = mesh.cells[c];
        auto& nodes = cell_nodes_[c];
        nodes.resize(layout.nbasis);
        int interior_count = 0;

        for (int n = 0; n < layout.nbasis; ++n) {
            const auto& id = layout.idx[n];
            int global = -1;

            if (mesh.cell_type == CellType::Triangle) {
                int nz = (id[0] > 0) + (id[1] > 0) + (id[2] > 0);
                if (nz == 1) {
                    global = cell[id[0] > 0 ? 0 : (id[1] > 0 ? 1 : 2)];
                } else if (nz == 2) {
                    int a = -1, b = -1;
                    for (int v = 0; v < 3; ++v)
                        if (id[v] > 0) (a < 0 ? a : b) = v;
                    // node at fraction id[b]/p from vertex a
                    const int ga = cell[a], gb = cell[b];
                    const int t = id[b];
                    const int eid = edge_of(ga, gb);
                    const int sub = (ga < gb) ? t - 1 : (p - t) - 1;
                    global = edge_base + eid * per_edge + sub;
                } else {
                    // p = 3 centroid
                    global = cell_base + c * per_cell + interior_count++;
                    Eigen::Vector3d x;
                    Eigen::Matrix3d J;
                    geometry_at(mesh, cell, layout.ref_coords[n], x, J);
                    node_coords_[global] = x;
                }
            } else {
                const int dim = (mesh.cell_type == CellType::Hexahedron) ? 3 : 2;
                int fixed = 0;
                for (int a = 0; a < dim; ++a)
                    if (id[a] == 0 || id[a] == p) ++fixed;

                if (fixed == dim) {  // vertex
                    if (dim == 2) {
                        for (int v = 0; v < 4; ++v)
                            if (kQuadVerts[v][0] * p == id[0] && kQuadVerts[v][1] * p == id[1]) global = cell[v];
                    } else {
                        for (int v = 0; v < 8; ++v)
                            if (kHexVerts[v][0] * p == id[0] && kHexVerts[v][1] * p == id[1] &&
                                kHexVerts[v][2] * p == id[2])
                                global = cell[v];
                    }
                } else if (fixed == dim - 1) {  // edge
                    int free_axis = -1;
                    for (int a = 0; a < dim; ++a)
                        if (id[a] != 0 && id[a] != p) free_axis = a;
                    // endpoints: free axis at 0 and p
                    auto vertex_at = [&](int coord_on_free) -> int {
                        if (dim == 2) {
                            int want[2] = {id[0], id[1]};
                            want[free_axis] = coord_on_free;
                            for (int v = 0; v < 4; ++v)
                                if (kQuadVerts[v][0] * p == want[0] && kQuadVerts[v][1] * p == want[1]) return cell[v];
                        } else {
                            int want[3] = {id[0], id[1], id[2]};
                            want[free_axis] = coord_on_free;
                            for (int v = 0; v < 8; ++v)
                                if (kHexVerts[v][0] * p == want[0] && kHexVerts[v][1] * p == want[1] &&
                                    kHexVerts[v][2] * p == want[2])
                                    return cell[v];
                        }
                        return -1;
                    };
                    const int ga = vertex_at(0), gb = vertex_at(p);
                    const int t = id[free_axis];
                    const int eid = edge_of(ga, gb);
                    const int sub = (ga < gb) ? t - 1 : (p - t) - 1;
                    global = edge_base + eid * per_edge + sub;
                } else if (dim == 3 && fixed == 1) {  // hex face
                    const HexFace* face = nullptr;
                    for (const auto& f : kHexFaces)
                        if ((id[f.fixed_axis] == 0 && f.fixed_top == 0) ||
                            (id[f.fixed_axis] == p && f.fixed_top == 1)) {
                            bool is_fixed = (id[f.fixed_axis] == 0 || id[f.fixed_axis] == p);
                            bool others_free = id[f.axes[0]] != 0 && id[f.axes[0]] != p &&
                                               id[f.axes[1]] != 0 && id[f.axes[1]] != p;
                            if (is_fixed && others_free) {
                                face = &f;
                                break;
                            }
                        }
                    const std::array<int, 4> loop = {cell[face->loop[0]], cell[face->loop[1]],
                                                     cell[face->loop[2]], cell[face->loop[3]]};
                    const int fid = face_of(loop);
                    const auto& frame = face_frames[fid];
                    // positions of canonical corners within this cell's loop
                    int pos[4];
                    for (int s = 0; s < 4; ++s)
                        for (int l = 0; l < 4; ++l)
                            if (loop[l] == frame[s]) pos[s] = l;
                    const int alpha = id[face->axes[0]], beta = id[face->axes[1]];
                    const int ox = face_lattice_corner[pos[0]][0], oy = face_lattice_corner[pos[0]][1];
                    const int ux = (face_lattice_corner[pos[1]][0] - ox) / p;
                    const int uy = (face_lattice_corner[pos[1]][1] - oy) / p;
                    const int wx = (face_lattice_corner[pos[3]][0] - ox) / p;
                    const int wy = (face_lattice_corner[pos[3]][1] - oy) / p;
                    const int ca = (alpha - ox) * ux + (beta - oy) * uy;
                    const int cb = (alpha - ox) * wx + (beta - oy) * wy;
                    global = face_base + fid * per_face + (cb - 1) * (p - 1) + (ca - 1);
                } else {  // cell interior
                    global = cell_base + c * per_cell + interior_count++;
                    Eigen::Vector3d x;
                    Eigen::Matrix3d J;
                    geometry_at(mesh, cell, layout.ref_coords[n], x, J);
                    node_coords_[global] = x;
                }
            }
            nodes[n] = global;
        }
    }

    // constrained dofs: nodes on DIRICHLET facets (2D) / BOTTOM facets (3D)
    constrained_.assign(static_cast<std::size_t>(total_nodes) * value_dim_, false);
    const BoundaryTag clamp_tag = (mesh.dim == 2) ? BoundaryTag::DIRICHLET : BoundaryTag::BOTTOM;
    auto mark_node = [&](int node) {
        for (int comp = 0; comp < value_dim_; ++comp) constrained_[dof(node, comp)] = true;
    };
    for (const auto& facet : mesh.boundary_facets) {
        if (facet.tag != clamp_tag) continue;
        for (int v = 0; v < facet.n_vertices; ++v) mark_node(facet.vertices[v]);
        for (int v = 0; v < facet.n_vertices; ++v) {
            const int a = facet.vertices[v];
            const int b = facet.vertices[(v + 1) % facet.n_vertices];
            if (facet.n_vertices == 2 && v == 1) break;  // an edge facet has one edge
            auto key = std::minmax(a, b);
            auto it = edge_ids.find({key.first, key.second});
            if (it == edge_ids.end()) continue;
            for (int k = 0; k < per_edge; ++k) mark_node(edge_base + it->second * per_edge + k);
        }
        if (facet.n_vertices == 4 && per_face > 0) {
            std::array<int, 4> key = {facet.vertices[0], facet.vertices[1], facet.vertices[2],
                                      facet.vertices[3]};
            std::sort(key.begin(), key.end());
            auto it = face_ids.find(key);
            if (it != face_ids.end())
                for (int s = 0; s < per_face; ++s) mark_node(face_base + it->second * per_face + s);
        }
    }
}

int FeSpace::n_constrained() const {
    return static_cast<int>(std::count(constrained_.begin(), constrained_.end(), true));
}

Vec FeSpace::interpolate(const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& f) const {
    Vec out(n_dofs());
    for (int n = 0; n < n_scalar_nodes(); ++n) {
        const Eigen::Vector3d v = f(node_coords_[n]);
        for (int c = 0; c < value_dim_; ++c) out(dof(n, c)) = v(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// point evaluation
// ---------------------------------------------------------------------------

Eigen::Vector3d evaluate(const FeFunction& f, const Eigen::Vector3d& x) {
    const FeSpace& space = *f.space;
    const Mesh& mesh = space.mesh();
    if (!mesh.structured) throw std::invalid_argument("evaluate: mesh lacks structured metadata");
    const StructuredInfo& info = *mesh.structured;

    const int dim = mesh.dim;
    int ijk[3] = {0, 0, 0};
    double frac[3] = {0.0, 0.0, 0.0};
    for (int c = 0; c < dim; ++c) {
        const double h = info.spacing(c);
        double s = (x(c) - info.origin(c)) / h;
        const double tol = 1e-9;
        if (s < -tol || s > info.divisions[c] + tol)
            throw std::invalid_argument("evaluate: point outside the mesh domain");
        s = std::clamp(s, 0.0, static_cast<double>(info.divisions[c]));
        int i = std::min(static_cast<int>(std::floor(s)), info.divisions[c] - 1);
        ijk[c] = i;
        frac[c] = s - i;
    }

    int cell_index;
    Eigen::Vector3d ref(frac[0], frac[1], frac[2]);
    if (mesh.cell_type == CellType::Hexahedron) {
        cell_index = (ijk[2] * info.divisions[1] + ijk[1]) * info.divisions[0] + ijk[0];
    } else if (mesh.cell_type == CellType::Quad) {
        cell_index = ijk[1] * info.divisions[0] + ijk[0];
    } else {
        const int base = 2 * (ijk[1] * info.divisions[0] + ijk[0]);
        bool first;
        if (!info.flipped_diagonal)
            first = frac[1] <= frac[0];  // below the (0,0)-(1,1) diagonal
        else
            first = frac[0] + frac[1] <= 1.0;
        cell_index = first ? base : base + 1;
        // barycentric coordinates w.r.t. the actual triangle
        const auto& cell = mesh.cells[cell_index];
        const Eigen::Vector3d& v0 = mesh.vertices[cell[0]];
        Eigen::Matrix2d A;
        A.col(0) = (mesh.vertices[cell[1]] - v0).head<2>();
        A.col(1) = (mesh.vertices[cell[2]] - v0).head<2>();
        Eigen::Vector2d lam = A.inverse() * (x - v0).head<2>();
        ref = Eigen::Vector3d(lam(0), lam(1), 0.0);
    }

    Eigen::VectorXd N;
    Eigen::Matrix<double, Eigen::Dynamic, 3> dN;
    eval_basis(mesh.cell_type, space.order(), ref, N, dN);
    const auto& nodes = space.cell_nodes(cell_index);

    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int a = 0; a < N.size(); ++a)
        for (int c = 0; c < space.value_dim(); ++c) out(c) += N(a) * f.coeffs(space.dof(nodes[a], c));
    return out;
}

FeFunction interpolate_onto(const FeFunction& source, const FeSpace& target) {
    Vec coeffs(target.n_dofs());
    for (int n = 0; n < target.n_scalar_nodes(); ++n) {
        const Eigen::Vector3d v = evaluate(source, target.node_coord(n));
        for (int c = 0; c < target.value_dim(); ++c) coeffs(target.dof(n, c)) = v(c);
    }
    return FeFunction(target, std::move(coeffs));
}

// ---------------------------------------------------------------------------
// assembly
// ---------------------------------------------------------------------------

namespace {

struct BasisTable {
    QuadratureRule rule;
    std::vector<Eigen::VectorXd> values;                          // per qp
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> grads;  // per qp (reference)
};

BasisTable tabulate(CellType type, int order, const QuadratureRule& rule) {
    BasisTable t;
    t.rule = rule;
    t.values.resize(rule.size());
    t.grads.resize(rule.size());
    for (int q = 0; q < rule.size(); ++q) eval_basis(type, order, rule.points[q], t.values[q], t.grads[q]);
    return t;
}

QuadratureRule stiffness_rule(CellType type, int order) {
    if (type == CellType::Triangle) return triangle_rule(2 * order);
    return tensor_rule(type, order + 1);
}

QuadratureRule load_rule(CellType type, int order) {
    if (type == CellType::Triangle) return triangle_rule(std::min(8, 2 * order + 2));
    return tensor_rule(type, std::min(5, order + 2));
}

Eigen::Matrix2d deformation_gradient_2d(const FeSpace& space, const Vec& u,
                                        const std::vector<int>& nodes,
                                        const Eigen::Matrix<double, Eigen::Dynamic, 3>& G) {
    Eigen::Matrix2d grad_u = Eigen::Matrix2d::Zero();
    for (int a = 0; a < static_cast<int>(nodes.size()); ++a)
        for (int c = 0; c < 2; ++c)
            for (int m = 0; m < 2; ++m) grad_u(c, m) += u(space.dof(nodes[a], c)) * G(a, m);
    return Eigen::Matrix2d::Identity() + grad_u;
}

}  // namespace

SparseMat assemble_bilinear(const FeSpace& space, const BilinearForm& form, BcMode bc) {
    const Mesh& mesh = space.mesh();
    const int d = space.value_dim();
    const int dim = mesh.dim;

    if (form.kind == BilinearForm::Kind::HyperelasticTangent) {
        if (dim != 2 || d != 2)
            throw std::invalid_argument("assemble_bilinear: hyperelastic tangent needs a 2D vector space");
        if (!form.state || form.state->space != &space)
            throw std::invalid_argument("assemble_bilinear: tangent state must live on the assembly space");
    }

    const BasisTable table = tabulate(mesh.cell_type, space.order(), stiffness_rule(mesh.cell_type, space.order()));
    const int nb = static_cast<int>(table.values[0].size());
    const int ld = nb * d;

    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.n_cells()) * ld * ld);
    Eigen::MatrixXd Ke(ld, ld);
    Eigen::Matrix<double, Eigen::Dynamic, 3> G;
    Eigen::Vector3d x;
    Eigen::Matrix3d J;
    const auto& constrained = space.constrained();

    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        const auto& nodes = space.cell_nodes(c);
        Ke.setZero();

        for (int q = 0; q < table.rule.size(); ++q) {
            geometry_at(mesh, cell, table.rule.points[q], x, J);
            const double detJ = jacobian_det(mesh, J);
            const double w = table.rule.weights[q] * std::abs(detJ);
            physical_gradients(mesh, J, table.grads[q], G);
            const Eigen::VectorXd& N = table.values[q];

            switch (form.kind) {
                case BilinearForm::Kind::Mass:
                    for (int a = 0; a < nb; ++a)
                        for (int b = 0; b < nb; ++b) {
                            const double v = w * N(a) * N(b);
                            for (int cc = 0; cc < d; ++cc) Ke(a * d + cc, b * d + cc) += v;
                        }
                    break;
                case BilinearForm::Kind::VectorLaplacian:
                    for (int a = 0; a < nb; ++a)
                        for (int b = 0; b < nb; ++b) {
                            const double v = w * G.row(a).head(dim).dot(G.row(b).head(dim));
                            for (int cc = 0; cc < d; ++cc) Ke(a * d + cc, b * d + cc) += v;
                        }
                    break;
                case BilinearForm::Kind::Elasticity: {
                    const double mu = form.params.mu, lambda = form.params.lambda;
                    for (int a = 0; a < nb; ++a)
                        for (int b = 0; b < nb; ++b) {
                            const double gg = G.row(a).head(dim).dot(G.row(b).head(dim));
                            for (int ca = 0; ca < d; ++ca)
                                for (int cb = 0; cb < d; ++cb) {
                                    double v = mu * G(a, cb) * G(b, ca) + lambda * G(a, ca) * G(b, cb);
                                    if (ca == cb) v += mu * gg;
                                    Ke(a * d + ca, b * d + cb) += w * v;
                                }
                        }
                    break;
                }
                case BilinearForm::Kind::HyperelasticTangent: {
                    const Eigen::Matrix2d F =
                        deformation_gradient_2d(space, form.state->coeffs, nodes, G);
                    const double det = F.determinant();
                    if (det <= kDetGuard)
                        throw std::domain_error("assemble_bilinear: det F <= 0 in tangent state");
                    const Eigen::Matrix2d FinvT = F.inverse().transpose();
                    const double det2 = det * det;
                    const double mu = form.params.mu, lambda = form.params.lambda;
                    const double kappa = mu + 0.5 * lambda - 0.5 * lambda * det2;
                    // Gq(c, a) = (F^-T grad phi_a)_c
                    Eigen::Matrix<double, 2, Eigen::Dynamic> Gq(2, nb);
                    for (int a = 0; a < nb; ++a) Gq.col(a) = FinvT * G.row(a).head<2>().transpose();
                    for (int a = 0; a < nb; ++a)
                        for (int b = 0; b < nb; ++b) {
                            const double gg = G.row(a).head<2>().dot(G.row(b).head<2>());
                            for (int ca = 0; ca < 2; ++ca)
                                for (int cb = 0; cb < 2; ++cb) {
                                    double v = kappa * Gq(cb, a) * Gq(ca, b) +
                                               lambda * det2 * Gq(ca, a) * Gq(cb, b);
                                    if (ca == cb) v += mu * gg;
                                    Ke(a * d + ca, b * d + cb) += w * v;
                                }
                        }
                    break;
                }
            }
        }

        for (int a = 0; a < nb; ++a)
            for (int ca = 0; ca < d; ++ca) {
                const int row = space.dof(nodes[a], ca);
                if (bc == BcMode::Apply && constrained[row]) continue;
                for (int b = 0; b < nb; ++b)
                    for (int cb = 0; cb < d; ++cb) {
                        const int col = space.dof(nodes[b], cb);
                        if (bc == BcMode::Apply && constrained[col]) continue;
                        const double v = Ke(a * d + ca, b * d + cb);
                        if (v != 0.0) triplets.emplace_back(row, col, v);
                    }
            }
    }

    if (bc == BcMode::Apply)
        for (int i = 0; i < space.n_dofs(); ++i)
            if (constrained[i]) triplets.emplace_back(i, i, 1.0);

    SparseMat K(space.n_dofs(), space.n_dofs());
    K.setFromTriplets(triplets.begin(), triplets.end());
    K.makeCompressed();
    return K;
}

Vec assemble_domain_load(const FeSpace& space, const VectorField& f) {
    const Mesh& mesh = space.mesh();
    const int d = space.value_dim();
    const BasisTable table = tabulate(mesh.cell_type, space.order(), load_rule(mesh.cell_type, space.order()));
    Vec b = Vec::Zero(space.n_dofs());
    Eigen::Vector3d x;
    Eigen::Matrix3d J;

    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        const auto& nodes = space.cell_nodes(c);
        for (int q = 0; q < table.rule.size(); ++q) {
            geometry_at(mesh, cell, table.rule.points[q], x, J);
            const double w = table.rule.weights[q] * std::abs(jacobian_det(mesh, J));
            const Eigen::Vector3d fv = f(x);
            const Eigen::VectorXd& N = table.values[q];
            for (int a = 0; a < N.size(); ++a)
                for (int cc = 0; cc < d; ++cc) b(space.dof(nodes[a], cc)) += w * fv(cc) * N(a);
        }
    }
    zero_constrained(space, b);
    return b;
}

Vec assemble_boundary_load(const FeSpace& space, BoundaryTag tag, const VectorField& f) {
    const Mesh& mesh = space.mesh();
    const int d = space.value_dim();
    Vec b = Vec::Zero(space.n_dofs());
    bool found = false;

    const QuadratureRule line = gauss1d(std::min(5, space.order() + 2));
    Eigen::VectorXd N;
    Eigen::Matrix<double, Eigen::Dynamic, 3> dN;

    auto ref_vertex = [&](int local) -> Eigen::Vector3d {
        switch (mesh.cell_type) {
            case CellType::Triangle: {
                const double rx[3] = {0, 1, 0}, ry[3] = {0, 0, 1};
                return {rx[local], ry[local], 0.0};
            }
            case CellType::Quad:
                return {static_cast<double>(kQuadVerts[local][0]), static_cast<double>(kQuadVerts[local][1]), 0.0};
            case CellType::Hexahedron:
                return {static_cast<double>(kHexVerts[local][0]), static_cast<double>(kHexVerts[local][1]),
                        static_cast<double>(kHexVerts[local][2])};
        }
        return Eigen::Vector3d::Zero();
    };

    for (const auto& facet : mesh.boundary_facets) {
        if (facet.tag != tag) continue;
        found = true;
        const auto& cell = mesh.cells[facet.cell];
        const auto& nodes = space.cell_nodes(facet.cell);
        int local[4] = {0, 0, 0, 0};
        for (int v = 0; v < facet.n_vertices; ++v) {
            local[v] = -1;
            for (int l = 0; l < static_cast<int>(cell.size()); ++l)
                if (cell[l] == facet.vertices[v]) local[v] = l;
            if (local[v] < 0) throw std::logic_error("assemble_boundary_load: facet vertex not in owner cell");
        }

        if (facet.n_vertices == 2) {
            const Eigen::Vector3d ra = ref_vertex(local[0]), rb = ref_vertex(local[1]);
            const Eigen::Vector3d& va = mesh.vertices[facet.vertices[0]];
            const Eigen::Vector3d& vb = mesh.vertices[facet.vertices[1]];
            const double ds = (vb - va).norm();
            for (int q = 0; q < line.size(); ++q) {
                const double t = line.points[q].x();
                const Eigen::Vector3d ref = (1 - t) * ra + t * rb;
                const Eigen::Vector3d x = (1 - t) * va + t * vb;
                eval_basis(mesh.cell_type, space.order(), ref, N, dN);
                const Eigen::Vector3d fv = f(x);
                const double w = line.weights[q] * ds;
                for (int a = 0; a < N.size(); ++a)
                    for (int cc = 0; cc < d; ++cc) b(space.dof(nodes[a], cc)) += w * fv(cc) * N(a);
            }
        } else {
            const Eigen::Vector3d R[4] = {ref_vertex(local[0]), ref_vertex(local[1]), ref_vertex(local[2]),
                                          ref_vertex(local[3])};
            const Eigen::Vector3d V[4] = {mesh.vertices[facet.vertices[0]], mesh.vertices[facet.vertices[1]],
                                          mesh.vertices[facet.vertices[2]], mesh.vertices[facet.vertices[3]]};
            for (int qj = 0; qj < line.size(); ++qj)
                for (int qi = 0; qi < line.size(); ++qi) {
                    const double a1 = line.points[qi].x(), b1 = line.points[qj].x();
                    const Eigen::Vector3d ref = bilinear_point(R[0], R[1], R[2], R[3], a1, b1);
                    const Eigen::Vector3d x = bilinear_point(V[0], V[1], V[2], V[3], a1, b1);
                    const Eigen::Vector3d ta = -(1 - b1) * V[0] + (1 - b1) * V[1] + b1 * V[2] - b1 * V[3];
                    const Eigen::Vector3d tb = -(1 - a1) * V[0] - a1 * V[1] + a1 * V[2] + (1 - a1) * V[3];
                    const double dS = ta.cross(tb).norm();
                    eval_basis(mesh.cell_type, space.order(), ref, N, dN);
                    const Eigen::Vector3d fv = f(x);
                    const double w = line.weights[qi] * line.weights[qj] * dS;
                    for (int a = 0; a < N.size(); ++a)
                        for (int cc = 0; cc < d; ++cc) b(space.dof(nodes[a], cc)) += w * fv(cc) * N(a);
                }
        }
    }
    if (!found) throw std::invalid_argument("assemble_boundary_load: tag not present on the mesh");
    zero_constrained(space, b);
    return b;
}

std::optional<Vec> hyperelastic_residual(const FeSpace& space, const Vec& u, const MaterialParams& p) {
    const Mesh& mesh = space.mesh();
    if (mesh.dim != 2 || space.value_dim() != 2)
        throw std::invalid_argument("hyperelastic_residual: needs a 2D vector space");
    const BasisTable table = tabulate(mesh.cell_type, space.order(), stiffness_rule(mesh.cell_type, space.order()));
    Vec r = Vec::Zero(space.n_dofs());
    Eigen::Vector3d x;
    Eigen::Matrix3d J;
    Eigen::Matrix<double, Eigen::Dynamic, 3> G;

    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        const auto& nodes = space.cell_nodes(c);
        for (int q = 0; q < table.rule.size(); ++q) {
            geometry_at(mesh, cell, table.rule.points[q], x, J);
            const double w = table.rule.weights[q] * std::abs(jacobian_det(mesh, J));
            physical_gradients(mesh, J, table.grads[q], G);
            const Eigen::Matrix2d F = deformation_gradient_2d(space, u, nodes, G);
            if (F.determinant() <= kDetGuard) return std::nullopt;
            const Eigen::Matrix2d sigma = piola_stress(F, p);
            for (int a = 0; a < static_cast<int>(nodes.size()); ++a)
                for (int cc = 0; cc < 2; ++cc)
                    r(space.dof(nodes[a], cc)) += w * sigma.row(cc).dot(G.row(a).head<2>());
        }
    }
    zero_constrained(space, r);
    return r;
}

std::optional<double> hyperelastic_energy(const FeSpace& space, const Vec& u, const MaterialParams& p) {
    const Mesh& mesh = space.mesh();
    if (mesh.dim != 2 || space.value_dim() != 2)
        throw std::invalid_argument("hyperelastic_energy: needs a 2D vector space");
    const BasisTable table = tabulate(mesh.cell_type, space.order(), stiffness_rule(mesh.cell_type, space.order()));
    double energy = 0.0;
    Eigen::Vector3d x;
    Eigen::Matrix3d J;
    Eigen::Matrix<double, Eigen::Dynamic, 3> G;

    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        const auto& nodes = space.cell_nodes(c);
        for (int q = 0; q < table.rule.size(); ++q) {
            geometry_at(mesh, cell, table.rule.points[q], x, J);
            const double w = table.rule.weights[q] * std::abs(jacobian_det(mesh, J));
            physical_gradients(mesh, J, table.grads[q], G);
            const Eigen::Matrix2d F = deformation_gradient_2d(space, u, nodes, G);
            if (F.determinant() <= kDetGuard) return std::nullopt;
            energy += w * stored_energy(F, p);
        }
    }
    return energy;
}

void zero_constrained(const FeSpace& space, Vec& b) {
    const auto& constrained = space.constrained();
    for (int i = 0; i < space.n_dofs(); ++i)
        if (constrained[i]) b(i) = 0.0;
}

Vec lift_dirichlet(const FeSpace& space, const SparseMat& raw_matrix, const Vec& b, const Vec& g) {
    const auto& constrained = space.constrained();
    Vec g_masked = Vec::Zero(space.n_dofs());
    for (int i = 0; i < space.n_dofs(); ++i)
        if (constrained[i]) g_masked(i) = g(i);
    Vec rhs = b - raw_matrix * g_masked;
    for (int i = 0; i < space.n_dofs(); ++i)
        if (constrained[i]) rhs(i) = g(i);
    return rhs;
}

// ---------------------------------------------------------------------------
// Jacobi-preconditioned CG
// ---------------------------------------------------------------------------

Vec solve_spd(const SparseMat& K, const Vec& b, double tol, int max_iter) {
    const Eigen::Index n = K.rows();
    if (b.size() != n) throw std::invalid_argument("solve_spd: dimension mismatch");
    if (max_iter < 0) max_iter = static_cast<int>(10 * n);

    const double bnorm = b.norm();
    Vec x = Vec::Zero(n);
    if (bnorm == 0.0) return x;

    Vec dinv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = K.coeff(i, i);
        dinv(i) = (d > 0.0) ? 1.0 / d : 1.0;
    }

    Vec r = b;
    Vec z = dinv.cwiseProduct(r);
    Vec p = z;
    double rz = r.dot(z);

    for (int it = 0; it < max_iter; ++it) {
        if (r.norm() <= tol * bnorm) {
            // verify against the true residual (recurrence drift guard)
            const double true_res = (K * x - b).norm();
            if (true_res <= tol * bnorm) return x;
            r = b - K * x;
            z = dinv.cwiseProduct(r);
            p = z;
            rz = r.dot(z);
        }
        const Vec q = K * p;
        const double pq = p.dot(q);
        if (pq <= 0.0)
            throw SolveError("solve_spd: lost positive definiteness (curvature <= 0)", r.norm() / bnorm,
                             SolveError::Reason::Curvature);
        const double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        z = dinv.cwiseProduct(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (r.norm() <= tol * bnorm && (K * x - b).norm() <= tol * bnorm) return x;
    throw SolveError("solve_spd: iteration budget exhausted", r.norm() / bnorm);
}

namespace {

Vec minres_symmetric(const SparseMat& K, const Vec& b, double tol, int max_iter) {
    const Eigen::Index n = K.rows();
    if (b.size() != n) throw std::invalid_argument("solve_symmetric: dimension mismatch");
    if (max_iter < 0) max_iter = static_cast<int>(10 * n);

    const double bnorm = b.norm();
    Vec x = Vec::Zero(n);
    if (bnorm == 0.0) return x;

    Vec minv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = std::abs(K.coeff(i, i));
        minv(i) = (d > 0.0) ? 1.0 / d : 1.0;
    }

    // preconditioned MINRES (Paige-Saunders recurrences)
    Vec r1 = b;
    Vec y = minv.cwiseProduct(r1);
    double beta1 = r1.dot(y);
    if (beta1 <= 0.0)
        throw SolveError("solve_symmetric: preconditioner breakdown", 1.0, SolveError::Reason::Preconditioner);
    beta1 = std::sqrt(beta1);

    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
    double cs = -1.0, sn = 0.0;
    Vec r2 = r1;
    Vec w = Vec::Zero(n), w2 = Vec::Zero(n);

    for (int it = 1; it <= max_iter; ++it) {
        const double s = 1.0 / beta;
        const Vec v = s * y;
        y = K * v;
        if (it >= 2) y -= (beta / oldb) * r1;
        const double alfa = v.dot(y);
        y -= (alfa / beta) * r2;
        r1 = r2;
        r2 = y;
        y = minv.cwiseProduct(r2);
        oldb = beta;
        beta = r2.dot(y);
        if (beta < 0.0)
            throw SolveError("solve_symmetric: preconditioner breakdown", phibar / beta1,
                             SolveError::Reason::Preconditioner);
        beta = std::sqrt(beta);

        const double oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        double gamma = std::sqrt(gbar * gbar + beta * beta);
        gamma = std::max(gamma, std::numeric_limits<double>::epsilon());
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;

        const Vec w1 = w2;
        w2 = w;
        w = (v - oldeps * w1 - delta * w2) / gamma;
        x += phi * w;

        if (phibar <= 0.5 * tol * beta1 || it == max_iter || it % 50 == 0) {
            const double true_res = (K * x - b).norm();
            if (true_res <= tol * bnorm) return x;
        }
    }
    const double final_res = (K * x - b).norm() / bnorm;
    if (final_res <= tol) return x;
    throw SolveError("solve_symmetric: iteration budget exhausted", final_res);
}

}  // namespace

Vec solve_symmetric(const SparseMat& K, const Vec& b, double tol, int max_iter) {
    try {
        return solve_spd(K, b, tol, max_iter);
    } catch (const SolveError& e) {
        if (e.reason() != SolveError::Reason::Curvature) throw;
        return minres_symmetric(K, b, tol, max_iter);
    }
}

// ---------------------------------------------------------------------------
// trace operator
// ---------------------------------------------------------------------------

TraceOperator::TraceOperator(const FeSpace& volume_space, BoundaryTag tag) : volume_(&volume_space) {
    const Mesh& m3 = volume_space.mesh();
    if (m3.dim != 3) throw std::invalid_argument("TraceOperator: volume space must be 3D");

    std::vector<int> facets;
    for (int fi = 0; fi < static_cast<int>(m3.boundary_facets.size()); ++fi)
        if (m3.boundary_facets[fi].tag == tag) facets.push_back(fi);
    if (facets.empty()) throw std::invalid_argument("TraceOperator: tag not present on the mesh");

    // surface vertices sorted by volume vertex id: keeps edge orientations
    // consistent between the surface and volume dof maps
    std::vector<int> vol_verts;
    for (int fi : facets)
        for (int v = 0; v < m3.boundary_facets[fi].n_vertices; ++v)
            vol_verts.push_back(m3.boundary_facets[fi].vertices[v]);
    std::sort(vol_verts.begin(), vol_verts.end());
    vol_verts.erase(std::unique(vol_verts.begin(), vol_verts.end()), vol_verts.end());
    std::unordered_map<int, int> surf_of;
    for (int s = 0; s < static_cast<int>(vol_verts.size()); ++s) surf_of[vol_verts[s]] = s;

    mesh_ = std::make_unique<Mesh>();
    mesh_->dim = 2;
    mesh_->cell_type = CellType::Quad;
    for (int vv : vol_verts) {
        const Eigen::Vector3d& p = m3.vertices[vv];
        mesh_->vertices.emplace_back(p.x(), p.y(), 0.0);
    }
    for (int fi : facets) {
        const auto& bf = m3.boundary_facets[fi];
        mesh_->cells.push_back({surf_of[bf.vertices[0]], surf_of[bf.vertices[1]], surf_of[bf.vertices[2]],
                                surf_of[bf.vertices[3]]});
    }
    if (tag == BoundaryTag::TOP && m3.structured) {
        StructuredInfo info;
        info.origin = Eigen::Vector3d(m3.structured->origin.x(), m3.structured->origin.y(), 0.0);
        info.spacing = Eigen::Vector3d(m3.structured->spacing.x(), m3.structured->spacing.y(), 0.0);
        info.divisions = {m3.structured->divisions[0], m3.structured->divisions[1], 0};
        mesh_->structured = info;
    }

    space_ = std::make_unique<FeSpace>(*mesh_, volume_space.order(), volume_space.value_dim());

    // match surface nodes to volume nodes by coordinates on the surface plane
    double min_h = std::numeric_limits<double>::max();
    for (const auto& cell : mesh_->cells) {
        const double h = (mesh_->vertices[cell[1]] - mesh_->vertices[cell[0]]).norm();
        min_h = std::min(min_h, h);
    }
    const double quantum = min_h / volume_space.order() * 1e-6;
    const double plane_tol = min_h / volume_space.order() * 0.25;

    double plane_z = 0.0;  // TOP facets sit at x3 = 0; generalize via facet vertices
    if (!facets.empty()) plane_z = m3.vertices[m3.boundary_facets[facets[0]].vertices[0]].z();

    NodeLocator locator(quantum);
    for (int n = 0; n < volume_space.n_scalar_nodes(); ++n) {
        const Eigen::Vector3d& c = volume_space.node_coord(n);
        if (std::abs(c.z() - plane_z) < plane_tol) locator.insert(c.x(), c.y(), n);
    }
    node_map_.resize(space_->n_scalar_nodes());
    for (int n = 0; n < space_->n_scalar_nodes(); ++n) {
        const Eigen::Vector3d& c = space_->node_coord(n);
        const int vol_node = locator.find(c.x(), c.y());
        if (vol_node < 0) throw std::logic_error("TraceOperator: surface node has no volume counterpart");
        node_map_[n] = vol_node;
    }
}

FeFunction TraceOperator::trace(const FeFunction& volume_function) const {
    if (volume_function.space != volume_)
        throw std::invalid_argument("TraceOperator::trace: function not on the volume space");
    Vec out(space_->n_dofs());
    const int d = space_->value_dim();
    for (int n = 0; n < space_->n_scalar_nodes(); ++n)
        for (int c = 0; c < d; ++c) out(space_->dof(n, c)) = volume_function.coeffs(volume_->dof(node_map_[n], c));
    return FeFunction(*space_, std::move(out));
}

Vec TraceOperator::scatter(const Vec& surface_vec) const {
    if (surface_vec.size() != space_->n_dofs())
        throw std::invalid_argument("TraceOperator::scatter: dimension mismatch");
    Vec out = Vec::Zero(volume_->n_dofs());
    const int d = space_->value_dim();
    for (int n = 0; n < space_->n_scalar_nodes(); ++n)
        for (int c = 0; c < d; ++c) out(volume_->dof(node_map_[n], c)) = surface_vec(space_->dof(n, c));
    return out;
}

void write_matrix_market(const SparseMat& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_matrix_market: cannot open " + path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
    char buf[64];
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMat::InnerIterator it(m, k); it; ++it) {
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row() + 1),
                          static_cast<long>(it.col() + 1), it.value());
            out << buf;
        }
}

}  // namespace tfm
