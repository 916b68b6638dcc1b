#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/material.hpp"
#include "tfm/mesh.hpp"

namespace tfm {

using Vec = Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;  // CSR layout
using Triplet = Eigen::Triplet<double>;

/// Quadrature rule on the reference cell ([0,1]-tensor cube or the unit
/// reference triangle).
struct QuadratureRule {
    std::vector<Eigen::Vector3d> points;
    std::vector<double> weights;
    int size() const { return static_cast<int>(points.size()); }
};

/// Symmetric Gauss rule on the reference triangle, exact for polynomials of
/// the given total degree (supported up to degree 8).
QuadratureRule triangle_rule(int degree);
/// Gauss-Legendre on [0,1].
QuadratureRule gauss1d(int npoints);
/// Tensor Gauss rule for quads/hexes with npoints per direction.
QuadratureRule tensor_rule(CellType type, int npoints_per_dim);

/// Fixed local node ordering shared by dof-map construction and basis
/// evaluation. idx holds barycentric multi-indices (triangles) or lattice
/// indices (tensor cells).
struct CellLayout {
    int nbasis = 0;
    std::vector<std::array<int, 3>> idx;
    std::vector<Eigen::Vector3d> ref_coords;
};
const CellLayout& cell_layout(CellType type, int order);

/// Lagrange basis values and reference gradients at a reference point,
/// ordered per cell_layout.
void eval_basis(CellType type, int order, const Eigen::Vector3d& ref, Eigen::VectorXd& values,
                Eigen::Matrix<double, Eigen::Dynamic, 3>& gradients);

/// Vector-valued Lagrange space of order 1..3. Scalar nodes are numbered
/// vertices first, then edge nodes, face nodes (3D) and cell-interior nodes;
/// dofs are interleaved (dof = node * value_dim + component). Nodes on
/// DIRICHLET facets (2D) or BOTTOM facets (3D) are constrained.
class FeSpace {
public:
    FeSpace(const Mesh& mesh, int order, int value_dim);

    const Mesh& mesh() const { return *mesh_; }
    int order() const { return order_; }
    int value_dim() const { return value_dim_; }
    int n_scalar_nodes() const { return static_cast<int>(node_coords_.size()); }
    int n_dofs() const { return n_scalar_nodes() * value_dim_; }
    int dof(int node, int comp) const { return node * value_dim_ + comp; }

    const std::vector<int>& cell_nodes(int cell) const { return cell_nodes_[cell]; }
    const Eigen::Vector3d& node_coord(int node) const { return node_coords_[node]; }
    const std::vector<Eigen::Vector3d>& node_coords() const { return node_coords_; }
    const std::vector<bool>& constrained() const { return constrained_; }
    bool dof_constrained(int dof_index) const { return constrained_[dof_index]; }
    int n_constrained() const;

    /// Nodal interpolation of a callable returning value_dim components.
    Vec interpolate(const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& f) const;

private:
    const Mesh* mesh_;
    int order_;
    int value_dim_;
    std::vector<Eigen::Vector3d> node_coords_;
    std::vector<std::vector<int>> cell_nodes_;
    std::vector<bool> constrained_;
};

/// Coefficient vector bound to a space.
struct FeFunction {
    const FeSpace* space = nullptr;
    Vec coeffs;

    FeFunction() = default;
    FeFunction(const FeSpace& s, Vec c) : space(&s), coeffs(std::move(c)) {
        if (coeffs.size() != s.n_dofs()) throw std::invalid_argument("FeFunction: coefficient size mismatch");
    }
    static FeFunction zero(const FeSpace& s) { return FeFunction(s, Vec::Zero(s.n_dofs())); }

    Eigen::VectorXd value_at_node(int node) const {
        return coeffs.segment(static_cast<Eigen::Index>(node) * space->value_dim(), space->value_dim());
    }
};

/// Point evaluation on structured meshes (O(1) cell lookup). Points may lie
/// on the closure of the domain; slightly outside points (within tol) are
/// clamped, anything beyond throws.
Eigen::Vector3d evaluate(const FeFunction& f, const Eigen::Vector3d& x);

/// Nodal interpolation of a function living on one (structured) mesh onto
/// another space over the same geometry.
FeFunction interpolate_onto(const FeFunction& source, const FeSpace& target);

enum class BcMode { Apply, Raw };

/// The supported pointwise bilinear integrands.
struct BilinearForm {
    enum class Kind { Elasticity, Mass, VectorLaplacian, HyperelasticTangent };
    Kind kind = Kind::Mass;
    MaterialParams params;
    const FeFunction* state = nullptr;  // frozen displacement for the tangent

    static BilinearForm elasticity(const MaterialParams& p) { return {Kind::Elasticity, p, nullptr}; }
    static BilinearForm mass() { return {Kind::Mass, {}, nullptr}; }
    static BilinearForm vector_laplacian() { return {Kind::VectorLaplacian, {}, nullptr}; }
    static BilinearForm hyperelastic_tangent(const MaterialParams& p, const FeFunction& state) {
        return {Kind::HyperelasticTangent, p, &state};
    }
};

/// Galerkin matrix of the form, integrated with Gauss rules exact for the
/// polynomial degree of the integrand. With BcMode::Apply, rows and columns
/// of constrained dofs are replaced by identity (keeps symmetry for CG).
SparseMat assemble_bilinear(const FeSpace& space, const BilinearForm& form, BcMode bc = BcMode::Apply);

using VectorField = std::function<Eigen::Vector3d(const Eigen::Vector3d&)>;

/// Domain load (f, v)_Omega. Entries at constrained dofs are zeroed.
Vec assemble_domain_load(const FeSpace& space, const VectorField& f);
/// Boundary load (f, v) over all facets carrying the tag.
Vec assemble_boundary_load(const FeSpace& space, BoundaryTag tag, const VectorField& f);

/// Weak residual of the hyperelastic operator, r_i = (piola(F), grad phi_i),
/// zeroed at constrained dofs. Returns nothing when det F drops below the
/// guard at a quadrature point.
std::optional<Vec> hyperelastic_residual(const FeSpace& space, const Vec& u, const MaterialParams& p);
/// Discrete stored energy integral W(F) dx (no load term).
std::optional<double> hyperelastic_energy(const FeSpace& space, const Vec& u, const MaterialParams& p);

/// Zero the constrained entries of a load/rhs vector in place.
void zero_constrained(const FeSpace& space, Vec& b);

/// Inhomogeneous Dirichlet lifting: given the raw (unconstrained) matrix and
/// boundary values g, returns the rhs for the identity-constrained system so
/// that the solution matches g at constrained dofs.
Vec lift_dirichlet(const FeSpace& space, const SparseMat& raw_matrix, const Vec& b, const Vec& g);

class SolveError : public std::runtime_error {
public:
    enum class Reason { Budget, Curvature, Preconditioner };
    SolveError(const std::string& msg, double residual, Reason reason = Reason::Budget)
        : std::runtime_error(msg), residual_(residual), reason_(reason) {}
    double residual() const { return residual_; }
    Reason reason() const { return reason_; }

private:
    double residual_;
    Reason reason_;
};

/// Jacobi-preconditioned conjugate gradients. The returned x satisfies
/// |Kx - b| <= tol * |b| (Euclidean norms, verified on the true residual).
/// max_iter < 0 selects 10 * n. Throws SolveError on budget exhaustion.
Vec solve_spd(const SparseMat& K, const Vec& b, double tol = 1e-10, int max_iter = -1);

/// Solver for symmetric systems that may lose definiteness (hyperelastic
/// tangents past the admissibility region): conjugate gradients first, with
/// a Jacobi-preconditioned MINRES fallback on a curvature breakdown. Same
/// contract as solve_spd otherwise.
Vec solve_symmetric(const SparseMat& K, const Vec& b, double tol = 1e-10, int max_iter = -1);

/// Restriction of volume fields to a tagged boundary surface. Owns the
/// induced 2D facet mesh and the matching surface space (same order and
/// value dimension as the volume space). Surface nodes coincide with volume
/// nodes on the surface; trace() is the nodal restriction.
class TraceOperator {
public:
    TraceOperator(const FeSpace& volume_space, BoundaryTag tag);

    const Mesh& surface_mesh() const { return *mesh_; }
    const FeSpace& surface_space() const { return *space_; }
    const FeSpace& volume_space() const { return *volume_; }

    FeFunction trace(const FeFunction& volume_function) const;
    /// Scatter a surface-dof vector into a volume-sized vector (zeros elsewhere).
    Vec scatter(const Vec& surface_vec) const;
    const std::vector<int>& volume_node_of_surface_node() const { return node_map_; }

private:
    const FeSpace* volume_;
    std::unique_ptr<Mesh> mesh_;
    std::unique_ptr<FeSpace> space_;
    std::vector<int> node_map_;
};

/// MatrixMarket coordinate export for debugging.
void write_matrix_market(const SparseMat& m, const std::string& path);

inline double weighted_inner(const SparseMat& gram, const Vec& a, const Vec& b) { return a.dot(gram * b); }
inline double weighted_norm(const SparseMat& gram, const Vec& a) {
    return std::sqrt(std::max(0.0, weighted_inner(gram, a, a)));
}

}  // namespace tfm
