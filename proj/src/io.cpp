#include "tfm/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tfm {

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_field_csv(const FeFunction& f, const std::string& path,
                     const std::vector<std::string>& component_names) {
    const FeSpace& space = *f.space;
    if (static_cast<int>(component_names.size()) != space.value_dim())
        throw std::invalid_argument("write_field_csv: component name count mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_field_csv: cannot open " + path);

    const int dim = space.mesh().dim;
    out << (dim == 2 ? "x,y" : "x,y,z");
    for (const auto& name : component_names) out << ',' << name;
    out << '\n';
    for (int n = 0; n < space.n_scalar_nodes(); ++n) {
        const Eigen::Vector3d& c = space.node_coord(n);
        out << format_full(c.x()) << ',' << format_full(c.y());
        if (dim == 3) out << ',' << format_full(c.z());
        for (int comp = 0; comp < space.value_dim(); ++comp)
            out << ',' << format_full(f.coeffs(space.dof(n, comp)));
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    std::istringstream in(line);
    while (std::getline(in, current, ',')) fields.push_back(current);
    return fields;
}

// Cluster sorted coordinate samples into grid lines.
std::vector<double> cluster(std::vector<double> v, double tol) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v)
        if (out.empty() || x - out.back() > tol) out.push_back(x);
    return out;
}

int locate(const std::vector<double>& grid, double x, double tol) {
    auto it = std::lower_bound(grid.begin(), grid.end(), x - tol);
    if (it == grid.end() || std::abs(*it - x) > tol) return -1;
    return static_cast<int>(it - grid.begin());
}

// interval index and local coordinate for interpolation, clamped to the grid
std::pair<int, double> bracket(const std::vector<double>& grid, double x) {
    const int n = static_cast<int>(grid.size());
    if (n == 1) return {0, 0.0};
    const double span = grid.back() - grid.front();
    const double tol = 1e-9 * std::max(span, 1.0);
    if (x < grid.front() - tol || x > grid.back() + tol)
        throw std::invalid_argument("grid field: query point outside the data grid");
    int i = static_cast<int>(std::upper_bound(grid.begin(), grid.end(), x) - grid.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double h = grid[i + 1] - grid[i];
    return {i, std::clamp((x - grid[i]) / h, 0.0, 1.0)};
}

struct CsvTable {
    std::vector<std::array<double, 8>> rows;
    int ncols = 0;
};

CsvTable read_numeric_csv(const std::string& path, int expected_cols) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_csv_line(line);
        if (lineno == 1) {
            // header row
            if (static_cast<int>(fields.size()) != expected_cols)
                throw std::runtime_error(path + ":1: expected " + std::to_string(expected_cols) +
                                         " columns in header");
            table.ncols = expected_cols;
            continue;
        }
        if (static_cast<int>(fields.size()) != expected_cols)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong column count");
        std::array<double, 8> row{};
        for (int c = 0; c < expected_cols; ++c) {
            try {
                row[c] = std::stod(fields[c]);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number: " + fields[c]);
            }
        }
        table.rows.push_back(row);
    }
    if (table.rows.empty()) throw std::runtime_error(path + ": no data rows");
    return table;
}

}  // namespace

GridField2 GridField2::read_csv(const std::string& path) {
    // peek at the header to determine the component count
    int ncols = 0;
    {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("read_csv: cannot open " + path);
        std::string header;
        std::getline(in, header);
        ncols = static_cast<int>(split_csv_line(header).size());
    }
    if (ncols != 4 && ncols != 5)
        throw std::runtime_error(path + ": expected header x,y plus 2 or 3 components");
    const CsvTable table = read_numeric_csv(path, ncols);

    GridField2 g;
    g.ncomp_ = ncols - 2;
    std::vector<double> xs, ys;
    for (const auto& r : table.rows) {
        xs.push_back(r[0]);
        ys.push_back(r[1]);
    }
    const double spanx = *std::max_element(xs.begin(), xs.end()) - *std::min_element(xs.begin(), xs.end());
    const double spany = *std::max_element(ys.begin(), ys.end()) - *std::min_element(ys.begin(), ys.end());
    const double tol = 1e-9 * std::max({spanx, spany, 1.0});
    g.xs_ = cluster(xs, tol);
    g.ys_ = cluster(ys, tol);
    if (g.xs_.size() * g.ys_.size() != table.rows.size())
        throw std::runtime_error(path + ": rows do not form a complete regular grid");
    g.values_.assign(table.rows.size(), Eigen::Vector3d::Zero());
    for (const auto& r : table.rows) {
        const int i = locate(g.xs_, r[0], tol);
        const int j = locate(g.ys_, r[1], tol);
        if (i < 0 || j < 0) throw std::runtime_error(path + ": point off the inferred grid");
        g.values_[static_cast<std::size_t>(j) * g.xs_.size() + i] =
            Eigen::Vector3d(r[2], r[3], g.ncomp_ == 3 ? r[4] : 0.0);
    }
    return g;
}

Eigen::Vector3d GridField2::value(const Eigen::Vector2d& point) const {
    const auto [i, s] = bracket(xs_, point.x());
    const auto [j, t] = bracket(ys_, point.y());
    auto at = [&](int ii, int jj) { return values_[static_cast<std::size_t>(jj) * xs_.size() + ii]; };
    const int i1 = std::min<int>(i + 1, nx() - 1), j1 = std::min<int>(j + 1, ny() - 1);
    return (1 - s) * (1 - t) * at(i, j) + s * (1 - t) * at(i1, j) + s * t * at(i1, j1) +
           (1 - s) * t * at(i, j1);
}

bool GridField2::matches_nodes(const FeSpace& space, double rel_tol) const {
    if (static_cast<std::size_t>(space.n_scalar_nodes()) != values_.size()) return false;
    std::vector<double> nx, ny;
    for (int n = 0; n < space.n_scalar_nodes(); ++n) {
        nx.push_back(space.node_coord(n).x());
        ny.push_back(space.node_coord(n).y());
    }
    const double span = std::max(xs_.back() - xs_.front(), ys_.back() - ys_.front());
    const double tol = rel_tol * std::max(span, 1.0);
    const auto cx = cluster(nx, tol), cy = cluster(ny, tol);
    if (cx.size() != xs_.size() || cy.size() != ys_.size()) return false;
    for (std::size_t i = 0; i < cx.size(); ++i)
        if (std::abs(cx[i] - xs_[i]) > tol) return false;
    for (std::size_t j = 0; j < cy.size(); ++j)
        if (std::abs(cy[j] - ys_[j]) > tol) return false;
    return true;
}

FeFunction GridField2::interpolate(const FeSpace& space) const {
    if (space.value_dim() > ncomp_ + 1 && space.value_dim() != ncomp_)
        throw std::invalid_argument("GridField2::interpolate: component count mismatch");
    Vec coeffs(space.n_dofs());
    for (int n = 0; n < space.n_scalar_nodes(); ++n) {
        const Eigen::Vector3d v = value(space.node_coord(n).head<2>());
        for (int c = 0; c < space.value_dim(); ++c) coeffs(space.dof(n, c)) = v(c);
    }
    return FeFunction(space, std::move(coeffs));
}

GridField3 GridField3::read_csv(const std::string& path) {
    const CsvTable table = read_numeric_csv(path, 6);
    GridField3 g;
    std::vector<double> xs, ys, zs;
    for (const auto& r : table.rows) {
        xs.push_back(r[0]);
        ys.push_back(r[1]);
        zs.push_back(r[2]);
    }
    const double span = std::max({*std::max_element(xs.begin(), xs.end()) - *std::min_element(xs.begin(), xs.end()),
                                  *std::max_element(ys.begin(), ys.end()) - *std::min_element(ys.begin(), ys.end()),
                                  *std::max_element(zs.begin(), zs.end()) - *std::min_element(zs.begin(), zs.end()),
                                  1.0});
    const double tol = 1e-9 * span;
    g.xs_ = cluster(xs, tol);
    g.ys_ = cluster(ys, tol);
    g.zs_ = cluster(zs, tol);
    if (g.xs_.size() * g.ys_.size() * g.zs_.size() != table.rows.size())
        throw std::runtime_error(path + ": rows do not form a complete regular grid");
    g.values_.assign(table.rows.size(), Eigen::Vector3d::Zero());
    for (const auto& r : table.rows) {
        const int i = locate(g.xs_, r[0], tol);
        const int j = locate(g.ys_, r[1], tol);
        const int k = locate(g.zs_, r[2], tol);
        if (i < 0 || j < 0 || k < 0) throw std::runtime_error(path + ": point off the inferred grid");
        g.values_[(static_cast<std::size_t>(k) * g.ys_.size() + j) * g.xs_.size() + i] =
            Eigen::Vector3d(r[3], r[4], r[5]);
    }
    return g;
}

Eigen::Vector3d GridField3::value(const Eigen::Vector3d& point) const {
    const auto [i, s] = bracket(xs_, point.x());
    const auto [j, t] = bracket(ys_, point.y());
    const auto [k, u] = bracket(zs_, point.z());
    auto at = [&](int ii, int jj, int kk) {
        return values_[(static_cast<std::size_t>(kk) * ys_.size() + jj) * xs_.size() + ii];
    };
    const int nx = static_cast<int>(xs_.size()), ny = static_cast<int>(ys_.size()),
              nz = static_cast<int>(zs_.size());
    const int i1 = std::min(i + 1, nx - 1), j1 = std::min(j + 1, ny - 1), k1 = std::min(k + 1, nz - 1);
    Eigen::Vector3d lo = (1 - s) * (1 - t) * at(i, j, k) + s * (1 - t) * at(i1, j, k) +
                         s * t * at(i1, j1, k) + (1 - s) * t * at(i, j1, k);
    Eigen::Vector3d hi = (1 - s) * (1 - t) * at(i, j, k1) + s * (1 - t) * at(i1, j, k1) +
                         s * t * at(i1, j1, k1) + (1 - s) * t * at(i, j1, k1);
    return (1 - u) * lo + u * hi;
}

bool GridField3::matches_nodes(const FeSpace& space, double rel_tol) const {
    if (static_cast<std::size_t>(space.n_scalar_nodes()) != values_.size()) return false;
    std::vector<double> nx, ny, nz;
    for (int n = 0; n < space.n_scalar_nodes(); ++n) {
        nx.push_back(space.node_coord(n).x());
        ny.push_back(space.node_coord(n).y());
        nz.push_back(space.node_coord(n).z());
    }
    const double span = std::max(
        {xs_.back() - xs_.front(), ys_.back() - ys_.front(), zs_.back() - zs_.front(), 1.0});
    const double tol = rel_tol * span;
    const auto cx = cluster(nx, tol), cy = cluster(ny, tol), cz = cluster(nz, tol);
    if (cx.size() != xs_.size() || cy.size() != ys_.size() || cz.size() != zs_.size()) return false;
    for (std::size_t i = 0; i < cx.size(); ++i)
        if (std::abs(cx[i] - xs_[i]) > tol) return false;
    for (std::size_t j = 0; j < cy.size(); ++j)
        if (std::abs(cy[j] - ys_[j]) > tol) return false;
    for (std::size_t k = 0; k < cz.size(); ++k)
        if (std::abs(cz[k] - zs_[k]) > tol) return false;
    return true;
}

FeFunction GridField3::interpolate(const FeSpace& space) const {
    if (space.value_dim() != 3) throw std::invalid_argument("GridField3::interpolate: needs a 3-vector space");
    Vec coeffs(space.n_dofs());
    for (int n = 0; n < space.n_scalar_nodes(); ++n) {
        const Eigen::Vector3d v = value(space.node_coord(n));
        for (int c = 0; c < 3; ++c) coeffs(space.dof(n, c)) = v(c);
    }
    return FeFunction(space, std::move(coeffs));
}

void write_report_kv(const SolveReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_kv: cannot open " + path);
    out << "outer_iterations = " << report.outer_iterations << '\n';
    out << "stop_reason = " << to_string(report.stop_reason) << '\n';
    out << "breakdown = " << (report.breakdown ? "true" : "false") << '\n';
    out << "wall_time_seconds = " << format_full(report.wall_time_seconds) << '\n';
    if (report.final_relative_error)
        out << "final_relative_error_percent = " << format_full(*report.final_relative_error) << '\n';
    if (!report.residual_history.empty())
        out << "final_residual = " << format_full(report.residual_history.back()) << '\n';
    if (!report.inner_iterations_per_outer.empty()) {
        out << "inner_iterations_per_outer =";
        for (int n : report.inner_iterations_per_outer) out << ' ' << n;
        out << '\n';
    }
}

void write_report_csv(const SolveReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
    out << "iteration,residual,error_percent\n";
    for (std::size_t k = 0; k < report.residual_history.size(); ++k) {
        out << k << ',' << format_full(report.residual_history[k]) << ',';
        if (k < report.error_history.size()) out << format_full(report.error_history[k]);
        out << '\n';
    }
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
    for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
}

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hash_file: cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = hash_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

}  // namespace tfm
