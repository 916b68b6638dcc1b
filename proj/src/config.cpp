#include "tfm/config.hpp"

#include "tfm/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tfm {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct IniEntry {
    std::string value;
    int line = 0;
};

class Ini {
public:
    Ini(const std::string& path) : path_(path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line = line.substr(0, comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail(lineno, "malformed section header");
                section = lower(trim(line.substr(1, line.size() - 2)));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(lineno, "expected key = value");
            const std::string key = lower(trim(line.substr(0, eq)));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) fail(lineno, "empty key");
            entries_[section + "." + key] = {value, lineno};
        }
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw std::runtime_error(path_ + ":" + std::to_string(line) + ": " + msg);
    }

    bool has(const std::string& key) const { return entries_.count(lower(key)) > 0; }

    std::optional<std::string> get(const std::string& key) {
        auto it = entries_.find(lower(key));
        if (it == entries_.end()) return std::nullopt;
        consumed_.insert(it->first);
        return it->second.value;
    }

    int line_of(const std::string& key) const {
        auto it = entries_.find(lower(key));
        return it == entries_.end() ? 0 : it->second.line;
    }

    double get_double(const std::string& key, double fallback) {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stod(*v);
        } catch (const std::exception&) {
            fail(line_of(key), "not a number: " + *v);
        }
    }

    int get_int(const std::string& key, int fallback) {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stoi(*v);
        } catch (const std::exception&) {
            fail(line_of(key), "not an integer: " + *v);
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto v = get(key);
        if (!v) return fallback;
        const std::string s = lower(*v);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        fail(line_of(key), "not a boolean: " + *v);
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto v = get(key);
        return v ? *v : fallback;
    }

    void reject_unconsumed() const {
        for (const auto& [key, entry] : entries_)
            if (!consumed_.count(key)) fail(entry.line, "unknown configuration key '" + key + "'");
    }

private:
    std::string path_;
    std::map<std::string, IniEntry> entries_;
    std::set<std::string> consumed_;
};

}  // namespace

std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::Linear25D: return "linear_25d";
        case ModelKind::Linear2D: return "linear_2d";
        case ModelKind::Nonlinear2D: return "nonlinear_2d";
    }
    return "?";
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    Ini ini(path);
    ExperimentConfig cfg;

    const std::string model = lower(ini.get_string("model.type", "linear_2d"));
    if (model == "linear_25d")
        cfg.model = ModelKind::Linear25D;
    else if (model == "linear_2d")
        cfg.model = ModelKind::Linear2D;
    else if (model == "nonlinear_2d")
        cfg.model = ModelKind::Nonlinear2D;
    else
        ini.fail(ini.line_of("model.type"), "unknown model type '" + model + "'");

    cfg.half_width = ini.get_double("domain.half_width", cfg.is_2d() ? 3.0 : 2.0);
    cfg.depth = ini.get_double("domain.depth", 1.0);
    cfg.nx = ini.get_int("domain.nx", cfg.is_2d() ? 32 : 16);
    cfg.ny = ini.get_int("domain.ny", cfg.is_2d() ? 32 : 16);
    cfg.nz = ini.get_int("domain.nz", 6);
    cfg.order = ini.get_int("domain.order", cfg.is_2d() ? 2 : 1);
    cfg.flip_diagonal = ini.get_bool("domain.flip_diagonal", false);

    if (ini.has("reconstruction.nx")) cfg.recon_nx = ini.get_int("reconstruction.nx", 0);
    if (ini.has("reconstruction.ny")) cfg.recon_ny = ini.get_int("reconstruction.ny", 0);
    if (ini.has("reconstruction.nz")) cfg.recon_nz = ini.get_int("reconstruction.nz", 0);
    if (ini.has("reconstruction.order")) cfg.recon_order = ini.get_int("reconstruction.order", 0);
    if (ini.has("reconstruction.flip_diagonal"))
        cfg.recon_flip = ini.get_bool("reconstruction.flip_diagonal", false);

    if (ini.has("material.mu") || ini.has("material.lambda")) {
        cfg.material_from_lame = true;
        cfg.mu = ini.get_double("material.mu", 0.0);
        cfg.lambda = ini.get_double("material.lambda", 0.0);
        if (ini.has("material.young") || ini.has("material.poisson"))
            ini.fail(ini.line_of("material.mu"), "give either (young, poisson) or (mu, lambda), not both");
    } else {
        cfg.young = ini.get_double("material.young", 10000.0);
        cfg.poisson = ini.get_double("material.poisson", 0.45);
    }

    const std::string force = lower(ini.get_string("force.type", "ring"));
    if (force == "ring")
        cfg.force = ForceKind::Ring;
    else if (force == "spots")
        cfg.force = ForceKind::Spots;
    else if (force == "from_csv")
        cfg.force = ForceKind::FromCsv;
    else
        ini.fail(ini.line_of("force.type"), "unknown force type '" + force + "'");
    cfg.magnitude = ini.get_double("force.magnitude", cfg.force == ForceKind::Spots ? 10.0 : 1000.0);
    cfg.force_csv = ini.get_string("force.path", "");
    if (cfg.force == ForceKind::FromCsv && cfg.force_csv.empty())
        ini.fail(ini.line_of("force.type"), "force type from_csv requires force.path");
    if (cfg.force != ForceKind::FromCsv && !cfg.force_csv.empty())
        ini.fail(ini.line_of("force.path"), "force.path is only valid with force.type = from_csv");

    cfg.thickness = ini.get_double("experiment.thickness", 1.0);
    cfg.truth_csv = ini.get_string("experiment.truth", "");

    const bool has_level = ini.has("noise.level_percent");
    const bool has_delta = ini.has("noise.delta");
    const bool has_margin = ini.has("noise.margin");
    if (has_level + has_delta + has_margin > 1)
        ini.fail(ini.line_of(has_level ? "noise.level_percent" : "noise.delta"),
                 "give exactly one noise specification");
    if (has_delta) {
        cfg.noise = NoiseKind::Delta;
        cfg.noise_delta = ini.get_double("noise.delta", 0.0);
    } else if (has_margin) {
        cfg.noise = NoiseKind::FromMargin;
        std::istringstream in(*ini.get("noise.margin"));
        if (!(in >> cfg.margin_box(0) >> cfg.margin_box(1) >> cfg.margin_box(2) >> cfg.margin_box(3)))
            ini.fail(ini.line_of("noise.margin"), "margin needs four numbers: x0 y0 x1 y1");
    } else {
        cfg.noise = NoiseKind::LevelPercent;
        cfg.noise_level = ini.get_double("noise.level_percent", 5.0);
    }
    cfg.seed = static_cast<std::uint64_t>(ini.get_int("noise.seed", 1));

    cfg.tau = ini.get_double("inversion.tau", 1.2);
    cfg.rho = ini.get_double("inversion.rho", 0.7);
    cfg.max_outer = ini.get_int("inversion.max_outer", 50);
    cfg.max_inner = ini.get_int("inversion.max_inner", 300);
    cfg.newton_tol = ini.get_double("inversion.newton_tol", 1e-10);
    cfg.homotopy_steps = ini.get_int("inversion.homotopy_steps", 1);
    const std::string space = lower(ini.get_string("inversion.param_space", "l2"));
    if (space == "l2")
        cfg.param_space = ParamSpace::L2;
    else if (space == "h10")
        cfg.param_space = ParamSpace::H10;
    else
        ini.fail(ini.line_of("inversion.param_space"), "param_space must be L2 or H10");

    if (auto v = ini.get("compare.magnitudes")) {
        std::istringstream in(*v);
        double x;
        while (in >> x) cfg.compare_magnitudes.push_back(x);
    }
    cfg.two_stage = ini.get_bool("compare.two_stage", false);
    cfg.two_stage_magnitude = ini.get_double("compare.two_stage_magnitude", 2e5);

    cfg.output_dir = ini.get_string("output.dir", "out");
    cfg.config_path = path;
    cfg.config_hash = hash_file(path);

    ini.reject_unconsumed();
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (half_width <= 0 || depth <= 0) throw std::runtime_error("config: domain extents must be positive");
    if (nx < 1 || ny < 1 || nz < 1) throw std::runtime_error("config: mesh divisions must be >= 1");
    if (order < 1 || order > 3) throw std::runtime_error("config: order must be 1..3");
    if (tau <= 1.0) throw std::runtime_error("config: inversion.tau must be > 1");
    if (rho <= 0.0 || rho >= 1.0) throw std::runtime_error("config: inversion.rho must lie in (0, 1)");
    if (thickness <= 0.0) throw std::runtime_error("config: experiment.thickness must be positive");
    if (noise == NoiseKind::LevelPercent && noise_level < 0)
        throw std::runtime_error("config: noise.level_percent must be >= 0");
    if (noise == NoiseKind::Delta && noise_delta < 0)
        throw std::runtime_error("config: noise.delta must be >= 0");
    if (noise == NoiseKind::FromMargin &&
        (margin_box(2) <= margin_box(0) || margin_box(3) <= margin_box(1)))
        throw std::runtime_error("config: noise.margin box is empty");
    material();  // throws on invalid parameters
}

MaterialParams ExperimentConfig::material() const {
    if (material_from_lame) return MaterialParams::from_lame(mu, lambda);
    return MaterialParams::from_young_poisson(young, poisson);
}

}  // namespace tfm
