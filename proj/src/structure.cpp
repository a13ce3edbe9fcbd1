#include "cofap/structure.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "cofap/io.hpp"

namespace cofap {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAmuPerCm3 = 1.66053906660;  // amu/Å^3 -> g/cm^3

double wrap01(double f) {
    double w = f - std::floor(f);
    return (w >= 1.0) ? 0.0 : w;  // guard against -1e-18 -> 1.0
}

// CIF numbers may carry an uncertainty suffix, e.g. "10.123(4)".
bool parse_cif_number(const std::string& token, double& out) {
    std::string t = token;
    size_t paren = t.find('(');
    if (paren != std::string::npos) t = t.substr(0, paren);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

Element element_from_symbol(std::string_view symbol) {
    std::string alpha;
    for (char c : symbol) {
        if (std::isalpha(static_cast<unsigned char>(c))) alpha.push_back(c);
        else if (!alpha.empty()) break;
    }
    if (alpha.empty()) return Element::Other;
    alpha[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(alpha[0])));
    for (size_t i = 1; i < alpha.size(); ++i)
        alpha[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(alpha[i])));
    if (alpha == "C") return Element::C;
    if (alpha == "H") return Element::H;
    if (alpha == "O") return Element::O;
    if (alpha == "N") return Element::N;
    return Element::Other;
}

const char* element_symbol(Element e) {
    switch (e) {
        case Element::C: return "C";
        case Element::H: return "H";
        case Element::O: return "O";
        case Element::N: return "N";
        default: return "X";
    }
}

double covalent_radius(Element e) {
    switch (e) {
        case Element::C: return 0.76;
        case Element::H: return 0.31;
        case Element::O: return 0.66;
        case Element::N: return 0.71;
        default: return 0.77;
    }
}

double atomic_mass(Element e) {
    switch (e) {
        case Element::C: return 12.011;
        case Element::H: return 1.008;
        case Element::O: return 15.999;
        case Element::N: return 14.007;
        default: return 0.0;
    }
}

Lattice Lattice::from_parameters(double a, double b, double c,
                                 double alpha, double beta, double gamma) {
    double ca = std::cos(alpha * kPi / 180.0), cb = std::cos(beta * kPi / 180.0);
    double cg = std::cos(gamma * kPi / 180.0), sg = std::sin(gamma * kPi / 180.0);
    double v = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
    if (a <= 0 || b <= 0 || c <= 0 || v <= 0)
        throw ArgumentError("degenerate cell parameters");
    Lattice lat;
    lat.cell[0] = {a, 0.0, 0.0};
    lat.cell[1] = {b * cg, b * sg, 0.0};
    lat.cell[2] = {c * cb, c * (ca - cb * cg) / sg, c * std::sqrt(v) / sg};
    return lat;
}

std::array<double, 6> Lattice::parameters() const {
    const Vec3 &a = cell[0], &b = cell[1], &c = cell[2];
    double la = a.norm(), lb = b.norm(), lc = c.norm();
    auto deg = [](double cosv) { return std::acos(std::clamp(cosv, -1.0, 1.0)) * 180.0 / kPi; };
    return {la, lb, lc, deg(b.dot(c) / (lb * lc)), deg(a.dot(c) / (la * lc)),
            deg(a.dot(b) / (la * lb))};
}

double Lattice::volume() const {
    return cell[0].dot(cell[1].cross(cell[2]));
}

Vec3 Lattice::to_cart(const Vec3& f) const {
    return cell[0] * f.x + cell[1] * f.y + cell[2] * f.z;
}

Vec3 Lattice::to_frac(const Vec3& r) const {
    // Cramer solve of r = f.x*a + f.y*b + f.z*c.
    double vol = volume();
    Vec3 bc = cell[1].cross(cell[2]);
    Vec3 ca = cell[2].cross(cell[0]);
    Vec3 ab = cell[0].cross(cell[1]);
    return {r.dot(bc) / vol, r.dot(ca) / vol, r.dot(ab) / vol};
}

bool Lattice::orthogonal(double tol) const {
    auto p = parameters();
    return std::abs(p[3] - 90.0) <= tol && std::abs(p[4] - 90.0) <= tol &&
           std::abs(p[5] - 90.0) <= tol;
}

double Lattice::min_perpendicular_width() const {
    double vol = std::abs(volume());
    double w = vol / cell[1].cross(cell[2]).norm();
    w = std::min(w, vol / cell[2].cross(cell[0]).norm());
    w = std::min(w, vol / cell[0].cross(cell[1]).norm());
    return w;
}

double CrystalStructure::density() const {
    double mass = 0.0;
    for (const auto& s : sites) mass += atomic_mass(s.element);
    return mass * kAmuPerCm3 / lattice.volume();
}

CrystalStructure parse_cif(std::string_view text, std::string_view fallback_name,
                           std::vector<std::string>* warnings) {
    CrystalStructure out;
    out.name = std::string(fallback_name);

    std::map<std::string, double> cell_tags;
    bool saw_symmetry_loop = false;

    // Atom-site loop state.
    std::vector<std::string> loop_cols;
    bool in_loop_header = false, in_loop_body = false;
    int col_sym = -1, col_label = -1, col_fx = -1, col_fy = -1, col_fz = -1;

    auto begin_body = [&]() {
        in_loop_header = false;
        in_loop_body = true;
        col_sym = col_label = col_fx = col_fy = col_fz = -1;
        for (size_t c = 0; c < loop_cols.size(); ++c) {
            const std::string& t = loop_cols[c];
            if (t == "_atom_site_type_symbol") col_sym = static_cast<int>(c);
            else if (t == "_atom_site_label") col_label = static_cast<int>(c);
            else if (t == "_atom_site_fract_x") col_fx = static_cast<int>(c);
            else if (t == "_atom_site_fract_y") col_fy = static_cast<int>(c);
            else if (t == "_atom_site_fract_z") col_fz = static_cast<int>(c);
        }
    };

    std::istringstream stream{std::string(text)};
    std::string raw;
    int lineno = 0;
    while (std::getline(stream, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        if (line.rfind("data_", 0) == 0) {
            if (out.name.empty()) out.name = trim(line.substr(5));
            in_loop_header = in_loop_body = false;
            continue;
        }
        if (line == "loop_") {
            loop_cols.clear();
            in_loop_header = true;
            in_loop_body = false;
            continue;
        }
        if (line[0] == '_') {
            if (in_loop_header) {
                loop_cols.push_back(split_ws(line)[0]);
                if (loop_cols.back().rfind("_symmetry_equiv", 0) == 0 ||
                    loop_cols.back().rfind("_space_group_symop", 0) == 0)
                    saw_symmetry_loop = true;
                continue;
            }
            in_loop_body = false;
            auto toks = split_ws(line);
            if (toks.size() >= 2 && toks[0].rfind("_cell_", 0) == 0) {
                double v;
                if (parse_cif_number(toks[1], v)) cell_tags[toks[0]] = v;
            }
            continue;
        }

        if (in_loop_header) begin_body();
        if (!in_loop_body) continue;

        if (col_fx < 0 || col_fy < 0 || col_fz < 0) continue;  // not the atom loop
        auto toks = split_ws(line);
        if (static_cast<int>(toks.size()) < static_cast<int>(loop_cols.size())) continue;

        AtomSite site;
        double f[3];
        const int cols[3] = {col_fx, col_fy, col_fz};
        for (int k = 0; k < 3; ++k) {
            if (!parse_cif_number(toks[cols[k]], f[k]))
                throw ParseError("non-numeric fractional coordinate '" + toks[cols[k]] +
                                 "' at line " + std::to_string(lineno));
        }
        site.frac = {wrap01(f[0]), wrap01(f[1]), wrap01(f[2])};
        std::string sym;
        if (col_sym >= 0) sym = toks[col_sym];
        else if (col_label >= 0) sym = toks[col_label];
        site.element = element_from_symbol(sym);
        if (site.element == Element::Other && warnings)
            warnings->push_back("unknown element symbol '" + sym + "' at line " +
                                std::to_string(lineno) + "; kept as other");
        out.sites.push_back(site);
    }

    static const char* kRequired[] = {"_cell_length_a", "_cell_length_b", "_cell_length_c",
                                      "_cell_angle_alpha", "_cell_angle_beta",
                                      "_cell_angle_gamma"};
    for (const char* tag : kRequired) {
        if (!cell_tags.count(tag)) throw ParseError(std::string("missing cell tag ") + tag);
    }
    out.lattice = Lattice::from_parameters(
        cell_tags["_cell_length_a"], cell_tags["_cell_length_b"], cell_tags["_cell_length_c"],
        cell_tags["_cell_angle_alpha"], cell_tags["_cell_angle_beta"],
        cell_tags["_cell_angle_gamma"]);

    if (saw_symmetry_loop && warnings)
        warnings->push_back("symmetry operators present; treated as P1 and ignored");
    if (out.sites.empty()) throw ParseError("no atom sites found");
    if (out.name.empty()) out.name = "unnamed";
    return out;
}

CrystalStructure parse_cif_file(const std::string& path, std::vector<std::string>* warnings) {
    namespace fsp = std::filesystem;
    std::string stem = fsp::path(path).stem().string();
    return parse_cif(read_text_file(path), stem, warnings);
}

std::string to_cif(const CrystalStructure& s) {
    auto p = s.lattice.parameters();
    std::ostringstream out;
    out << "data_" << s.name << "\n";
    out << "_symmetry_space_group_name_H-M   'P 1'\n";
    out << "_cell_length_a    " << format_fixed(p[0], 9) << "\n";
    out << "_cell_length_b    " << format_fixed(p[1], 9) << "\n";
    out << "_cell_length_c    " << format_fixed(p[2], 9) << "\n";
    out << "_cell_angle_alpha " << format_fixed(p[3], 9) << "\n";
    out << "_cell_angle_beta  " << format_fixed(p[4], 9) << "\n";
    out << "_cell_angle_gamma " << format_fixed(p[5], 9) << "\n";
    out << "loop_\n";
    out << "_atom_site_type_symbol\n";
    out << "_atom_site_fract_x\n";
    out << "_atom_site_fract_y\n";
    out << "_atom_site_fract_z\n";
    for (const auto& site : s.sites) {
        // Round to the printed precision first so a coordinate like
        // 0.9999999999 wraps to zero instead of printing as 1.000000000.
        double f[3] = {site.frac.x, site.frac.y, site.frac.z};
        out << element_symbol(site.element);
        for (double v : f) {
            double r = std::round(v * 1e9) / 1e9;
            if (r >= 1.0) r -= 1.0;
            out << " " << format_fixed(r, 9);
        }
        out << "\n";
    }
    return out.str();
}

CrystalStructure make_supercell(const CrystalStructure& s, int na, int nb, int nc) {
    if (na < 1 || nb < 1 || nc < 1)
        throw ArgumentError("supercell repetitions must be >= 1");
    CrystalStructure out;
    out.name = s.name;
    out.lattice.cell[0] = s.lattice.cell[0] * static_cast<double>(na);
    out.lattice.cell[1] = s.lattice.cell[1] * static_cast<double>(nb);
    out.lattice.cell[2] = s.lattice.cell[2] * static_cast<double>(nc);
    out.sites.reserve(s.sites.size() * static_cast<size_t>(na) * nb * nc);
    for (int oa = 0; oa < na; ++oa)
        for (int ob = 0; ob < nb; ++ob)
            for (int oc = 0; oc < nc; ++oc)
                for (const auto& site : s.sites) {
                    AtomSite rep = site;
                    rep.frac = {(site.frac.x + oa) / na, (site.frac.y + ob) / nb,
                                (site.frac.z + oc) / nc};
                    out.sites.push_back(rep);
                }
    return out;
}

Vec3 min_image_delta(const Lattice& lat, const Vec3& dfrac) {
    auto wrap_half = [](double f) {
        double w = f - std::floor(f);
        return (w >= 0.5) ? w - 1.0 : w;  // [-0.5, 0.5)
    };
    Vec3 base = {wrap_half(dfrac.x), wrap_half(dfrac.y), wrap_half(dfrac.z)};
    if (lat.orthogonal()) return lat.to_cart(base);
    // Triclinic: the per-axis wrap is not guaranteed minimal; scan neighbors.
    Vec3 best = lat.to_cart(base);
    double best2 = best.dot(best);
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
                Vec3 cand = lat.to_cart({base.x + dx, base.y + dy, base.z + dz});
                double n2 = cand.dot(cand);
                if (n2 < best2) {
                    best2 = n2;
                    best = cand;
                }
            }
    return best;
}

double periodic_distance(const CrystalStructure& s, size_t i, size_t j) {
    if (i >= s.sites.size() || j >= s.sites.size())
        throw ArgumentError("site index out of range");
    return min_image_delta(s.lattice, s.sites[j].frac - s.sites[i].frac).norm();
}

namespace {

std::vector<NeighborPair> neighbor_pairs_brute(const CrystalStructure& s, double cutoff) {
    std::vector<NeighborPair> out;
    const size_t n = s.sites.size();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double d = periodic_distance(s, i, j);
            if (d <= cutoff)
                out.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(j), d});
        }
    return out;
}

}  // namespace

std::vector<NeighborPair> neighbor_pairs(const CrystalStructure& s, double cutoff) {
    if (cutoff <= 0) throw ArgumentError("cutoff must be positive");
    const size_t n = s.sites.size();

    // Bin counts per axis such that any pair within cutoff lands in adjacent
    // bins; below 3 bins the wrap-around stencil degenerates, so go brute.
    double vol = std::abs(s.lattice.volume());
    int nb[3];
    for (int k = 0; k < 3; ++k) {
        const Vec3& u = s.lattice.cell[(k + 1) % 3];
        const Vec3& v = s.lattice.cell[(k + 2) % 3];
        double width = vol / u.cross(v).norm();
        nb[k] = std::max(1, static_cast<int>(std::floor(width / cutoff)));
    }
    if (nb[0] < 3 || nb[1] < 3 || nb[2] < 3 || n < 64) return neighbor_pairs_brute(s, cutoff);

    auto bin_of = [&](const Vec3& f) {
        int bx = std::min(static_cast<int>(f.x * nb[0]), nb[0] - 1);
        int by = std::min(static_cast<int>(f.y * nb[1]), nb[1] - 1);
        int bz = std::min(static_cast<int>(f.z * nb[2]), nb[2] - 1);
        return (bx * nb[1] + by) * nb[2] + bz;
    };
    std::vector<std::vector<uint32_t>> bins(static_cast<size_t>(nb[0]) * nb[1] * nb[2]);
    for (size_t i = 0; i < n; ++i) bins[bin_of(s.sites[i].frac)].push_back(static_cast<uint32_t>(i));

    std::vector<NeighborPair> out;
    for (size_t i = 0; i < n; ++i) {
        const Vec3& f = s.sites[i].frac;
        int bx = std::min(static_cast<int>(f.x * nb[0]), nb[0] - 1);
        int by = std::min(static_cast<int>(f.y * nb[1]), nb[1] - 1);
        int bz = std::min(static_cast<int>(f.z * nb[2]), nb[2] - 1);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    int cx = (bx + dx + nb[0]) % nb[0];
                    int cy = (by + dy + nb[1]) % nb[1];
                    int cz = (bz + dz + nb[2]) % nb[2];
                    for (uint32_t j : bins[(static_cast<size_t>(cx) * nb[1] + cy) * nb[2] + cz]) {
                        if (j <= i) continue;
                        double d = periodic_distance(s, i, j);
                        if (d <= cutoff)
                            out.push_back({static_cast<uint32_t>(i), j, d});
                    }
                }
    }
    std::sort(out.begin(), out.end(), [](const NeighborPair& a, const NeighborPair& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    return out;
}

std::vector<NeighborPair> infer_bonds(const CrystalStructure& s, double tolerance) {
    double rmax = 0.0;
    for (const auto& site : s.sites) rmax = std::max(rmax, covalent_radius(site.element));
    auto candidates = neighbor_pairs(s, 2.0 * rmax + tolerance);
    std::vector<NeighborPair> bonds;
    for (const auto& p : candidates) {
        double limit = covalent_radius(s.sites[p.i].element) +
                       covalent_radius(s.sites[p.j].element) + tolerance;
        if (p.dist <= limit && p.dist > 1e-6) bonds.push_back(p);
    }
    return bonds;
}

}  // namespace cofap
