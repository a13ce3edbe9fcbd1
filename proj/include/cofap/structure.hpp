// Periodic crystal model: CIF parsing, canonical serialization, supercells,
// minimum-image geometry, and cutoff neighbor search.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cofap {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

// The dataset convention is C/H/O/N frameworks; anything else is tolerated as
// Other but excluded from the atom-channel encoding and motif screening.
enum class Element : uint8_t { C, H, O, N, Other };

Element element_from_symbol(std::string_view symbol);
const char* element_symbol(Element e);
double covalent_radius(Element e);  // Å
double atomic_mass(Element e);      // amu

struct Lattice {
    std::array<Vec3, 3> cell;  // rows a, b, c in Å

    // Cell parameters with angles in degrees; builds the conventional
    // right-handed matrix (a along x, b in the xy plane).
    static Lattice from_parameters(double a, double b, double c,
                                   double alpha, double beta, double gamma);
    std::array<double, 6> parameters() const;  // a, b, c, alpha, beta, gamma (deg)

    double volume() const;
    Vec3 to_cart(const Vec3& frac) const;
    Vec3 to_frac(const Vec3& cart) const;
    bool orthogonal(double tol = 1e-6) const;
    // Smallest distance between opposite cell faces; bounds the cutoff for
    // which the minimum image is unique.
    double min_perpendicular_width() const;
};

struct AtomSite {
    Element element = Element::Other;
    Vec3 frac;  // wrapped into [0, 1)
};

struct CrystalStructure {
    std::string name;
    Lattice lattice;
    std::vector<AtomSite> sites;

    Vec3 cart(size_t i) const { return lattice.to_cart(sites[i].frac); }
    double density() const;  // g/cm^3
};

// Parses CIF text (P1 convention; symmetry operators are ignored with a
// warning). fallback_name is used when the text has no data_ block header.
CrystalStructure parse_cif(std::string_view text, std::string_view fallback_name = "",
                           std::vector<std::string>* warnings = nullptr);
CrystalStructure parse_cif_file(const std::string& path,
                                std::vector<std::string>* warnings = nullptr);

// Canonical form: fixed tag order, 9-decimal cell parameters and fractional
// coordinates. parse(to_cif(s)) reproduces s to within the printed precision.
std::string to_cif(const CrystalStructure& s);

CrystalStructure make_supercell(const CrystalStructure& s, int na, int nb, int nc);

// Cartesian displacement of the nearest periodic image for a fractional
// difference. Orthogonal cells wrap per axis; triclinic cells scan the 27
// adjacent images.
Vec3 min_image_delta(const Lattice& lat, const Vec3& dfrac);

double periodic_distance(const CrystalStructure& s, size_t i, size_t j);

struct NeighborPair {
    uint32_t i = 0, j = 0;  // i < j
    double dist = 0.0;
};

// All unordered pairs with minimum-image distance <= cutoff, each reported
// once with i < j, ordered by (i, j). Uses cell-list binning when the cell is
// large enough, otherwise falls back to the quadratic scan.
std::vector<NeighborPair> neighbor_pairs(const CrystalStructure& s, double cutoff);

// Covalent bonds by the radius rule d <= r_i + r_j + tolerance.
std::vector<NeighborPair> infer_bonds(const CrystalStructure& s, double tolerance = 0.40);

}  // namespace cofap
