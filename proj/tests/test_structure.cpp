#include <doctest.h>

#include <algorithm>
#include <set>

#include "cofap/io.hpp"
#include "cofap/rng.hpp"
#include "cofap/structure.hpp"

using namespace cofap;

namespace {

// Exhaustive reference for the minimum-image distance: scan a 5x5x5 block of
// periodic images of the raw fractional difference.
double brute_min_image(const Lattice& lat, const Vec3& fi, const Vec3& fj) {
    double best = 1e300;
    for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy)
            for (int dz = -2; dz <= 2; ++dz) {
                Vec3 d = lat.to_cart({fj.x - fi.x + dx, fj.y - fi.y + dy, fj.z - fi.z + dz});
                best = std::min(best, d.norm());
            }
    return best;
}

CrystalStructure random_structure(Rng& rng, size_t n, bool skewed) {
    double a = rng.uniform(8.0, 14.0), b = rng.uniform(8.0, 14.0), c = rng.uniform(8.0, 14.0);
    double al = 90.0, be = 90.0, ga = 90.0;
    if (skewed) {
        al = rng.uniform(75.0, 105.0);
        be = rng.uniform(75.0, 105.0);
        ga = rng.uniform(75.0, 105.0);
    }
    CrystalStructure s;
    s.name = "fixture";
    s.lattice = Lattice::from_parameters(a, b, c, al, be, ga);
    const Element elems[4] = {Element::C, Element::H, Element::O, Element::N};
    for (size_t i = 0; i < n; ++i)
        s.sites.push_back({elems[rng.below(4)], {rng.uniform(), rng.uniform(), rng.uniform()}});
    return s;
}

const char* kMinimalCif = R"(data_minimal
_cell_length_a 10.0
_cell_length_b 10.0
_cell_length_c 10.0
_cell_angle_alpha 90.0
_cell_angle_beta 90.0
_cell_angle_gamma 90.0
loop_
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
C 0.5 0.5 0.5
)";

}  // namespace

TEST_CASE("minimal P1 file parses to one site in a 1000 A^3 cell") {
    auto s = parse_cif(kMinimalCif);
    CHECK(s.name == "minimal");
    REQUIRE(s.sites.size() == 1);
    CHECK(s.sites[0].element == Element::C);
    CHECK(s.lattice.volume() == doctest::Approx(1000.0));
    CHECK(s.sites[0].frac.x == doctest::Approx(0.5));
}

TEST_CASE("negative fractional coordinate wraps into [0,1)") {
    std::string text = kMinimalCif;
    size_t pos = text.find("C 0.5 0.5 0.5");
    text.replace(pos, 13, "C -0.1 0.25 1.75");
    auto s = parse_cif(text);
    CHECK(s.sites[0].frac.x == doctest::Approx(0.9));
    CHECK(s.sites[0].frac.y == doctest::Approx(0.25));
    CHECK(s.sites[0].frac.z == doctest::Approx(0.75));
}

TEST_CASE("parse errors are specific") {
    SUBCASE("missing cell tag is named") {
        std::string text = kMinimalCif;
        size_t pos = text.find("_cell_length_b 10.0\n");
        text.erase(pos, 20);
        CHECK_THROWS_WITH_AS(parse_cif(text), doctest::Contains("_cell_length_b"), ParseError);
    }
    SUBCASE("non-numeric coordinate reports the line") {
        std::string text = kMinimalCif;
        size_t pos = text.find("C 0.5 0.5 0.5");
        text.replace(pos, 13, "C 0.5 oops 0.5");
        CHECK_THROWS_WITH_AS(parse_cif(text), doctest::Contains("line 13"), ParseError);
    }
    SUBCASE("unknown element is kept as other") {
        std::string text = kMinimalCif;
        size_t pos = text.find("C 0.5 0.5 0.5");
        text.replace(pos, 13, "Zn 0.5 0.5 0.5");
        std::vector<std::string> warnings;
        auto s = parse_cif(text, "", &warnings);
        REQUIRE(s.sites.size() == 1);
        CHECK(s.sites[0].element == Element::Other);
        CHECK(warnings.size() == 1);
    }
}

TEST_CASE("symmetry operator loops are ignored with a warning") {
    std::string text = kMinimalCif;
    text +=
        "loop_\n_symmetry_equiv_pos_as_xyz\n'x, y, z'\n'-x, -y, -z'\n";
    std::vector<std::string> warnings;
    auto s = parse_cif(text, "", &warnings);
    CHECK(s.sites.size() == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("P1") != std::string::npos);
}

TEST_CASE("round-trip parse -> serialize -> parse is identity to printed precision") {
    Rng rng(7);
    auto s = random_structure(rng, 100, true);
    auto back = parse_cif(to_cif(s));
    REQUIRE(back.sites.size() == s.sites.size());
    CHECK(back.name == s.name);

    auto p0 = s.lattice.parameters();
    auto p1 = back.lattice.parameters();
    for (int k = 0; k < 6; ++k) CHECK(std::abs(p0[k] - p1[k]) < 1e-9);

    for (size_t i = 0; i < s.sites.size(); ++i) {
        CHECK(back.sites[i].element == s.sites[i].element);
        // compare on the torus (a coordinate may round across the 1.0 seam)
        auto wrap_err = [](double a, double b) {
            double d = std::abs(a - b);
            return std::min(d, 1.0 - d);
        };
        CHECK(wrap_err(back.sites[i].frac.x, s.sites[i].frac.x) < 1e-9);
        CHECK(wrap_err(back.sites[i].frac.y, s.sites[i].frac.y) < 1e-9);
        CHECK(wrap_err(back.sites[i].frac.z, s.sites[i].frac.z) < 1e-9);
    }

    // a second round trip is byte-stable
    CHECK(to_cif(back) == to_cif(s));
}

TEST_CASE("make_supercell") {
    Rng rng(11);
    auto s = random_structure(rng, 20, true);

    SUBCASE("(1,1,1) is the identity") {
        auto r = make_supercell(s, 1, 1, 1);
        CHECK(r.sites.size() == s.sites.size());
        CHECK(to_cif(r) == to_cif(s));
    }
    SUBCASE("(2,2,2) multiplies the site count by 8") {
        CHECK(make_supercell(s, 2, 2, 2).sites.size() == 8 * s.sites.size());
    }
    SUBCASE("density is invariant under (3,1,2)") {
        auto r = make_supercell(s, 3, 1, 2);
        CHECK(std::abs(r.density() - s.density()) < 1e-9);
    }
    SUBCASE("non-positive reps are rejected") {
        CHECK_THROWS_AS(make_supercell(s, 0, 1, 1), ArgumentError);
        CHECK_THROWS_AS(make_supercell(s, 1, -2, 1), ArgumentError);
    }
}

TEST_CASE("periodic distance wraps across the boundary") {
    CrystalStructure s;
    s.name = "ortho";
    s.lattice = Lattice::from_parameters(10, 10, 10, 90, 90, 90);
    s.sites.push_back({Element::C, {0.1, 0.0, 0.0}});
    s.sites.push_back({Element::C, {0.9, 0.0, 0.0}});
    CHECK(periodic_distance(s, 0, 1) == doctest::Approx(2.0));
    CHECK(periodic_distance(s, 0, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(periodic_distance(s, 0, 5), ArgumentError);
}

TEST_CASE("periodic distance equals exhaustive image scan on skewed cells") {
    Rng rng(23);
    auto s = random_structure(rng, 20, true);
    for (size_t i = 0; i < s.sites.size(); ++i)
        for (size_t j = 0; j < s.sites.size(); ++j) {
            double got = periodic_distance(s, i, j);
            double want = brute_min_image(s.lattice, s.sites[i].frac, s.sites[j].frac);
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
            CHECK(got == doctest::Approx(periodic_distance(s, j, i)));
        }
}

TEST_CASE("triangle inequality holds below half the minimum cell width") {
    Rng rng(29);
    auto s = random_structure(rng, 15, true);
    double half = 0.5 * s.lattice.min_perpendicular_width();
    size_t n = s.sites.size();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            for (size_t k = 0; k < n; ++k) {
                double dij = periodic_distance(s, i, j);
                double djk = periodic_distance(s, j, k);
                double dik = periodic_distance(s, i, k);
                if (dij < half && djk < half && dik < half)
                    CHECK(dik <= dij + djk + 1e-9);
            }
}

TEST_CASE("neighbor_pairs basics") {
    CrystalStructure s;
    s.name = "pair";
    s.lattice = Lattice::from_parameters(12, 12, 12, 90, 90, 90);
    s.sites.push_back({Element::C, {0.0, 0.0, 0.0}});
    s.sites.push_back({Element::C, {0.125, 0.0, 0.0}});  // 1.5 A apart

    CHECK(neighbor_pairs(s, 2.0).size() == 1);
    CHECK(neighbor_pairs(s, 1.0).empty());
    CHECK_THROWS_AS(neighbor_pairs(s, 0.0), ArgumentError);
    CHECK_THROWS_AS(neighbor_pairs(s, -1.0), ArgumentError);
}

TEST_CASE("neighbor_pairs matches the quadratic 27-image oracle") {
    Rng rng(31);
    CrystalStructure s;
    s.name = "bulk";
    s.lattice = Lattice::from_parameters(20, 22, 24, 85, 95, 90);
    const Element elems[4] = {Element::C, Element::H, Element::O, Element::N};
    for (int i = 0; i < 200; ++i)
        s.sites.push_back({elems[rng.below(4)], {rng.uniform(), rng.uniform(), rng.uniform()}});

    const double cutoff = 6.0;
    auto got = neighbor_pairs(s, cutoff);

    std::set<std::pair<uint32_t, uint32_t>> want;
    for (uint32_t i = 0; i < 200; ++i)
        for (uint32_t j = i + 1; j < 200; ++j)
            if (brute_min_image(s.lattice, s.sites[i].frac, s.sites[j].frac) <= cutoff)
                want.insert({i, j});

    std::set<std::pair<uint32_t, uint32_t>> got_set;
    for (const auto& p : got) {
        CHECK(p.i < p.j);
        CHECK(p.dist <= cutoff);
        CHECK(p.dist ==
              doctest::Approx(brute_min_image(s.lattice, s.sites[p.i].frac, s.sites[p.j].frac)));
        got_set.insert({p.i, p.j});
    }
    CHECK(got_set == want);
}

TEST_CASE("neighbor_pairs is stable under site permutation") {
    Rng rng(37);
    auto s = random_structure(rng, 40, true);
    auto base = neighbor_pairs(s, 5.0);

    std::vector<uint32_t> perm(s.sites.size());
    for (uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);

    CrystalStructure t = s;
    for (size_t i = 0; i < perm.size(); ++i) t.sites[perm[i]] = s.sites[i];

    auto mapped = neighbor_pairs(t, 5.0);
    std::set<std::pair<uint32_t, uint32_t>> a, b;
    for (const auto& p : base) a.insert({perm[p.i] < perm[p.j] ? perm[p.i] : perm[p.j],
                                         perm[p.i] < perm[p.j] ? perm[p.j] : perm[p.i]});
    for (const auto& p : mapped) b.insert({p.i, p.j});
    CHECK(a == b);
}

TEST_CASE("supercell preserves the short-distance multiset") {
    Rng rng(41);
    auto s = random_structure(rng, 24, true);
    double cutoff = 0.45 * s.lattice.min_perpendicular_width();

    auto collect = [&](const CrystalStructure& c) {
        std::vector<double> d;
        for (const auto& p : neighbor_pairs(c, cutoff)) d.push_back(p.dist);
        std::sort(d.begin(), d.end());
        return d;
    };
    auto d1 = collect(s);
    auto d8 = collect(make_supercell(s, 2, 2, 2));
    REQUIRE(d8.size() == 8 * d1.size());
    for (size_t i = 0; i < d1.size(); ++i)
        for (int r = 0; r < 8; ++r)
            CHECK(d8[8 * i + r] == doctest::Approx(d1[i]).epsilon(1e-10));
}

TEST_CASE("covalent bond inference uses per-pair radii") {
    CrystalStructure s;
    s.name = "bonds";
    s.lattice = Lattice::from_parameters(15, 15, 15, 90, 90, 90);
    s.sites.push_back({Element::C, {0.0, 0.0, 0.0}});
    s.sites.push_back({Element::C, {0.1, 0.0, 0.0}});   // C-C 1.5 < 0.76+0.76+0.40
    s.sites.push_back({Element::H, {0.0, 0.1, 0.0}});   // C-H 1.5 > 0.76+0.31+0.40
    auto bonds = infer_bonds(s);
    REQUIRE(bonds.size() == 1);
    CHECK(bonds[0].i == 0);
    CHECK(bonds[0].j == 1);
}
