#include <doctest.h>

#include <cmath>

#include "cofap/io.hpp"
#include "cofap/rng.hpp"
#include "cofap/supragraph.hpp"

using namespace cofap;

namespace {

constexpr double kCC = 1.39;   // aromatic bond
constexpr double kCH = 1.09;   // ring C-H

// Orthonormal frame for placing planar fixtures at arbitrary orientation.
struct Frame {
    Vec3 origin{0, 0, 0};
    Vec3 e1{1, 0, 0}, e2{0, 1, 0}, e3{0, 0, 1};
    Vec3 at(double x, double y, double z = 0.0) const {
        return origin + e1 * x + e2 * y + e3 * z;
    }
};

CrystalStructure big_box(const std::string& name) {
    CrystalStructure s;
    s.name = name;
    s.lattice = Lattice::from_parameters(30, 30, 30, 90, 90, 90);
    return s;
}

int add_atom(CrystalStructure& s, Element e, Vec3 cart) {
    Vec3 f = s.lattice.to_frac(cart);
    f.x -= std::floor(f.x);
    f.y -= std::floor(f.y);
    f.z -= std::floor(f.z);
    s.sites.push_back({e, f});
    return static_cast<int>(s.sites.size()) - 1;
}

// Regular hexagon of carbons (side kCC) centered at (cx, cy) in the frame
// plane; hydrogens added radially except at the listed vertices. Returns the
// carbon indices in vertex order (vertex k at angle 60k degrees).
std::vector<int> add_phenyl(CrystalStructure& s, const Frame& f, double cx, double cy,
                            const std::set<int>& skip_h = {}) {
    std::vector<int> carbons;
    for (int k = 0; k < 6; ++k) {
        double ang = k * M_PI / 3.0;
        carbons.push_back(
            add_atom(s, Element::C, f.at(cx + kCC * std::cos(ang), cy + kCC * std::sin(ang))));
    }
    for (int k = 0; k < 6; ++k) {
        if (skip_h.count(k)) continue;
        double ang = k * M_PI / 3.0;
        add_atom(s, Element::H,
                 f.at(cx + (kCC + kCH) * std::cos(ang), cy + (kCC + kCH) * std::sin(ang)));
    }
    return carbons;
}

// Ph-CH=N-Ph along the frame x axis. Ring A's vertex 0 carries the imine
// carbon; ring B's vertex 3 carries the nitrogen.
CrystalStructure imine_fixture(const std::string& name, const Frame& f = {}) {
    auto s = big_box(name);
    add_phenyl(s, f, 6.0, 15.0, {0});                   // attach at x = 7.39
    int c = add_atom(s, Element::C, f.at(8.86, 15.0));  // 1.47 from the ring
    add_atom(s, Element::H, f.at(8.86, 16.09));
    add_atom(s, Element::N, f.at(10.14, 15.0));          // C=N 1.28
    add_phenyl(s, f, 12.94, 15.0, {3});                  // N-C(ring) 1.41
    (void)c;
    return s;
}

// Ph-C(=O)-N(H)-Ph: the C-N bond satisfies both the amide and the imine
// windows, so this fixture exercises the amide-over-imine priority.
CrystalStructure amide_fixture(const std::string& name) {
    Frame f;
    auto s = big_box(name);
    add_phenyl(s, f, 6.0, 15.0, {0});
    add_atom(s, Element::C, f.at(8.88, 15.0));   // 1.49 from the ring
    add_atom(s, Element::O, f.at(8.88, 16.23));  // C=O 1.23
    add_atom(s, Element::N, f.at(10.21, 15.0));  // C-N 1.33
    add_atom(s, Element::H, f.at(10.21, 13.99));
    add_phenyl(s, f, 13.01, 15.0, {3});          // N-C(ring) 1.41
    return s;
}

// Ph-CH2-CH2-Ph: a single C-C bridge bond between two distinct ring systems.
CrystalStructure cc_fixture(const std::string& name) {
    Frame f;
    auto s = big_box(name);
    add_phenyl(s, f, 6.0, 15.0, {0});
    int c1 = add_atom(s, Element::C, f.at(8.90, 15.0));   // 1.51 from ring A
    int c2 = add_atom(s, Element::C, f.at(10.40, 15.0));  // C-C 1.50
    add_atom(s, Element::H, f.at(8.90, 16.09));
    add_atom(s, Element::H, f.at(8.90, 13.91));
    add_atom(s, Element::H, f.at(10.40, 16.09));
    add_atom(s, Element::H, f.at(10.40, 13.91));
    add_phenyl(s, f, 13.30, 15.0, {3});  // ring B vertex at 11.91
    (void)c1;
    (void)c2;
    return s;
}

}  // namespace

TEST_CASE("ideal benzene: all six carbons are aromatic") {
    auto s = big_box("benzene");
    add_phenyl(s, Frame{}, 15.0, 15.0);
    auto atoms = detect_aromatic_rings(s);
    REQUIRE(atoms.size() == 6);
    for (int k = 0; k < 6; ++k) CHECK(atoms.count(k) == 1);

    auto rings = aromatic_rings(s);
    REQUIRE(rings.size() == 1);
    CHECK(rings[0].size() == 6);
}

TEST_CASE("saturated six-ring (1.54 Angstrom bonds) is not aromatic") {
    auto s = big_box("cyclohexane");
    Frame f;
    double side = 1.54;  // outside the aromatic window
    for (int k = 0; k < 6; ++k) {
        double ang = k * M_PI / 3.0;
        add_atom(s, Element::C, f.at(15 + side * std::cos(ang), 15 + side * std::sin(ang)));
    }
    CHECK(detect_aromatic_rings(s).empty());
}

TEST_CASE("puckered ring with in-window bonds fails the coplanarity criterion") {
    auto s = big_box("puckered");
    Frame f;
    double h = 0.2;                                  // alternating vertex lift
    double r = std::sqrt(kCC * kCC - 4 * h * h);     // keeps the side at kCC
    for (int k = 0; k < 6; ++k) {
        double ang = k * M_PI / 3.0;
        double z = (k % 2 == 0) ? h : -h;
        add_atom(s, Element::C, f.at(15 + r * std::cos(ang), 15 + r * std::sin(ang), z));
        add_atom(s, Element::H,
                 f.at(15 + (r + kCH) * std::cos(ang), 15 + (r + kCH) * std::sin(ang), z));
    }
    CHECK(detect_aromatic_rings(s).empty());
}

TEST_CASE("flat ring whose carbons have four neighbors fails the neighbor criterion") {
    auto s = big_box("overbonded");
    Frame f;
    for (int k = 0; k < 6; ++k) {
        double ang = k * M_PI / 3.0;
        add_atom(s, Element::C, f.at(15 + kCC * std::cos(ang), 15 + kCC * std::sin(ang)));
        add_atom(s, Element::H,
                 f.at(15 + (kCC + kCH) * std::cos(ang), 15 + (kCC + kCH) * std::sin(ang)));
        add_atom(s, Element::H, f.at(15 + kCC * std::cos(ang), 15 + kCC * std::sin(ang), kCH));
    }
    CHECK(detect_aromatic_rings(s).empty());
}

TEST_CASE("fused two-ring system: ten atoms, two rings, each atom once") {
    auto s = big_box("fused");
    Frame f;
    double cx = 12.0, cy = 15.0, dx = kCC * std::sqrt(3.0);
    // Pointy-top hexagons sharing an edge; vertex angles offset by 30 degrees.
    auto vertex = [&](double centerx, int k) {
        double ang = M_PI / 6.0 + k * M_PI / 3.0;
        return f.at(centerx + kCC * std::cos(ang), cy + kCC * std::sin(ang));
    };
    for (int k = 0; k < 6; ++k) add_atom(s, Element::C, vertex(cx, k));
    for (int k : {4, 5, 0, 1}) {
        // ring B's remaining vertices (its k=2,3 coincide with ring A's k=0,5)
        double ang = M_PI / 6.0 + k * M_PI / 3.0;
        add_atom(s, Element::C, f.at(cx + dx + kCC * std::cos(ang), cy + kCC * std::sin(ang)));
    }
    // Hydrogens on the eight CH carbons (all except the shared bridgeheads).
    for (int k = 1; k <= 4; ++k) {
        double ang = M_PI / 6.0 + k * M_PI / 3.0;
        add_atom(s, Element::H,
                 f.at(cx + (kCC + kCH) * std::cos(ang), cy + (kCC + kCH) * std::sin(ang)));
    }
    for (int k : {4, 5, 0, 1}) {
        double ang = M_PI / 6.0 + k * M_PI / 3.0;
        add_atom(s, Element::H,
                 f.at(cx + dx + (kCC + kCH) * std::cos(ang), cy + (kCC + kCH) * std::sin(ang)));
    }

    auto rings = aromatic_rings(s);
    REQUIRE(rings.size() == 2);
    auto atoms = detect_aromatic_rings(s);
    CHECK(atoms.size() == 10);
    for (int a = 0; a < 10; ++a) CHECK(atoms.count(a) == 1);
}

TEST_CASE("benzene wrapped across the cell boundary is still detected") {
    auto s = big_box("seam");
    Frame f;
    f.origin = {29.5 - 15.0, 0, 0};  // pushes the ring across x = 30
    add_phenyl(s, f, 15.0, 15.0);
    CHECK(detect_aromatic_rings(s).size() == 6);
}

TEST_CASE("ring detection is invariant under rigid rotation") {
    Rng rng(211);
    for (int trial = 0; trial < 5; ++trial) {
        Frame f;
        Vec3 r1{rng.normal(), rng.normal(), rng.normal()};
        f.e1 = r1.normalized();
        Vec3 r2{rng.normal(), rng.normal(), rng.normal()};
        r2 = r2 - f.e1 * r2.dot(f.e1);
        f.e2 = r2.normalized();
        f.e3 = f.e1.cross(f.e2);
        auto s = imine_fixture("rotated", f);
        CHECK(detect_aromatic_rings(s).size() == 12);
        CHECK(detect_linkages(s, detect_aromatic_rings(s)).size() == 1);
    }
}

TEST_CASE("ring detection is invariant under site permutation") {
    auto s = imine_fixture("perm");
    auto base_rings = detect_aromatic_rings(s);
    auto base_sites = detect_linkages(s, base_rings);

    Rng rng(223);
    std::vector<size_t> perm(s.sites.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    CrystalStructure shuffled = s;
    for (size_t k = 0; k < perm.size(); ++k) shuffled.sites[k] = s.sites[perm[k]];

    auto rings = detect_aromatic_rings(shuffled);
    auto sites = detect_linkages(shuffled, rings);
    CHECK(rings.size() == base_rings.size());
    REQUIRE(sites.size() == base_sites.size());
    CHECK(sites[0].motif == base_sites[0].motif);
}

TEST_CASE("imine fixture: one imine site between the two phenyls") {
    auto s = imine_fixture("imine");
    auto excluded = detect_aromatic_rings(s);
    REQUIRE(excluded.size() == 12);

    auto sites = detect_linkages(s, excluded);
    REQUIRE(sites.size() == 1);
    CHECK(sites[0].motif == LinkageMotif::Imine);
    REQUIRE(sites[0].atom_indices.size() == 2);
    for (int a : sites[0].atom_indices) CHECK(excluded.count(a) == 0);
    // centroid sits midway along the C=N bond
    CHECK(sites[0].position.x == doctest::Approx(9.5).epsilon(1e-9));
    CHECK(sites[0].position.y == doctest::Approx(15.0).epsilon(1e-9));
}

TEST_CASE("isolated benzene yields no linkage sites") {
    auto s = big_box("benzene");
    add_phenyl(s, Frame{}, 15.0, 15.0);
    CHECK(detect_linkages(s, detect_aromatic_rings(s)).empty());
}

TEST_CASE("amide beats imine when both windows match the same C-N bond") {
    auto s = amide_fixture("amide");
    auto excluded = detect_aromatic_rings(s);
    auto sites = detect_linkages(s, excluded);
    REQUIRE(sites.size() == 1);
    CHECK(sites[0].motif == LinkageMotif::Amide);
    CHECK(sites[0].atom_indices.size() == 3);  // N, C, O template
    for (int a : sites[0].atom_indices) CHECK(excluded.count(a) == 0);
}

TEST_CASE("CC bridge between two distinct ring systems") {
    auto s = cc_fixture("cc");
    auto sites = detect_linkages(s, detect_aromatic_rings(s));
    REQUIRE(sites.size() == 1);
    CHECK(sites[0].motif == LinkageMotif::CC);
    CHECK(sites[0].atom_indices.size() == 2);

    SUBCASE("no second ring system means no CC site") {
        auto t = big_box("dangling");
        Frame f;
        add_phenyl(t, f, 6.0, 15.0, {0});
        int c1 = add_atom(t, Element::C, f.at(8.90, 15.0));
        int c2 = add_atom(t, Element::C, f.at(10.40, 15.0));
        add_atom(t, Element::H, f.at(8.90, 16.09));
        add_atom(t, Element::H, f.at(8.90, 13.91));
        add_atom(t, Element::H, f.at(10.40, 16.09));
        add_atom(t, Element::H, f.at(10.40, 13.91));
        add_atom(t, Element::H, f.at(11.49, 15.0));
        (void)c1;
        (void)c2;
        CHECK(detect_linkages(t, detect_aromatic_rings(t)).empty());
        CHECK_THROWS_AS(featurize_supragraph(t), ArgumentError);
    }
}

TEST_CASE("supragraph assembly from the imine fixture") {
    auto s = imine_fixture("linker1_CH_linker2_N_hcb_relaxed");
    auto g = featurize_supragraph(s);

    REQUIRE(g.linkage_nodes.size() == 1);
    REQUIRE(g.linker_nodes.size() == 2);
    CHECK(g.edge_count() == 2);
    CHECK(g.name == "linker1_CH_linker2_N_hcb_relaxed");

    const auto& linkage = g.linkage_nodes[0];
    CHECK(linkage.label == "imine");
    REQUIRE(linkage.features.size() == kLinkageFeatureDim);
    CHECK(linkage.features[1] == 1.0);  // one-hot imine
    CHECK(linkage.features[4] == 1.0);  // one C
    CHECK(linkage.features[7] == 1.0);  // one N

    // Ring A side fragments to C7H6 (ring + CH); ring B side to C6H5N.
    CHECK(g.linker_nodes[0].label == "linker1");
    CHECK(g.linker_nodes[1].label == "linker2");
    REQUIRE(g.linker_nodes[0].features.size() == kLinkerFeatureDim);
    CHECK(g.linker_nodes[0].features[0] == 7.0);   // C
    CHECK(g.linker_nodes[0].features[1] == 6.0);   // H
    CHECK(g.linker_nodes[0].features[4] == 13.0);  // atoms
    CHECK(g.linker_nodes[0].features[5] == 1.0);   // rings
    CHECK(g.linker_nodes[0].features[6 + 1] == 1.0);  // id 1 one-hot
    CHECK(g.linker_nodes[1].features[0] == 6.0);
    CHECK(g.linker_nodes[1].features[3] == 1.0);   // N
    CHECK(g.linker_nodes[1].features[4] == 12.0);
    CHECK(g.linker_nodes[1].features[6 + 2] == 1.0);
}

TEST_CASE("amide fixture fragments keep the oxygen with the carbonyl side") {
    auto s = amide_fixture("linker3_CO_linker4_NH_sql_relaxed");
    auto g = featurize_supragraph(s);
    REQUIRE(g.linker_nodes.size() == 2);
    CHECK(g.linkage_nodes[0].label == "amide");
    CHECK(g.linker_nodes[0].features[2] == 1.0);  // O stays on the first fragment
    CHECK(g.linker_nodes[1].features[3] == 1.0);  // N goes with the second
}

TEST_CASE("edge count is the bipartite product") {
    Supragraph g;
    g.linkage_nodes.resize(2);
    g.linker_nodes.resize(2);
    CHECK(g.edge_count() == 4);
    g.linkage_nodes.resize(1);
    g.linker_nodes.resize(1);
    CHECK(g.edge_count() == 1);
    g.linker_nodes.resize(5);
    CHECK(g.edge_count() == 5);
}

TEST_CASE("assembly errors identify the missing node class") {
    auto s = imine_fixture("imine");
    CHECK_THROWS_WITH_AS(build_supragraph(s, {}, {}), doctest::Contains("linkage"),
                         ArgumentError);

    CrystalStructure empty = big_box("empty");
    LinkageSite fake;
    CHECK_THROWS_WITH_AS(build_supragraph(empty, {fake}, {}), doctest::Contains("linker"),
                         ArgumentError);
}

TEST_CASE("unmatched linker ids fall back to formula labels") {
    auto s = imine_fixture("no_ids_in_this_name");
    auto g = featurize_supragraph(s);
    REQUIRE(g.linker_nodes.size() == 2);
    CHECK(g.linker_nodes[0].label == "C7H6");
    CHECK(g.linker_nodes[1].label == "C6H5N1");
}

TEST_CASE("JSON round trip preserves the graph") {
    auto s = imine_fixture("linker1_CH_linker2_N_hcb_relaxed");
    auto g = featurize_supragraph(s);
    auto j = supragraph_to_json(g);
    CHECK(j.at("complete_bipartite").get<bool>());

    auto back = supragraph_from_json(j);
    CHECK(back.name == g.name);
    REQUIRE(back.linkage_nodes.size() == g.linkage_nodes.size());
    REQUIRE(back.linker_nodes.size() == g.linker_nodes.size());
    for (size_t k = 0; k < g.linker_nodes.size(); ++k) {
        CHECK(back.linker_nodes[k].label == g.linker_nodes[k].label);
        CHECK(back.linker_nodes[k].features == g.linker_nodes[k].features);
    }
    CHECK(back.edge_count() == g.edge_count());
}
