#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "cofap/io.hpp"
#include "cofap/rng.hpp"
#include "cofap/sections.hpp"

using namespace cofap;

namespace {

CrystalStructure cubic_with(std::vector<AtomSite> sites, double a = 10.0) {
    CrystalStructure s;
    s.name = "fixture";
    s.lattice = Lattice::from_parameters(a, a, a, 90, 90, 90);
    s.sites = std::move(sites);
    return s;
}

int nonzero_count(const std::vector<float>& ch) {
    return static_cast<int>(std::count_if(ch.begin(), ch.end(), [](float v) { return v != 0.0f; }));
}

}  // namespace

TEST_CASE("nine_normals is the canonical ordered list") {
    const auto& n = nine_normals();
    REQUIRE(n.size() == 9);
    CHECK(n[0] == std::array<int, 3>{1, 0, 0});
    CHECK(n[1] == std::array<int, 3>{0, 1, 0});
    CHECK(n[2] == std::array<int, 3>{0, 0, 1});
    CHECK(n[3] == std::array<int, 3>{1, 1, 0});
    CHECK(n[4] == std::array<int, 3>{0, 1, 1});
    CHECK(n[5] == std::array<int, 3>{1, 1, 1});
    CHECK(n[6] == std::array<int, 3>{-1, 1, 1});
    CHECK(n[7] == std::array<int, 3>{2, 1, 0});
    CHECK(n[8] == std::array<int, 3>{0, 2, 1});
    CHECK(std::set<std::array<int, 3>>(n.begin(), n.end()).size() == 9);
}

TEST_CASE("slab membership is a closed interval around the center plane") {
    // Plane [0,0,1] through the cell middle; thickness 2 keeps |z-5| <= 1.
    auto s = cubic_with({
        {Element::C, {0.5, 0.5, 0.5}},    // on the center plane
        {Element::N, {0.5, 0.5, 0.6}},    // 1.0 A above: boundary, kept
        {Element::O, {0.5, 0.5, 0.6101}}, // 1.101 A above: excluded
    });
    SectionPlane plane{{0, 0, 1}, 0.5, 2.0};
    auto proj = slice_and_project(s, plane, {});
    REQUIRE(proj.points.size() == 2);

    SUBCASE("empty slab is not an error") {
        SectionPlane low{{0, 0, 1}, 0.01, 0.1};
        auto empty = slice_and_project(s, low, {});
        CHECK(empty.points.empty());
        CHECK(empty.segments.empty());
    }
    SUBCASE("thickness must fit in the cell") {
        SectionPlane fat{{0, 0, 1}, 0.5, 11.0};
        CHECK_THROWS_AS(slice_and_project(s, fat, {}), ArgumentError);
    }
}

TEST_CASE("axis-aligned projection is a rigid transform of cartesian (x,y)") {
    Rng rng(5);
    std::vector<AtomSite> sites;
    for (int i = 0; i < 12; ++i)
        sites.push_back({Element::C, {rng.uniform(), rng.uniform(), 0.5}});
    auto s = cubic_with(sites);
    SectionPlane plane{{0, 0, 1}, 0.5, 2.0};
    auto proj = slice_and_project(s, plane, {});
    REQUIRE(proj.points.size() == sites.size());

    // Pairwise distances in (u,v) must equal pairwise distances in (x,y).
    for (size_t i = 0; i < sites.size(); ++i)
        for (size_t j = i + 1; j < sites.size(); ++j) {
            double du = proj.points[i].u - proj.points[j].u;
            double dv = proj.points[i].v - proj.points[j].v;
            double dx = (sites[i].frac.x - sites[j].frac.x) * 10.0;
            double dy = (sites[i].frac.y - sites[j].frac.y) * 10.0;
            CHECK(std::sqrt(du * du + dv * dv) ==
                  doctest::Approx(std::sqrt(dx * dx + dy * dy)).epsilon(1e-9));
        }
}

TEST_CASE("rasterize basics") {
    SUBCASE("no content gives all-zero channels") {
        auto img = rasterize({}, 5.0);
        CHECK(nonzero_count(img.atom) == 0);
        CHECK(nonzero_count(img.bond) == 0);
    }
    SUBCASE("one carbon at the origin paints exactly one 0.25 pixel") {
        Projection proj;
        proj.points.push_back({0.0, 0.0, Element::C});
        auto img = rasterize(proj, 1.0);
        CHECK(nonzero_count(img.atom) == 1);
        CHECK(*std::max_element(img.atom.begin(), img.atom.end()) == doctest::Approx(0.25f));
    }
    SUBCASE("element codes are C=0.25 O=0.50 H=0.75 N=1.00, max on collision") {
        Projection proj;
        proj.points.push_back({0.0, 0.0, Element::C});
        proj.points.push_back({0.0, 0.0, Element::N});
        auto img = rasterize(proj, 1.0);
        CHECK(nonzero_count(img.atom) == 1);
        CHECK(*std::max_element(img.atom.begin(), img.atom.end()) == doctest::Approx(1.0f));
        CHECK(atom_code(Element::C) == 0.25);
        CHECK(atom_code(Element::O) == 0.50);
        CHECK(atom_code(Element::H) == 0.75);
        CHECK(atom_code(Element::N) == 1.00);
    }
    SUBCASE("tolerated elements are not drawn") {
        Projection proj;
        proj.points.push_back({0.0, 0.0, Element::Other});
        auto img = rasterize(proj, 1.0);
        CHECK(nonzero_count(img.atom) == 0);
    }
    SUBCASE("horizontal segment spanning the window fills one full row") {
        Projection proj;
        proj.segments.push_back({-2.5, 0.0, 2.5, 0.0});
        auto img = rasterize(proj, 5.0 * (1 + 1e-9));
        CHECK(nonzero_count(img.bond) == 64);
        // all in one row
        int rows = 0;
        for (int y = 0; y < 64; ++y) {
            int run = 0;
            for (int x = 0; x < 64; ++x) run += img.bond[y * 64 + x] != 0.0f;
            if (run) {
                ++rows;
                CHECK(run == 64);
            }
        }
        CHECK(rows == 1);
    }
    SUBCASE("extent must be positive") {
        CHECK_THROWS_AS(rasterize({}, 0.0), ArgumentError);
    }
}

TEST_CASE("line rasterization tracks a dense supersampling oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Projection proj;
        Projection::Segment sgm{rng.uniform(-4, 4), rng.uniform(-4, 4),
                                rng.uniform(-4, 4), rng.uniform(-4, 4)};
        proj.segments.push_back(sgm);
        const double extent = 10.0;
        auto img = rasterize(proj, extent);

        // Window center is the segment's own bbox center.
        double cu = (std::min(sgm.u0, sgm.u1) + std::max(sgm.u0, sgm.u1)) / 2.0;
        double cv = (std::min(sgm.v0, sgm.v1) + std::max(sgm.v0, sgm.v1)) / 2.0;
        auto to_px = [&](double coord, double c) {
            int p = static_cast<int>(std::floor((coord - c + extent / 2) / extent * 64));
            return std::clamp(p, 0, 63);
        };

        std::set<std::pair<int, int>> drawn;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (img.bond[y * 64 + x] != 0.0f) drawn.insert({x, y});

        // Endpoint pixels are drawn.
        CHECK(drawn.count({to_px(sgm.u0, cu), to_px(sgm.v0, cv)}) == 1);
        CHECK(drawn.count({to_px(sgm.u1, cu), to_px(sgm.v1, cv)}) == 1);

        // Pixel count of a 1px line is the Chebyshev span + 1.
        int dx = std::abs(to_px(sgm.u1, cu) - to_px(sgm.u0, cu));
        int dy = std::abs(to_px(sgm.v1, cv) - to_px(sgm.v0, cv));
        CHECK(static_cast<int>(drawn.size()) == std::max(dx, dy) + 1);

        // Every supersampled pixel is adjacent (Chebyshev <= 1) to a drawn one,
        // and every drawn pixel is adjacent to the continuous segment.
        std::set<std::pair<int, int>> sampled;
        for (int k = 0; k <= 10000; ++k) {
            double t = k / 10000.0;
            sampled.insert({to_px(sgm.u0 + t * (sgm.u1 - sgm.u0), cu),
                            to_px(sgm.v0 + t * (sgm.v1 - sgm.v0), cv)});
        }
        auto near = [](const std::set<std::pair<int, int>>& pool, int x, int y) {
            for (int ox = -1; ox <= 1; ++ox)
                for (int oy = -1; oy <= 1; ++oy)
                    if (pool.count({x + ox, y + oy})) return true;
            return false;
        };
        for (const auto& [x, y] : sampled) CHECK(near(drawn, x, y));
        for (const auto& [x, y] : drawn) CHECK(near(sampled, x, y));
    }
}

TEST_CASE("full pipeline produces a 9x2x64x64 set with values in [0,1]") {
    Rng rng(19);
    std::vector<AtomSite> sites;
    const Element elems[4] = {Element::C, Element::H, Element::O, Element::N};
    for (int i = 0; i < 30; ++i)
        sites.push_back({elems[rng.below(4)], {rng.uniform(), rng.uniform(), rng.uniform()}});
    auto s = cubic_with(sites, 8.0);

    auto set = featurize_sections(s);
    int nonzero_total = 0;
    for (const auto& img : set.images) {
        REQUIRE(img.atom.size() == 64 * 64);
        REQUIRE(img.bond.size() == 64 * 64);
        for (float v : img.atom) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        for (float v : img.bond) CHECK((v == 0.0f || v == 1.0f));
        nonzero_total += nonzero_count(img.atom);
    }
    CHECK(nonzero_total > 0);

    SUBCASE("deterministic: identical inputs give bit-identical images") {
        auto again = featurize_sections(s);
        for (int k = 0; k < 9; ++k) {
            CHECK(set.images[k].atom == again.images[k].atom);
            CHECK(set.images[k].bond == again.images[k].bond);
        }
    }
    SUBCASE("translating by a lattice vector changes nothing after wrapping") {
        CrystalStructure t = s;
        for (auto& site : t.sites) {
            site.frac.x = site.frac.x + 1.0 - std::floor(site.frac.x + 1.0);
            site.frac.y = site.frac.y + 2.0 - std::floor(site.frac.y + 2.0);
        }
        auto shifted = featurize_sections(t);
        for (int k = 0; k < 9; ++k) CHECK(set.images[k].atom == shifted.images[k].atom);
    }
}

TEST_CASE("nonzero atom pixels never exceed the slab atom count") {
    Rng rng(43);
    std::vector<AtomSite> sites;
    for (int i = 0; i < 25; ++i)
        sites.push_back({Element::C, {rng.uniform(), rng.uniform(), rng.uniform()}});
    auto s = cubic_with(sites, 9.0);
    auto sc = make_supercell(s, 2, 2, 2);

    const auto& normals = nine_normals();
    for (const auto& nl : normals) {
        SectionPlane plane{nl, 0.5, 2.0};
        auto proj = slice_and_project(sc, plane, {});
        if (proj.points.empty()) continue;
        auto img = rasterize(proj, 10.0);
        CHECK(nonzero_count(img.atom) <= static_cast<int>(proj.points.size()));
    }
}

TEST_CASE("section set round-trips through the float32 blob") {
    Rng rng(47);
    std::vector<AtomSite> sites;
    for (int i = 0; i < 16; ++i)
        sites.push_back({Element::N, {rng.uniform(), rng.uniform(), rng.uniform()}});
    auto set = featurize_sections(cubic_with(sites, 8.0));

    auto dir = std::filesystem::temp_directory_path() / "cofap_sections_test";
    std::filesystem::create_directories(dir);
    auto blob = (dir / "fixture.sect").string();
    write_section_set(set, blob, "fixture");

    auto back = read_section_set(blob);
    for (int k = 0; k < 9; ++k) {
        CHECK(back.images[k].atom == set.images[k].atom);
        CHECK(back.images[k].bond == set.images[k].bond);
    }
    CHECK(std::filesystem::exists(blob + ".json"));
    auto sidecar = read_text_file(blob + ".json");
    CHECK(sidecar.find("\"shape\"") != std::string::npos);
    CHECK(sidecar.find("0.25") != std::string::npos);
    std::filesystem::remove_all(dir);
}
