#include <doctest.h>

#include <algorithm>
#include <map>
#include <tuple>

#include "cofap/homology.hpp"
#include "cofap/io.hpp"
#include "cofap/rng.hpp"

using namespace cofap;

namespace {

// Reference implementation: one global boundary matrix over all simplices up
// to dimension 2, reduced column by column with no shortcuts. Written against
// the textbook algorithm and used as the oracle for the production reduction.
std::vector<PersistencePair> naive_rips(const std::vector<Vec3>& pts, double max_edge) {
    struct Simplex {
        double filt;
        int dim;
        std::array<int, 3> v;  // ascending; unused slots -1
    };
    const int n = static_cast<int>(pts.size());
    auto dist = [&](int i, int j) { return (pts[j] - pts[i]).norm(); };

    std::vector<Simplex> simplices;
    for (int i = 0; i < n; ++i) simplices.push_back({0.0, 0, {i, -1, -1}});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (double d = dist(i, j); d <= max_edge) simplices.push_back({d, 1, {i, j, -1}});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                double f = std::max({dist(i, j), dist(i, k), dist(j, k)});
                if (dist(i, j) <= max_edge && dist(i, k) <= max_edge && dist(j, k) <= max_edge)
                    simplices.push_back({f, 2, {i, j, k}});
            }
    std::sort(simplices.begin(), simplices.end(), [](const Simplex& a, const Simplex& b) {
        if (a.filt != b.filt) return a.filt < b.filt;
        if (a.dim != b.dim) return a.dim < b.dim;
        return a.v < b.v;
    });

    std::map<std::array<int, 3>, int> index_of;
    for (size_t s = 0; s < simplices.size(); ++s) index_of[simplices[s].v] = static_cast<int>(s);

    auto boundary = [&](const Simplex& s) {
        std::vector<int> col;
        if (s.dim == 1) {
            col = {index_of[{s.v[0], -1, -1}], index_of[{s.v[1], -1, -1}]};
        } else if (s.dim == 2) {
            col = {index_of[{s.v[0], s.v[1], -1}], index_of[{s.v[0], s.v[2], -1}],
                   index_of[{s.v[1], s.v[2], -1}]};
        }
        std::sort(col.begin(), col.end());
        return col;
    };

    std::vector<int> pivot_of(simplices.size(), -1);
    std::vector<std::vector<int>> reduced(simplices.size());
    std::vector<char> creator(simplices.size(), 0), killed(simplices.size(), 0);
    std::vector<PersistencePair> pairs;
    for (size_t j = 0; j < simplices.size(); ++j) {
        auto col = boundary(simplices[j]);
        while (!col.empty() && pivot_of[col.back()] >= 0) {
            const auto& other = reduced[pivot_of[col.back()]];
            std::vector<int> merged;
            std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(),
                                          std::back_inserter(merged));
            col = std::move(merged);
        }
        if (col.empty()) {
            creator[j] = 1;
            continue;
        }
        int low = col.back();
        pivot_of[low] = static_cast<int>(j);
        reduced[j] = std::move(col);
        killed[low] = 1;
        if (simplices[low].dim <= 1)
            pairs.push_back({simplices[low].dim, simplices[low].filt, simplices[j].filt});
    }
    for (size_t s = 0; s < simplices.size(); ++s)
        if (creator[s] && !killed[s] && simplices[s].dim <= 1)
            pairs.push_back({simplices[s].dim, simplices[s].filt, max_edge});
    return pairs;
}

using Triple = std::tuple<int, double, double>;

std::vector<Triple> as_multiset(const std::vector<PersistencePair>& pairs) {
    std::vector<Triple> out;
    for (const auto& p : pairs) out.emplace_back(p.dim, p.birth, p.death);
    std::sort(out.begin(), out.end());
    return out;
}

// Prim MST edge lengths (all points assumed mutually reachable).
std::vector<double> mst_lengths(const std::vector<Vec3>& pts) {
    const size_t n = pts.size();
    std::vector<char> in_tree(n, 0);
    std::vector<double> best(n, 1e300), out;
    in_tree[0] = 1;
    for (size_t i = 1; i < n; ++i) best[i] = (pts[i] - pts[0]).norm();
    for (size_t step = 1; step < n; ++step) {
        size_t pick = 0;
        double d = 1e300;
        for (size_t i = 0; i < n; ++i)
            if (!in_tree[i] && best[i] < d) {
                d = best[i];
                pick = i;
            }
        in_tree[pick] = 1;
        out.push_back(d);
        for (size_t i = 0; i < n; ++i)
            if (!in_tree[i]) best[i] = std::min(best[i], (pts[i] - pts[pick]).norm());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("unit square: single positive-persistence H1 bar at (1, sqrt(2))") {
    std::vector<Vec3> square = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    auto pairs = filter_pairs(rips_persistence(square, 5.0), 1e-9);
    std::vector<PersistencePair> h1;
    for (const auto& p : pairs)
        if (p.dim == 1) h1.push_back(p);
    REQUIRE(h1.size() == 1);
    CHECK(std::abs(h1[0].birth - 1.0) < 1e-9);
    CHECK(std::abs(h1[0].death - std::sqrt(2.0)) < 1e-9);
}

TEST_CASE("equilateral triangle: the 1-cycle dies the instant it is born") {
    double s = 1.2;
    std::vector<Vec3> tri = {{0, 0, 0}, {s, 0, 0}, {s / 2, s * std::sqrt(3.0) / 2, 0}};
    for (const auto& p : rips_persistence(tri, 5.0))
        if (p.dim == 1) CHECK(p.death == doctest::Approx(p.birth));
}

TEST_CASE("reduction equals the naive full boundary-matrix oracle on random clouds") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 2 + rng.below(7);  // up to 8 points
        std::vector<Vec3> pts;
        for (size_t i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0, 2.5), rng.uniform(0, 2.5), rng.uniform(0, 2.5)});
        // alternate between a cutoff that keeps everything and one that splits
        double max_edge = (trial % 2 == 0) ? 5.0 : 1.6;
        CHECK(as_multiset(rips_persistence(pts, max_edge)) ==
              as_multiset(naive_rips(pts, max_edge)));
    }
}

TEST_CASE("H0 deaths are the MST edge multiset on 10-point clouds") {
    Rng rng(103);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Vec3> pts;
        for (int i = 0; i < 10; ++i)
            pts.push_back({rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3)});
        const double max_edge = 20.0;
        std::vector<double> deaths;
        int essential = 0;
        for (const auto& p : rips_persistence(pts, max_edge)) {
            if (p.dim != 0) continue;
            CHECK(p.birth == 0.0);
            if (p.death == max_edge) ++essential;
            else deaths.push_back(p.death);
        }
        std::sort(deaths.begin(), deaths.end());
        auto want = mst_lengths(pts);
        REQUIRE(deaths.size() == 9);
        CHECK(essential == 1);
        for (int k = 0; k < 9; ++k) CHECK(deaths[k] == doctest::Approx(want[k]).epsilon(1e-12));
    }
}

TEST_CASE("pair multiset is invariant under point permutation") {
    Rng rng(107);
    std::vector<Vec3> pts;
    for (int i = 0; i < 9; ++i)
        pts.push_back({rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)});
    auto base = as_multiset(rips_persistence(pts, 4.0));

    std::vector<Vec3> shuffled = pts;
    rng.shuffle(shuffled);
    CHECK(as_multiset(rips_persistence(shuffled, 4.0)) == base);
}

TEST_CASE("diagram stability under 1e-3 perturbation") {
    Rng rng(109);
    const double delta = 1e-3;
    std::vector<Vec3> pts, moved;
    for (int i = 0; i < 10; ++i) {
        Vec3 p = {rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
        pts.push_back(p);
        double s = delta / std::sqrt(3.0);
        moved.push_back({p.x + rng.uniform(-s, s), p.y + rng.uniform(-s, s),
                         p.z + rng.uniform(-s, s)});
    }
    auto a = rips_persistence(pts, 10.0);
    auto b = rips_persistence(moved, 10.0);
    REQUIRE(a.size() == b.size());

    // Sorted births and sorted deaths per dimension each move by <= 2*delta.
    for (int dim = 0; dim <= 1; ++dim) {
        std::vector<double> ba, bb, da, db;
        for (const auto& p : a)
            if (p.dim == dim) {
                ba.push_back(p.birth);
                da.push_back(p.death);
            }
        for (const auto& p : b)
            if (p.dim == dim) {
                bb.push_back(p.birth);
                db.push_back(p.death);
            }
        std::sort(ba.begin(), ba.end());
        std::sort(bb.begin(), bb.end());
        std::sort(da.begin(), da.end());
        std::sort(db.begin(), db.end());
        REQUIRE(ba.size() == bb.size());
        for (size_t k = 0; k < ba.size(); ++k) {
            CHECK(std::abs(ba[k] - bb[k]) <= 2 * delta + 1e-12);
            CHECK(std::abs(da[k] - db[k]) <= 2 * delta + 1e-12);
        }
    }
}

TEST_CASE("all pairs satisfy 0 <= birth <= death <= max_edge") {
    Rng rng(113);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec3> pts;
        size_t n = 3 + rng.below(8);
        for (size_t i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 4)});
        for (const auto& p : rips_persistence(pts, 3.0)) {
            CHECK(p.birth >= 0.0);
            CHECK(p.birth <= p.death);
            CHECK(p.death <= 3.0);
        }
    }
}

TEST_CASE("filter_pairs") {
    std::vector<PersistencePair> pairs = {
        {0, 0.0, 2.0}, {1, 1.0, 1.05}, {1, 1.0, 1.0}, {1, 2.0, 4.0}};
    SUBCASE("threshold 0 keeps exactly death > birth") {
        auto kept = filter_pairs(pairs, 0.0);
        REQUIRE(kept.size() == 3);
        for (const auto& p : kept) CHECK(p.death > p.birth);
    }
    SUBCASE("a 0.05 lifetime is removed at threshold 0.1") {
        auto kept = filter_pairs(pairs, 0.1);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].death == 2.0);
        CHECK(kept[1].death == 4.0);
    }
    SUBCASE("filtering is idempotent") {
        auto once = filter_pairs(pairs, 0.1);
        CHECK(as_multiset(filter_pairs(once, 0.1)) == as_multiset(once));
    }
    SUBCASE("negative threshold is rejected") {
        CHECK_THROWS_AS(filter_pairs(pairs, -0.5), ArgumentError);
    }
}

TEST_CASE("vectorize") {
    SUBCASE("empty diagram maps to 18 zeros") {
        auto fp = vectorize({});
        for (double v : fp) CHECK(v == 0.0);
    }
    SUBCASE("single H0 pair lands in one bin of the H0 block") {
        auto fp = vectorize({{0, 0.0, 2.5}});
        double sum = 0;
        int nonzero = -1;
        for (int k = 0; k < 18; ++k) {
            sum += fp[k];
            if (fp[k] != 0.0) nonzero = k;
        }
        CHECK(sum == 1.0);
        CHECK(nonzero == 1);  // birth bin 0, death bin 1 (2.5 / (5/3) -> 1)
    }
    SUBCASE("H1 pairs land in the second block; out-of-range values clamp") {
        auto fp = vectorize({{1, 6.0, 9.0}});  // clamps to the (2,2) corner bin
        CHECK(fp[9 + 3 * 2 + 2] == 1.0);
    }
    SUBCASE("entry sum counts the pairs") {
        Rng rng(127);
        std::vector<PersistencePair> pairs;
        for (int i = 0; i < 57; ++i) {
            double b = rng.uniform(0, 7);
            pairs.push_back({static_cast<int>(rng.below(2)), b, b + rng.uniform(0, 4)});
        }
        double sum = 0;
        for (double v : vectorize(pairs)) sum += v;
        CHECK(sum == 57.0);
    }
}

TEST_CASE("empty cloud is an argument error") {
    CHECK_THROWS_AS(rips_persistence({}, 10.0), ArgumentError);
    CHECK_THROWS_AS(rips_persistence({{0, 0, 0}}, -1.0), ArgumentError);
}

TEST_CASE("structure fingerprint counts its filtered pairs") {
    Rng rng(131);
    CrystalStructure s;
    s.name = "topo";
    s.lattice = Lattice::from_parameters(8, 8, 8, 90, 90, 90);
    for (int i = 0; i < 20; ++i)
        s.sites.push_back({Element::C, {rng.uniform(), rng.uniform(), rng.uniform()}});

    HomologyConfig cfg;
    auto fp = topo_fingerprint(s, cfg);
    std::vector<Vec3> pts;
    for (size_t i = 0; i < s.sites.size(); ++i) pts.push_back(s.cart(i));
    auto expect = filter_pairs(rips_persistence(pts, cfg.max_edge), cfg.min_persistence);
    double sum = 0;
    for (double v : fp) sum += v;
    CHECK(sum == static_cast<double>(expect.size()));

    SUBCASE("image padding enlarges the cloud monotonically") {
        HomologyConfig padded = cfg;
        padded.image_padding = 2.0;
        auto fp2 = topo_fingerprint(s, padded);
        double sum2 = 0;
        for (double v : fp2) sum2 += v;
        CHECK(sum2 >= sum);  // more points, at least as many H0 classes
    }
}
