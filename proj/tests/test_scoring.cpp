#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "quantmerge/rng.hpp"
#include "quantmerge/scoring.hpp"

using namespace quantmerge;

namespace {
QuantileLevel lvl(double t) { return QuantileLevel(t); }
}  // namespace

TEST_CASE("QuantileLevel rejects values outside (0, 1)") {
    CHECK_THROWS_AS(QuantileLevel(0.0), InvariantError);
    CHECK_THROWS_AS(QuantileLevel(1.0), InvariantError);
    CHECK_THROWS_AS(QuantileLevel(-0.1), InvariantError);
    CHECK_THROWS_AS(QuantileLevel(1.5), InvariantError);
    CHECK(QuantileLevel(0.999).value() == 0.999);
}

TEST_CASE("pinball loss point values") {
    CHECK(pinball_loss(0.0, lvl(0.9)) == 0.0);
    CHECK(pinball_loss(2.0, lvl(0.5)) == Catch::Approx(1.0).margin(1e-12));
    CHECK(pinball_loss(-1.0, lvl(0.9)) == Catch::Approx(0.9).margin(1e-12));
    CHECK_THROWS_AS(pinball_loss(std::nan(""), lvl(0.5)), InvariantError);
    CHECK_THROWS_AS(pinball_loss(INFINITY, lvl(0.5)), InvariantError);
}

TEST_CASE("quantile score point values") {
    CHECK(quantile_score(3.0, 3.0, lvl(0.99)) == 0.0);
    CHECK(quantile_score(5.0, 3.0, lvl(0.95)) == Catch::Approx(0.1).margin(1e-12));
    CHECK(quantile_score(0.0, 10.0, lvl(0.95)) == Catch::Approx(9.5).margin(1e-12));
}

TEST_CASE("mean quantile score") {
    std::vector<double> p1{1, 1}, o1{1, 1};
    CHECK(mean_quantile_score(p1, o1, lvl(0.5)) == 0.0);

    std::vector<double> p2{2, 0}, o2{0, 2};
    CHECK(mean_quantile_score(p2, o2, lvl(0.5)) == Catch::Approx(1.0).margin(1e-12));

    // hand-sum of four pinball terms: 0, 0, 0, 10*(1-0.9)=1 -> mean 0.25
    std::vector<double> p3{0, 0, 0, 10}, o3{0, 0, 0, 0};
    CHECK(mean_quantile_score(p3, o3, lvl(0.9)) == Catch::Approx(0.25).margin(1e-12));

    std::vector<double> shorter{1};
    CHECK_THROWS_AS(mean_quantile_score(p3, shorter, lvl(0.9)), InvariantError);
    std::vector<double> empty;
    CHECK_THROWS_AS(mean_quantile_score(empty, empty, lvl(0.9)), InvariantError);
}

TEST_CASE("quantile skill score") {
    CHECK(quantile_skill_score(0.0, 5.0) == 1.0);
    CHECK(quantile_skill_score(3.0, 3.0) == 0.0);
    CHECK(quantile_skill_score(2.0, 1.0) == Catch::Approx(-1.0).margin(1e-12));
    CHECK_THROWS_AS(quantile_skill_score(1.0, 0.0), UndefinedSkillError);
}

TEST_CASE("frequency score") {
    // coverage exactly tau: 95 of 100 observations covered at tau = 0.95
    std::vector<double> preds(100, 1.0), obs(100, 0.0);
    for (int i = 0; i < 5; ++i) obs[i] = 2.0;  // 5 uncovered
    CHECK(frequency_score(preds, obs, lvl(0.95)) == Catch::Approx(0.0).margin(1e-12));

    std::vector<double> all_cov_p(10, 5.0), all_cov_o(10, 1.0);
    CHECK(frequency_score(all_cov_p, all_cov_o, lvl(0.95)) ==
          Catch::Approx(0.05).margin(1e-12));

    std::vector<double> none_p(10, 0.0), none_o(10, 1.0);
    CHECK(frequency_score(none_p, none_o, lvl(0.9)) == Catch::Approx(0.9).margin(1e-12));
}

TEST_CASE("frequency skill score") {
    CHECK(frequency_skill_score(0.0, 0.1) == 1.0);
    CHECK(frequency_skill_score(0.05, 0.05) == 0.0);
    CHECK(frequency_skill_score(0.2, 0.1) == Catch::Approx(-1.0).margin(1e-12));
    CHECK_THROWS_AS(frequency_skill_score(0.1, 0.0), UndefinedSkillError);
}

TEST_CASE("pinball loss nonnegativity and convexity over random triples") {
    Rng rng(20240901);
    for (int i = 0; i < 20000; ++i) {
        const double tau = 0.001 + 0.998 * rng.uniform();
        const double u = (rng.uniform() - 0.5) * 200.0;
        const double loss = pinball_loss(u, lvl(tau));
        REQUIRE(loss >= 0.0);
        if (u != 0.0) REQUIRE(loss > 0.0);

        const double x1 = (rng.uniform() - 0.5) * 100.0;
        const double x2 = (rng.uniform() - 0.5) * 100.0;
        const double y = (rng.uniform() - 0.5) * 100.0;
        const double mid = quantile_score(0.5 * (x1 + x2), y, lvl(tau));
        const double avg = 0.5 * (quantile_score(x1, y, lvl(tau)) + quantile_score(x2, y, lvl(tau)));
        REQUIRE(mid <= avg + 1e-12);
    }
}

TEST_CASE("skill scores are bounded above by 1") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double cand = rng.uniform() * 50.0;
        const double ref = 1e-9 + rng.uniform() * 50.0;
        REQUIRE(quantile_skill_score(cand, ref) <= 1.0);
        REQUIRE(frequency_skill_score(cand, ref) <= 1.0);
    }
}

TEST_CASE("frequency score of the true quantile converges on iid draws") {
    // Exponential(1): true tau-quantile is -log(1 - tau).
    Rng rng(99);
    const int n = 100000;
    std::vector<double> obs(n);
    for (auto& v : obs) v = -std::log(1.0 - rng.uniform());
    for (double tau : {0.5, 0.9, 0.99}) {
        std::vector<double> preds(n, -std::log(1.0 - tau));
        CHECK(frequency_score(preds, obs, lvl(tau)) < 0.005);
    }
}

TEST_CASE("score summary invariants") {
    std::vector<double> p{0.0, 1.0, 2.0}, o{0.5, 0.5, 0.5};
    auto s = summarize_scores(p, o, lvl(0.9));
    CHECK(s.n == 3);
    CHECK(s.mean_quantile_score >= 0.0);
    CHECK(s.frequency_score <= 0.9);
}
