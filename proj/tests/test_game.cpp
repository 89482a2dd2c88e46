// Copyright 2026 the coalmpc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coalmpc/game.hpp"
#include "coalmpc/rng.hpp"
#include "game_test_util.hpp"
#include "oracles.hpp"

#include <cmath>
#include <sstream>
#include <atomic>
#include <thread>

using namespace coalmpc;

TEST_CASE("cooperation cost formula")
{
    CooperationCostFn fn;
    fn.c_coal = 1e-3;
    CHECK(cooperation_cost(fn, 1) == doctest::Approx(0.0));
    CHECK(cooperation_cost(fn, 2) == doctest::Approx(4e-3));
    CHECK(cooperation_cost(fn, 5) == doctest::Approx(25e-3));
    fn.c_coal = 0.0;
    for (int s = 1; s <= 6; ++s) CHECK(cooperation_cost(fn, s) == doctest::Approx(0.0));
    CHECK_THROWS(cooperation_cost(fn, 0));
}

TEST_CASE("coalition value adds control and cooperation costs")
{
    CHECK(coalition_value(10.0, 0.004) == doctest::Approx(10.004));
    CHECK(coalition_value(0.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("merger test is non-strict")
{
    CHECK(merger_test(10, 6, 12));
    CHECK_FALSE(merger_test(10, 6, 17));
    CHECK(merger_test(10, 6, 16)); // tie accepts
}

TEST_CASE("egalitarian split")
{
    auto [p1, p2] = egalitarian_split(10, 6, 12);
    CHECK(p1 == doctest::Approx(8.0));
    CHECK(p2 == doctest::Approx(4.0));

    auto [q1, q2] = egalitarian_split(5, 5, 10);
    CHECK(q1 == doctest::Approx(5.0));
    CHECK(q2 == doctest::Approx(5.0));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const double v1 = rng.uniform(-5, 5), v2 = rng.uniform(-5, 5), v12 = rng.uniform(-5, 5);
        auto [a, b] = egalitarian_split(v1, v2, v12);
        CHECK(std::abs(a + b - v12) < 1e-12);
    }
}

TEST_CASE("excess sign convention and identities")
{
    const Coalition players = {1, 2, 3};
    auto game = make_table_game(players, [](const Coalition& s) {
        if (s.size() == 1 && s[0] == 1) return 5.0;
        return static_cast<double>(s.size()) * 2.0;
    });

    AllocationVector p = AllocationVector::equal_split(players, game.value(players));
    CHECK(excess(game, {}, p) == doctest::Approx(0.0));
    CHECK(excess(game, players, p) == doctest::Approx(0.0)); // efficient by construction

    AllocationVector q;
    q.entries = {{1, 7.0}, {2, 0.0}, {3, -1.0}};
    auto g2 = make_table_game(players, [](const Coalition& s) {
        return s.size() == 1 ? 5.0 : 6.0;
    });
    CHECK(excess(g2, {1}, q) == doctest::Approx(2.0)); // overpays, dissatisfied
}

TEST_CASE("satisfy_demand arithmetic and identities")
{
    AllocationVector p;
    p.entries = {{1, 4.0}, {2, 4.0}, {3, 4.0}};
    // standalone value 2 for {1} -> excess 2
    const auto p2 = satisfy_demand(p, {1}, 2.0);
    CHECK(p2.at(1) == doctest::Approx(2.0));
    CHECK(p2.at(2) == doctest::Approx(5.0));
    CHECK(p2.at(3) == doctest::Approx(5.0));
    CHECK(std::abs(p2.sum() - p.sum()) < 1e-12);

    const auto p3 = satisfy_demand(p, {2}, 0.0);
    for (AgentId id : {1, 2, 3}) CHECK(p3.at(id) == doctest::Approx(p.at(id)));

    CHECK_THROWS(satisfy_demand(p, {}, 1.0));
    CHECK_THROWS(satisfy_demand(p, {1, 2, 3}, 1.0));

    // after the transfer the target excess vanishes, efficiency preserved
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const Coalition players = {1, 2, 3, 4};
        auto game = testutil::random_core_game(rng, players);
        AllocationVector alloc = testutil::random_efficient_allocation(rng, game, 2.0);
        const Coalition s = {1, 3};
        const double e = excess(game, s, alloc);
        const auto next = satisfy_demand(alloc, s, e);
        CHECK(std::abs(excess(game, s, next)) < 1e-12);
        CHECK(std::abs(next.sum() - alloc.sum()) < 1e-12);
    }
}

TEST_CASE("core membership on additive and perturbed games")
{
    const Coalition players = {1, 2, 3};
    auto additive =
        make_table_game(players, [](const Coalition& s) { return static_cast<double>(s.size()); });
    AllocationVector ones;
    ones.entries = {{1, 1.0}, {2, 1.0}, {3, 1.0}};
    CHECK(core_membership(additive, ones));

    auto cheaper_single = make_table_game(players, [](const Coalition& s) {
        if (s.size() == 1 && s[0] == 1) return 0.5;
        return static_cast<double>(s.size());
    });
    CHECK_FALSE(core_membership(cheaper_single, ones)); // {1} overpays by 0.5
}

TEST_CASE("core membership agrees with direct inequality enumeration")
{
    Rng rng(29);
    for (int trial = 0; trial < 30; ++trial) {
        const Coalition players = {1, 2, 3};
        // random 3-player game, not necessarily balanced
        std::map<std::uint32_t, double> vals;
        for (std::uint32_t m = 1; m < 8; ++m) vals[m] = rng.uniform(-2.0, 2.0);
        auto game = make_table_game(players, [vals, players](const Coalition& s) {
            std::uint32_t mask = 0;
            for (AgentId id : s) mask |= 1u << (id - 1);
            return mask == 0 ? 0.0 : vals.at(mask);
        });
        AllocationVector p = testutil::random_efficient_allocation(rng, game, 1.0);

        bool expected = true;
        for (std::uint32_t m = 1; m < 7; ++m) {
            Coalition s;
            for (AgentId id : players)
                if (m & (1u << (id - 1))) s.push_back(id);
            if (p.sum_over(s) - game.value(s) > 1e-9) expected = false;
        }
        CHECK(core_membership(game, p) == expected);
    }
}

TEST_CASE("core distance basics")
{
    const Coalition players = {1, 2, 3};
    auto additive =
        make_table_game(players, [](const Coalition& s) { return static_cast<double>(s.size()); });

    AllocationVector inside;
    inside.entries = {{1, 1.0}, {2, 1.0}, {3, 1.0}};
    CHECK(core_distance(additive, inside).distance == doctest::Approx(0.0).epsilon(1e-9));

    // additive game: the core is the single point of singleton values
    const double delta = 0.3;
    AllocationVector shifted;
    shifted.entries = {{1, 1.0 + delta}, {2, 1.0 - delta}, {3, 1.0}};
    const auto d = core_distance(additive, shifted);
    CHECK_FALSE(d.least_core_fallback);
    CHECK(d.distance > 0.0);
    CHECK(d.distance <= std::hypot(delta, delta) + 1e-9);
    CHECK(d.distance == doctest::Approx(std::hypot(delta, delta)).epsilon(1e-6));
}

TEST_CASE("transfer scheme never moves an allocation away from a nonempty core")
{
    Rng rng(31);
    int games_checked = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(3));
        Coalition players;
        for (int i = 1; i <= n; ++i) players.push_back(i);
        auto game = testutil::random_core_game(rng, players);
        REQUIRE(least_core_epsilon(game).epsilon == doctest::Approx(0.0).epsilon(1e-9));

        AllocationVector p = testutil::random_efficient_allocation(rng, game, 1.5);
        double last = core_distance(game, p).distance;
        for (int it = 0; it < 30; ++it) {
            testutil::demand_iteration_step(game, p, rng);
            const double now = core_distance(game, p).distance;
            CHECK(now <= last + 1e-9);
            last = now;
        }
        ++games_checked;
    }
    CHECK(games_checked == 25);
}

TEST_CASE("least core of the three-player transfer game")
{
    // mirrored majority game: pairs profit, the grand coalition keeps the
    // pair cost; hand enumeration gives eps = 1/3 at the symmetric witness
    const Coalition players = {1, 2, 3};
    auto game = make_table_game(players, [](const Coalition& s) {
        if (s.size() == 1) return 0.0;
        return -1.0;
    });
    const auto lc = least_core_epsilon(game);
    CHECK(lc.epsilon == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(std::abs(lc.witness.sum() - game.value(players)) < 1e-8);
}

TEST_CASE("least core is zero exactly when the core is nonempty")
{
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        const Coalition players = {1, 2, 3, 4};
        auto game = testutil::random_core_game(rng, players);
        const auto lc = least_core_epsilon(game);
        CHECK(lc.epsilon == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(lc.lp_epsilon <= 1e-9);
    }

    const Coalition players = {1, 2, 3};
    auto additive =
        make_table_game(players, [](const Coalition& s) { return static_cast<double>(s.size()); });
    const auto lc = least_core_epsilon(additive);
    CHECK(lc.epsilon == doctest::Approx(0.0).epsilon(1e-9));
    for (AgentId id : players) CHECK(lc.witness.at(id) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("shapley value identities")
{
    // two-player game coincides with the egalitarian split
    Rng rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const double v1 = rng.uniform(-3, 3), v2 = rng.uniform(-3, 3), v12 = rng.uniform(-3, 3);
        auto game = make_table_game({1, 2}, [&](const Coalition& s) {
            if (s.size() == 2) return v12;
            return s[0] == 1 ? v1 : v2;
        });
        const auto phi = shapley_value(game);
        const auto [e1, e2] = egalitarian_split(v1, v2, v12);
        CHECK(std::abs(phi.at(1) - e1) < 1e-12);
        CHECK(std::abs(phi.at(2) - e2) < 1e-12);
    }

    // additive game returns the singleton values
    const Coalition players = {1, 2, 3, 4};
    std::map<AgentId, double> singles = {{1, 0.5}, {2, -1.0}, {3, 2.0}, {4, 0.25}};
    auto additive = make_table_game(players, [&](const Coalition& s) {
        double v = 0.0;
        for (AgentId id : s) v += singles.at(id);
        return v;
    });
    const auto phi = shapley_value(additive);
    for (AgentId id : players) CHECK(phi.at(id) == doctest::Approx(singles.at(id)).epsilon(1e-12));

    // symmetric game splits equally
    auto symmetric = make_table_game({1, 2, 3}, [](const Coalition& s) {
        return std::sqrt(static_cast<double>(s.size())) * 3.0;
    });
    const auto phis = shapley_value(symmetric);
    for (AgentId id : {1, 2, 3})
        CHECK(phis.at(id) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

    // efficiency by construction
    CHECK(phis.at(1) + phis.at(2) + phis.at(3) ==
          doctest::Approx(symmetric.value({1, 2, 3})).epsilon(1e-12));
}

TEST_CASE("alpha sequence conditions")
{
    CHECK(alpha_condition_check({1.0}));
    CHECK(alpha_condition_check({1.0, 1.0, 1.0}));        // 1 <= 2*1 - 1 holds with equality
    CHECK_FALSE(alpha_condition_check({1.0, 0.5, 1.0 / 3.0})); // 1/3 > 2*(1/2) - 1 = 0
    CHECK_FALSE(alpha_condition_check({1.0, 0.95, 0.91}));     // 0.91 > 0.90
    CHECK(alpha_condition_check({1.0, 0.95, 0.90}));
    CHECK_FALSE(alpha_condition_check({1.0, 1.05}));      // not decreasing
    CHECK_FALSE(alpha_condition_check({1.2, 1.1}));       // exceeds one
}

TEST_CASE("marginal-direction checks")
{
    const Coalition players = {1, 2, 3, 4};
    auto additive =
        make_table_game(players, [](const Coalition& s) { return static_cast<double>(s.size()); });
    CHECK(supermodularity_check(additive));
    CHECK(submodularity_check(additive)); // equality throughout

    auto square = make_table_game(players, [](const Coalition& s) {
        const double k = static_cast<double>(s.size());
        return k * k;
    });
    CHECK(supermodularity_check(square));
    CHECK_FALSE(submodularity_check(square));

    auto sqrt_game = make_table_game(players, [](const Coalition& s) {
        return std::sqrt(static_cast<double>(s.size()));
    });
    CHECK_FALSE(supermodularity_check(sqrt_game));
    CHECK(submodularity_check(sqrt_game));
}

TEST_CASE("shapley lands in the core of submodular cost games")
{
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(3));
        Coalition players;
        std::vector<double> wgt;
        for (int i = 1; i <= n; ++i) {
            players.push_back(i);
            wgt.push_back(rng.uniform(0.2, 2.0));
        }
        // concave transform of a positive modular load: submodular cost
        auto game = make_table_game(players, [wgt](const Coalition& s) {
            double total = 0.0;
            for (AgentId id : s) total += wgt[id - 1];
            return std::sqrt(total);
        });
        REQUIRE(submodularity_check(game));
        CHECK(core_membership(game, shapley_value(game)));
    }
}

TEST_CASE("efficiency survives long satisfy_demand sequences")
{
    Rng rng(47);
    const Coalition players = {1, 2, 3, 4, 5};
    auto game = testutil::random_core_game(rng, players);
    AllocationVector p = testutil::random_efficient_allocation(rng, game, 2.0);
    const double total = game.value(players);
    for (int it = 0; it < 200; ++it) {
        testutil::demand_iteration_step(game, p, rng);
        CHECK(std::abs(p.sum() - total) < 1e-9);
    }
}

TEST_CASE("player cost share splits a joint solution")
{
    // two coupled two-state players optimized jointly
    Rng rng(51);
    auto make_sub = [&](AgentId id) {
        SubsystemModel s;
        s.id = id;
        s.A_self = oracles::random_stable(rng, 2, 0.85);
        s.B_self = oracles::random_matrix(rng, 2, 1);
        s.state_box = Box::unbounded(2);
        s.input_box = Box::unbounded(1);
        return s;
    };
    auto s1 = make_sub(1);
    auto s2 = make_sub(2);
    CouplingBlock blk;
    blk.A = oracles::random_matrix(rng, 2, 2, 0.1);
    blk.B = Mat::Zero(2, 1);
    s1.couplings[2] = blk;
    CouplingBlock blk2;
    blk2.A = oracles::random_matrix(rng, 2, 2, 0.1);
    blk2.B = Mat::Zero(2, 1);
    s2.couplings[1] = blk2;
    ModelSet ms({s1, s2});
    const auto merged = aggregate_coalition(ms, {1, 2});

    MpcWeights mw;
    mw.Q_blocks[{1, 1}] = 2.0 * Mat::Identity(2, 2);
    mw.Q_blocks[{2, 2}] = 2.0 * Mat::Identity(2, 2);
    Mat cross = 0.2 * Mat::Identity(2, 2);
    mw.Q_blocks[{1, 2}] = -cross;
    mw.Q_blocks[{2, 1}] = -cross;
    mw.R_blocks[1] = Mat::Identity(1, 1);
    mw.R_blocks[2] = Mat::Identity(1, 1);
    const auto w = assemble_weights(mw, merged);

    const int Np = 4;
    const Vec x0 = oracles::random_matrix(rng, 4, 1);
    const auto refs = ReferenceTrajectory::zero(Np, 4, 2);
    const auto joint = mpc_control(merged, x0, refs, w, Np);
    REQUIRE(joint.status == MpcStatus::solved);

    const double coop = 4e-3;
    const double v_merger = coalition_value(joint.predicted_cost, coop);
    const double share1 = player_cost_share(merged, w, x0, refs, joint, {1}, coop);
    const double share2 = player_cost_share(merged, w, x0, refs, joint, {2}, coop);
    CHECK(std::abs(share1 + share2 - v_merger) < 1e-9 * (1.0 + std::abs(v_merger)));
}

TEST_CASE("player cost share symmetric case and zero cross weights")
{
    SubsystemModel a, b;
    a.id = 1;
    b.id = 2;
    a.A_self = b.A_self = Mat::Constant(1, 1, 0.9);
    a.B_self = b.B_self = Mat::Constant(1, 1, 1.0);
    a.state_box = b.state_box = Box::unbounded(1);
    a.input_box = b.input_box = Box::unbounded(1);
    CouplingBlock blk;
    blk.A = Mat::Constant(1, 1, 0.1);
    blk.B = Mat::Zero(1, 1);
    a.couplings[2] = blk;
    b.couplings[1] = blk;
    ModelSet ms({a, b});
    const auto merged = aggregate_coalition(ms, {1, 2});

    MpcWeights mw;
    mw.Q_blocks[{1, 1}] = Mat::Identity(1, 1);
    mw.Q_blocks[{2, 2}] = Mat::Identity(1, 1);
    mw.R_blocks[1] = Mat::Identity(1, 1);
    mw.R_blocks[2] = Mat::Identity(1, 1);
    const auto w = assemble_weights(mw, merged);

    const int Np = 3;
    Vec x0(2);
    x0 << 1.5, 1.5; // symmetric state, symmetric players
    const auto refs = ReferenceTrajectory::zero(Np, 2, 2);
    const auto joint = mpc_control(merged, x0, refs, w, Np);
    REQUIRE(joint.status == MpcStatus::solved);
    const double s1 = player_cost_share(merged, w, x0, refs, joint, {1}, 0.0);
    const double s2 = player_cost_share(merged, w, x0, refs, joint, {2}, 0.0);
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-9));

    // zero cross weights: the share is the player's own tracking cost plus
    // its coop slice
    const double coop_total = 0.008;
    const double with_coop = player_cost_share(merged, w, x0, refs, joint, {1}, coop_total);
    CHECK(with_coop == doctest::Approx(s1 + coop_total / 2.0).epsilon(1e-12));
}

TEST_CASE("cost game caches lazily and exports its table")
{
    int evaluations = 0;
    const Coalition players = {1, 2, 3};
    auto game = make_table_game(players, [&evaluations](const Coalition& s) {
        ++evaluations;
        return static_cast<double>(s.size());
    });
    CHECK(game.value({1, 2}) == doctest::Approx(2.0));
    const int after_first = evaluations;
    CHECK(game.value({1, 2}) == doctest::Approx(2.0)); // cached
    CHECK(game.value({3}) == doctest::Approx(1.0));    // complement already cached
    CHECK(evaluations == after_first);

    std::ostringstream os;
    game.write_table(os);
    CHECK(os.str().find("{1,2}") != std::string::npos);
}

TEST_CASE("value cache tolerates concurrent readers")
{
    const Coalition players = {1, 2, 3, 4, 5, 6};
    auto game = make_table_game(players, [](const Coalition& s) {
        double v = 0.0;
        for (AgentId id : s) v += std::sqrt(static_cast<double>(id));
        return v * 0.9;
    });
    std::vector<std::thread> pool;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 4; ++t) {
        pool.emplace_back([&game, &mismatches, t]() {
            Rng rng(100 + t);
            for (int i = 0; i < 2000; ++i) {
                const std::uint32_t mask = 1u + static_cast<std::uint32_t>(rng.below(62));
                const Coalition s = game.subset_of(mask);
                double expect = 0.0;
                for (AgentId id : s) expect += std::sqrt(static_cast<double>(id));
                if (std::abs(game.value(s) - expect * 0.9) > 1e-12) ++mismatches;
            }
        });
    }
    for (auto& th : pool) th.join();
    CHECK(mismatches.load() == 0);
}
