#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <random>

#include "symskill/planner.hpp"

using namespace symskill;

namespace {

GroundAtom ga(const std::string& p, std::vector<std::string> args = {}) {
    return GroundAtom{p, std::move(args)};
}

LiftedAtom la(const std::string& p, std::vector<Variable> args = {}) {
    return LiftedAtom{p, std::move(args)};
}

const Variable kObj{"?obj", "thing_type"};
const Variable kRef{"?ref", "cookware_type"};
const Variable kDoor{"?door", "drawer_type"};

std::vector<Operator> kitchen_ops() {
    Operator pick;
    pick.name = "Pick-thing";
    pick.params = {kObj};
    pick.pre = {la("GripperOpen")};
    pick.add = {la("Gripper-in-thing", {kObj})};
    pick.del = {la("GripperOpen")};

    Operator place;
    place.name = "Move-In";
    place.params = {kObj, kRef};
    place.pre = {la("Gripper-in-thing", {kObj})};
    place.add = {la("In", {kObj, kRef}), la("GripperOpen")};
    place.del = {la("Gripper-in-thing", {kObj})};

    Operator open;
    open.name = "Move-Open";
    open.params = {kDoor};
    open.pre = {la("GripperOpen"), la("Closed", {kDoor})};
    open.add = {la("Open", {kDoor})};
    open.del = {la("Closed", {kDoor})};

    Operator close;
    close.name = "Move-Closed";
    close.params = {kDoor};
    close.pre = {la("GripperOpen"), la("Open", {kDoor})};
    close.add = {la("Closed", {kDoor})};
    close.del = {la("Open", {kDoor})};

    return {pick, place, open, close};
}

// uniform-cost breadth-first search, the independent optimality reference
std::optional<int> bfs_optimal(const AbstractState& s0, const Goal& goal,
                               const std::vector<Operator>& ops,
                               const std::map<std::string, std::string>& types,
                               int depth_cap = 12) {
    const auto grounded = ground_all(ops, types);
    std::set<AbstractState> seen{s0};
    std::deque<std::pair<AbstractState, int>> q{{s0, 0}};
    while (!q.empty()) {
        auto [s, d] = q.front();
        q.pop_front();
        if (detail::unsatisfied(s, goal) == 0) return d;
        if (d >= depth_cap) continue;
        for (const auto& op : grounded) {
            if (!op.applicable(s)) continue;
            auto succ = op.apply(s);
            if (seen.insert(succ).second) q.emplace_back(std::move(succ), d + 1);
        }
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("ground_all enumerates type-consistent distinct bindings") {
    const auto ops = kitchen_ops();
    std::map<std::string, std::string> types{{"block", "thing_type"},
                                             {"banana", "thing_type"},
                                             {"pan", "cookware_type"},
                                             {"cab", "drawer_type"}};
    const auto g = ground_all(ops, types);
    // pick: 2, place: 2*1, open: 1, close: 1
    CHECK(g.size() == 6);

    // exhaustive enumeration oracle on random typed scenes
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::map<std::string, std::string> t;
        const std::vector<std::string> pool{"thing_type", "cookware_type", "drawer_type"};
        const int n = 1 + rng() % 6;
        for (int i = 0; i < n; ++i) t["obj" + std::to_string(i)] = pool[rng() % 3];
        size_t expect = 0;
        std::map<std::string, size_t> counts;
        for (const auto& [id, ty] : t) counts[ty]++;
        for (const auto& op : ops) {
            size_t prod = 1;
            for (const auto& v : op.params) prod *= counts[v.type];
            expect += prod;
        }
        CHECK(ground_all(ops, t).size() == expect);
    }
}

TEST_CASE("ground_all with no objects of a required type") {
    std::map<std::string, std::string> types{{"pan", "cookware_type"}};
    const auto g = ground_all(kitchen_ops(), types);
    CHECK(g.empty());
}

TEST_CASE("goal already satisfied gives the empty skeleton") {
    AbstractState s0{ga("GripperOpen")};
    Goal goal{{ga("GripperOpen")}};
    const auto sk = plan(s0, goal, kitchen_ops(), {});
    REQUIRE(sk.has_value());
    CHECK(sk->steps.empty());
    CHECK(validate(*sk, s0, goal));
}

TEST_CASE("open, pick and place, then close") {
    std::map<std::string, std::string> types{{"cheese", "thing_type"},
                                             {"pan", "cookware_type"},
                                             {"cab", "drawer_type"}};
    AbstractState s0{ga("GripperOpen"), ga("Closed", {"cab"})};
    Goal goal{{ga("In", {"cheese", "pan"}), ga("Closed", {"cab"})}};

    // opening the door is forced by making the pick depend on it
    auto ops = kitchen_ops();
    ops[0].params.push_back(kDoor);
    ops[0].pre.insert(la("Open", {kDoor}));

    const auto sk = plan(s0, goal, ops, types);
    REQUIRE(sk.has_value());
    REQUIRE(sk->steps.size() == 4);
    CHECK(sk->steps[0].str() == "Move-Open(cab)");
    CHECK(sk->steps[1].str() == "Pick-thing(cheese,cab)");
    CHECK(sk->steps[2].str() == "Move-In(cheese,pan)");
    CHECK(sk->steps[3].str() == "Move-Closed(cab)");
    CHECK(validate(*sk, s0, goal));
}

TEST_CASE("unreachable goal") {
    AbstractState s0{ga("GripperOpen")};
    Goal goal{{ga("In", {"cheese", "pan"})}};
    CHECK_FALSE(plan(s0, goal, kitchen_ops(), {}).has_value());
}

TEST_CASE("node cap raises") {
    std::map<std::string, std::string> types;
    for (int i = 0; i < 6; ++i) types["t" + std::to_string(i)] = "thing_type";
    for (int i = 0; i < 3; ++i) types["c" + std::to_string(i)] = "cookware_type";
    AbstractState s0{ga("GripperOpen")};
    Goal goal{{ga("Never")}};
    PlannerConfig cfg;
    cfg.node_cap = 10;
    CHECK_THROWS_AS(plan(s0, goal, kitchen_ops(), types, cfg), SearchBudgetExceeded);
}

TEST_CASE("validate rejects mutated skeletons") {
    std::map<std::string, std::string> types{{"block", "thing_type"},
                                             {"pan", "cookware_type"}};
    AbstractState s0{ga("GripperOpen")};
    Goal goal{{ga("In", {"block", "pan"})}};
    const auto ops = kitchen_ops();
    const auto sk = plan(s0, goal, ops, types);
    REQUIRE(sk.has_value());
    REQUIRE(sk->steps.size() == 2);
    CHECK(validate(*sk, s0, goal));
    for (size_t drop = 0; drop < sk->steps.size(); ++drop) {
        PlanSkeleton mut;
        for (size_t i = 0; i < sk->steps.size(); ++i)
            if (i != drop) mut.steps.push_back(sk->steps[i]);
        CHECK_FALSE(validate(mut, s0, goal));
    }
}

TEST_CASE("plan length matches BFS on random solvable instances") {
    const auto ops = kitchen_ops();
    std::mt19937_64 rng(2024);
    int solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, std::string> types;
        const int nt = 1 + rng() % 3, nc = 1 + rng() % 2, nd = rng() % 2;
        for (int i = 0; i < nt; ++i) types["t" + std::to_string(i)] = "thing_type";
        for (int i = 0; i < nc; ++i) types["c" + std::to_string(i)] = "cookware_type";
        for (int i = 0; i < nd; ++i) types["d" + std::to_string(i)] = "drawer_type";

        AbstractState s0{ga("GripperOpen")};
        for (int i = 0; i < nd; ++i)
            s0.insert(ga(rng() % 2 ? "Closed" : "Open", {"d" + std::to_string(i)}));

        // random walk to a reachable state, then demand its placement atoms
        const auto grounded = ground_all(ops, types);
        AbstractState s = s0;
        const int walk = rng() % 7;
        for (int step = 0; step < walk; ++step) {
            std::vector<const GroundOperator*> app;
            for (const auto& g : grounded)
                if (g.applicable(s)) app.push_back(&g);
            if (app.empty()) break;
            s = app[rng() % app.size()]->apply(s);
        }
        Goal goal;
        for (const auto& a : s)
            if (a.predicate != "GripperOpen" && rng() % 2) goal.atoms.insert(a);
        if (goal.atoms.empty()) goal.atoms.insert(ga("GripperOpen"));

        const auto oracle = bfs_optimal(s0, goal, ops, types);
        const auto sk = plan(s0, goal, ops, types);
        REQUIRE(sk.has_value() == oracle.has_value());
        if (!oracle) continue;
        ++solved;
        CHECK(static_cast<int>(sk->steps.size()) == *oracle);
        CHECK(validate(*sk, s0, goal));
    }
    CHECK(solved > 100);
}

TEST_CASE("planning is deterministic") {
    std::map<std::string, std::string> types{{"t0", "thing_type"}, {"t1", "thing_type"},
                                             {"c0", "cookware_type"},
                                             {"c1", "cookware_type"}};
    AbstractState s0{ga("GripperOpen")};
    Goal goal{{ga("In", {"t0", "c1"}), ga("In", {"t1", "c0"})}};
    const auto a = plan(s0, goal, kitchen_ops(), types);
    const auto b = plan(s0, goal, kitchen_ops(), types);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    REQUIRE(a->steps.size() == b->steps.size());
    for (size_t i = 0; i < a->steps.size(); ++i)
        CHECK(a->steps[i].str() == b->steps[i].str());
}
