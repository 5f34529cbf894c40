#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "symskill/operators.hpp"

using namespace symskill;

namespace {

GroundAtom ga(const std::string& p, std::vector<std::string> args = {}) {
    return GroundAtom{p, std::move(args)};
}

// A pick-style transition: approach object `obj`, grasp it.
Transition pick_transition(const std::string& obj, const std::string& extra_source = "") {
    Transition tr;
    tr.s0.insert(ga("GripperOpen"));
    if (!extra_source.empty()) tr.s0.insert(ga("RelPose(thing,drawer)-0", {obj, extra_source}));
    tr.s1 = tr.s0;
    tr.s1.erase(ga("GripperOpen"));
    tr.s1.insert(ga("Gripper-in-thing", {obj}));
    tr.held = tr.s0;
    tr.segment = {0, 0, Phase::premotion};
    tr.motion_object = obj;
    tr.object_types[obj] = "thing_type";
    if (!extra_source.empty()) tr.object_types[extra_source] = "drawer_type";
    return tr;
}

// A place-style transition: transport `obj` into `ref`.
Transition place_transition(const std::string& obj, const std::string& ref) {
    Transition tr;
    tr.s0.insert(ga("Gripper-in-thing", {obj}));
    tr.s1.insert(ga("RelPose(thing,cookware)-0", {obj, ref}));
    tr.s1.insert(ga("GripperOpen"));
    tr.held.insert(ga("Gripper-in-thing", {obj}));
    tr.segment = {0, 0, Phase::motion};
    tr.motion_object = obj;
    tr.reference_object = ref;
    tr.object_types[obj] = "thing_type";
    tr.object_types[ref] = "cookware_type";
    return tr;
}

}  // namespace

TEST_CASE("induction groups by lifted effects across instances") {
    std::vector<Transition> trs{pick_transition("block"), pick_transition("banana"),
                                place_transition("block", "pan"),
                                place_transition("banana", "pan")};
    const auto ops = induce_operators(trs);
    REQUIRE(ops.size() == 2);  // one pick, one place, merged across instances
    const Operator* pick = nullptr;
    const Operator* place = nullptr;
    for (const auto& op : ops)
        (op.phase == Phase::premotion ? pick : place) = &op;
    REQUIRE(pick);
    REQUIRE(place);
    CHECK(pick->segments.size() == 2);
    CHECK(pick->add.count(LiftedAtom{"Gripper-in-thing", {{"?obj", "thing_type"}}}) == 1);
    CHECK(pick->del.count(LiftedAtom{"GripperOpen", {}}) == 1);
    CHECK(pick->pre.count(LiftedAtom{"GripperOpen", {}}) == 1);
    CHECK(place->pre.count(LiftedAtom{"Gripper-in-thing", {{"?obj", "thing_type"}}}) == 1);
    CHECK(place->add.count(LiftedAtom{
              "RelPose(thing,cookware)-0",
              {{"?obj", "thing_type"}, {"?ref", "cookware_type"}}}) == 1);
    CHECK(place->maintain.count(LiftedAtom{"Gripper-in-thing", {{"?obj", "thing_type"}}}) == 1);
}

TEST_CASE("different effects never merge") {
    std::vector<Transition> trs{pick_transition("block"), pick_transition("block", "red_plate")};
    // second pick also deletes nothing extra but has a drawer atom in s0 only
    const auto ops = induce_operators(trs);
    REQUIRE(ops.size() == 1);  // same effects -> merged; drawer atom intersected out of pre
    CHECK(ops[0].pre.size() == 1);

    auto tr3 = pick_transition("block");
    tr3.s1.insert(ga("RelPose(thing,cookware)-0", {"block", "pan"}));
    tr3.object_types["pan"] = "cookware_type";
    const auto ops2 = induce_operators({pick_transition("banana"), tr3});
    CHECK(ops2.size() == 2);
}

TEST_CASE("identity transitions are dropped") {
    Transition tr;
    tr.s0.insert(ga("GripperOpen"));
    tr.s1 = tr.s0;
    tr.held = tr.s0;
    tr.motion_object = "block";
    tr.object_types["block"] = "thing_type";
    CHECK(induce_operators({tr}).empty());
}

TEST_CASE("duplicate transitions do not change the intersections") {
    std::vector<Transition> base{pick_transition("block", "red_plate"),
                                 place_transition("block", "pan")};
    auto dup = base;
    dup.push_back(pick_transition("block", "red_plate"));
    dup.push_back(place_transition("block", "pan"));
    const auto a = induce_operators(base);
    const auto b = induce_operators(dup);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pre == b[i].pre);
        CHECK(a[i].add == b[i].add);
        CHECK(a[i].del == b[i].del);
        CHECK(a[i].maintain == b[i].maintain);
    }
}

TEST_CASE("induction is order independent") {
    std::vector<Transition> trs{pick_transition("block"), place_transition("block", "pan"),
                                pick_transition("banana"), place_transition("banana", "pan")};
    auto rev = trs;
    std::reverse(rev.begin(), rev.end());
    const auto a = induce_operators(trs);
    const auto b = induce_operators(rev);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pre == b[i].pre);
        CHECK(a[i].add == b[i].add);
        CHECK(a[i].del == b[i].del);
    }
}

TEST_CASE("replay consistency on source transitions") {
    std::vector<Transition> trs{pick_transition("block"), place_transition("block", "pan")};
    const auto ops = induce_operators(trs);
    for (const auto& op : ops) {
        for (const auto& seg : op.segments) {
            const auto& tr = seg.phase == Phase::premotion ? trs[0] : trs[1];
            std::map<std::string, std::string> binding;
            for (const auto& v : op.params)
                binding[v.name] = v.name == "?ref" ? "pan" : "block";
            auto g = ground(op, binding, tr.object_types);
            REQUIRE(g.has_value());
            CHECK(g->applicable(tr.s0));
            const auto s1 = g->apply(tr.s0);
            for (const auto& a : g->instantiate_set(op.add)) CHECK(s1.count(a) == 1);
            for (const auto& a : g->instantiate_set(op.del)) CHECK(s1.count(a) == 0);
        }
    }
}

TEST_CASE("ground type checking and application") {
    const auto ops = induce_operators({place_transition("block", "pan")});
    REQUIRE(ops.size() == 1);
    const auto& op = ops[0];
    std::map<std::string, std::string> types{{"block", "thing_type"},
                                             {"pan", "cookware_type"}};
    std::map<std::string, std::string> bad{{"?obj", "pan"}, {"?ref", "block"}};
    CHECK_THROWS_AS(ground(op, bad, types), TypeMismatch);

    std::map<std::string, std::string> good{{"?obj", "block"}, {"?ref", "pan"}};
    auto g = ground(op, good, types);
    REQUIRE(g.has_value());

    // random-state set-algebra oracle: apply == (s \ del) U add
    std::mt19937_64 rng(5);
    std::vector<GroundAtom> universe{ga("GripperOpen"), ga("Gripper-in-thing", {"block"}),
                                     ga("RelPose(thing,cookware)-0", {"block", "pan"}),
                                     ga("Gripper-in-thing", {"banana"})};
    for (int trial = 0; trial < 30; ++trial) {
        AbstractState s;
        for (const auto& a : universe)
            if (rng() % 2) s.insert(a);
        const auto out = g->apply(s);
        AbstractState expect = s;
        for (const auto& a : g->instantiate_set(g->op->del)) expect.erase(a);
        for (const auto& a : g->instantiate_set(g->op->add)) expect.insert(a);
        CHECK(out == expect);
    }
}
