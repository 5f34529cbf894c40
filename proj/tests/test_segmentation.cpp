#include <catch2/catch_amalgamated.hpp>

#include "symskill/segmentation.hpp"

using namespace symskill;

namespace {

constexpr double kDt = 0.02;

// A minimal scripted pick-place: dwell, ee approach, transport of "block"
// toward "plate", dwell. Returns the demo plus ground-truth boundaries.
struct ScriptedDemo {
    Demonstration demo;
    int truth_start{};
    int truth_stop{};
    int truth_pre0{};
};

ScriptedDemo make_pick_place(double t_offset = 0.0, const Pose& world = Pose::identity()) {
    ScriptedDemo out;
    const Vec3 block0(0.5, 0.0, 0.0), plate(0.0, 0.6, 0.0), ee0(0.0, 0.0, 0.3);
    Vec3 ee = ee0, block = block0;
    double t = t_offset;
    int idx = 0;
    auto push = [&](GripperState g) {
        WorldState s;
        s.ee_pose = compose(world, Pose{ee, Quat::Identity()});
        s.gripper = g;
        s.objects["block"] = ObjectInstance{compose(world, Pose{block, Quat::Identity()}),
                                            ObjectType{"thing_type"}};
        s.objects["plate"] =
            ObjectInstance{compose(world, Pose{plate, Quat::Identity()}), ObjectType{"cookware_type"}};
        out.demo.records.emplace_back(t, s);
        t += kDt;
        ++idx;
    };
    for (int i = 0; i < 50; ++i) push(GripperState::open);  // idle 1 s
    out.truth_pre0 = idx;
    for (int i = 0; i < 75; ++i) {  // approach 1.5 s
        ee += (block0 - ee0) / 75.0;
        push(GripperState::open);
    }
    out.truth_start = idx;
    const Vec3 grasp_off = block - ee;
    for (int i = 0; i < 75; ++i) {  // transport 1.5 s
        ee += (plate - block0) / 75.0;
        block = ee + grasp_off;
        push(GripperState::closed);
    }
    out.truth_stop = idx - 1;
    for (int i = 0; i < 150; ++i) push(GripperState::open);  // settle 3 s
    return out;
}

}  // namespace

TEST_CASE("all-static demo yields no episodes") {
    Demonstration demo;
    for (int i = 0; i < 100; ++i) {
        WorldState s;
        s.objects["block"] = ObjectInstance{Pose{Vec3(1, 0, 0), Quat::Identity()},
                                            ObjectType{"thing_type"}};
        demo.records.emplace_back(kDt * i, s);
    }
    CHECK(detect_episodes(demo).empty());
}

TEST_CASE("scripted pick-place boundaries recovered") {
    const auto sd = make_pick_place();
    const auto eps = detect_episodes(sd.demo);
    REQUIRE(eps.size() == 1);
    const auto& ep = eps[0];
    CHECK(ep.motion_object == "block");
    CHECK(std::abs(ep.t_start() - sd.truth_start) <= 2);
    CHECK(std::abs(ep.t_stop() - sd.truth_stop) <= 2);
    CHECK(ep.premotion.end == ep.motion.begin);
    CHECK(!ep.premotion.empty());
}

TEST_CASE("two objects moved simultaneously rejected") {
    Demonstration demo;
    for (int i = 0; i < 200; ++i) {
        WorldState s;
        const double x = i < 50 || i >= 150 ? 0.0 : 0.02 * (i - 50);
        s.objects["a"] = ObjectInstance{Pose{Vec3(x, 0, 0), Quat::Identity()}, ObjectType{"thing_type"}};
        s.objects["b"] = ObjectInstance{Pose{Vec3(0, x, 0), Quat::Identity()}, ObjectType{"thing_type"}};
        demo.records.emplace_back(kDt * i, s);
    }
    CHECK_THROWS_AS(detect_episodes(demo), MultiObjectMotion);
}

TEST_CASE("time shift leaves index boundaries unchanged") {
    const auto a = detect_episodes(make_pick_place(0.0).demo);
    const auto b = detect_episodes(make_pick_place(137.5).demo);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].motion.begin == b[i].motion.begin);
        CHECK(a[i].motion.end == b[i].motion.end);
        CHECK(a[i].premotion.begin == b[i].premotion.begin);
    }
}

TEST_CASE("aggregation groups by type and is rigid-transform invariant") {
    auto sd1 = make_pick_place();
    const Pose world{Vec3(2.0, -1.0, 0.5), exp_rotation(Vec3(0.3, -0.2, 1.1))};
    auto sd2 = make_pick_place(0.0, world);
    auto eps1 = detect_episodes(sd1.demo);
    auto eps2 = detect_episodes(sd2.demo);
    REQUIRE(eps1.size() == 1);
    REQUIRE(eps2.size() == 1);
    eps1[0].reference_object = "plate";
    eps2[0].reference_object = "plate";

    auto [pre1, mot1] = aggregate_datasets({sd1.demo}, {eps1});
    auto [pre2, mot2] = aggregate_datasets({sd2.demo}, {eps2});
    REQUIRE(pre1.count(ObjectType{"thing_type"}) == 1);
    REQUIRE(mot1.size() == 1);
    const auto key = std::make_pair(ObjectType{"thing_type"}, ObjectType{"cookware_type"});
    REQUIRE(mot1.count(key) == 1);

    const auto& ta = mot1.at(key).trajectories[0];
    const auto& tb = mot2.at(key).trajectories[0];
    REQUIRE(ta.ee_in_reference.size() == tb.ee_in_reference.size());
    for (size_t i = 0; i < ta.ee_in_reference.size(); ++i)
        CHECK(ta.ee_in_reference[i].pose.approx_equal(tb.ee_in_reference[i].pose, 1e-9));

    // relative poses match the geometry oracle per-sample
    const auto& ep = eps1[0];
    for (int i = ep.motion.begin; i < ep.motion.end; ++i) {
        const auto& s = sd1.demo.state_at(i);
        const Pose expect = relative_pose(s.object("plate").pose, s.ee_pose);
        CHECK(ta.ee_in_reference[i - ep.motion.begin].pose.approx_equal(expect, 1e-12));
    }
}

TEST_CASE("episodes of the same type pair merge under one key") {
    auto sd1 = make_pick_place();
    auto sd2 = make_pick_place();
    auto e1 = detect_episodes(sd1.demo);
    auto e2 = detect_episodes(sd2.demo);
    e1[0].reference_object = "plate";
    e2[0].reference_object = "plate";
    auto [pre, mot] = aggregate_datasets({sd1.demo, sd2.demo}, {e1, e2});
    const auto key = std::make_pair(ObjectType{"thing_type"}, ObjectType{"cookware_type"});
    REQUIRE(mot.count(key) == 1);
    CHECK(mot.at(key).trajectories.size() == 2);
    CHECK(pre.at(ObjectType{"thing_type"}).trajectories.size() == 2);
}
