#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "symskill/predicates.hpp"

using namespace symskill;

namespace {

std::vector<Pose> gaussian_cloud(const Vec3& mu, double sigma_pos, const Quat& mu_q,
                                 double sigma_ori, int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    std::vector<Pose> out;
    for (int i = 0; i < n; ++i) {
        const Vec3 p = mu + sigma_pos * Vec3(n01(rng), n01(rng), n01(rng));
        const Vec3 dori = sigma_ori * Vec3(n01(rng), n01(rng), n01(rng));
        out.push_back(Pose{p, mu_q * exp_rotation(dori)});
    }
    return out;
}

}  // namespace

TEST_CASE("degenerate cluster fits to the pose with floored covariance") {
    const Pose p{Vec3(1, 2, 3), exp_rotation(Vec3(0.4, 0, 0))};
    const auto g = fit_se3_gaussian(std::vector<Pose>(5, p));
    CHECK((g.mu_pos - p.position).norm() < 1e-12);
    CHECK((g.cov_pos - kCovFloor * Mat3::Identity()).norm() < 1e-12);
    CHECK((g.cov_ori - kCovFloor * Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("fit recovers synthetic position mean") {
    const auto poses =
        gaussian_cloud(Vec3(1, 2, 3), 0.1, Quat::Identity(), 0.0, 1000, 42);
    const auto g = fit_se3_gaussian(poses);
    CHECK((g.mu_pos - Vec3(1, 2, 3)).norm() < 0.01);
}

TEST_CASE("fit recovers orientation mean far from identity") {
    const Quat mu_q = exp_rotation(Vec3(0, 0, M_PI / 2));
    const auto poses = gaussian_cloud(Vec3::Zero(), 0.0, mu_q, 10.0 * M_PI / 180.0, 500, 7);
    const auto g = fit_se3_gaussian(poses);
    CHECK((g.mu_ori - Vec3(0, 0, M_PI / 2)).norm() < M_PI / 180.0);
}

TEST_CASE("fit rejects single pose") {
    CHECK_THROWS_AS(fit_se3_gaussian({Pose{}}), InsufficientData);
}

TEST_CASE("mahalanobis at the mean and along one sigma") {
    Se3Gaussian g;
    g.mu_pos = Vec3(1, 0, 0);
    g.cov_pos = 0.04 * Mat3::Identity();
    const auto [d0p, d0o] = mahalanobis(g, Pose{g.mu_pos, Quat::Identity()});
    CHECK(d0p < 1e-12);
    CHECK(d0o < 1e-12);
    const auto [d1, _] = mahalanobis(g, Pose{g.mu_pos + Vec3(0.2, 0, 0), Quat::Identity()});
    CHECK(std::abs(d1 - 1.0) < 1e-12);
}

TEST_CASE("mahalanobis matches dense-inverse oracle") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
        Mat3 a;
        for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = n01(rng);
        Se3Gaussian g;
        g.cov_pos = regularize_spd(a * a.transpose() + 0.1 * Mat3::Identity());
        g.cov_ori = regularize_spd(0.01 * Mat3::Identity());
        g.mu_pos = Vec3(n01(rng), n01(rng), n01(rng));
        const Pose q{Vec3(n01(rng), n01(rng), n01(rng)), Quat::Identity()};
        const auto [dp, dori] = mahalanobis(g, q);
        const Vec3 r = q.position - g.mu_pos;
        const double expect = std::sqrt(r.dot(g.cov_pos.inverse() * r));
        CHECK(std::abs(dp - expect) < 1e-8);
        // uniform rescaling of covariance and residual leaves d invariant
        Se3Gaussian g2 = g;
        g2.cov_pos *= 4.0;
        const Pose q2{g.mu_pos + 2.0 * r, Quat::Identity()};
        const auto [dp2, dori2] = mahalanobis(g2, q2);
        CHECK(std::abs(dp2 - dp) < 1e-8);
    }
}

TEST_CASE("holds boundary behavior") {
    RelPosePredicate pred;
    pred.gaussian.cov_pos = Mat3::Identity();
    pred.gaussian.cov_ori = Mat3::Identity();
    pred.eps_pos = 3.0;
    CHECK(holds(pred, Pose{}));
    CHECK_FALSE(holds(pred, Pose{Vec3(3.001, 0, 0), Quat::Identity()}));
    CHECK(holds(pred, Pose{Vec3(2.999, 0, 0), Quat::Identity()}));
}

TEST_CASE("holds consumes only the relative pose (rigid invariance by construction)") {
    RelPosePredicate pred;
    pred.gaussian.mu_pos = Vec3(0.1, 0, 0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    const Pose sub{Vec3(0.1, 0, 0.01), exp_rotation(Vec3(0.01, 0, 0))};
    const Pose ref{Vec3::Zero(), Quat::Identity()};
    const Pose world{Vec3(n01(rng), n01(rng), n01(rng)),
                     exp_rotation(Vec3(n01(rng), n01(rng), n01(rng)))};
    const bool a = holds(pred, relative_pose(ref, sub));
    const bool b = holds(pred, relative_pose(compose(world, ref), compose(world, sub)));
    CHECK(a == b);
}

TEST_CASE("sample_pose statistics and determinism") {
    Se3Gaussian g;
    g.mu_pos = Vec3(0.5, -0.5, 1.0);
    g.cov_pos = 0.01 * Mat3::Identity();
    g.mu_ori = Vec3(0, 0, 0.7);
    g.cov_ori = 1e-4 * Mat3::Identity();

    Vec3 acc = Vec3::Zero();
    const int n = 10000;
    for (int i = 0; i < n; ++i) acc += sample_pose(g, 1000 + i).position;
    acc /= n;
    CHECK((acc - g.mu_pos).norm() < 3.0 * 0.1 / std::sqrt(double(n)) * 3.0);

    CHECK(sample_pose(g, 7).approx_equal(sample_pose(g, 7), 0));

    Se3Gaussian tight = g;
    tight.cov_pos = kCovFloor * Mat3::Identity();
    tight.cov_ori = kCovFloor * Mat3::Identity();
    CHECK((sample_pose(tight, 3).position - g.mu_pos).norm() < 1e-3);
}

TEST_CASE("k_clusters splits a bimodal rest-pose corpus") {
    const ObjectType door{"door_type"}, counter{"counter_type"};
    MotionDataset ds;
    ds.key = {door, counter};
    MotionTriple triple;
    // arc samples between two rest basins plus heavy post-window mass at one end
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    for (int i = 0; i <= 40; ++i) {
        const double f = i / 40.0;
        triple.obj_in_reference.push_back(
            {0.02 * i, Pose{Vec3(0.4 * f, 0.4 * (1 - f * f), 0), Quat::Identity()}});
    }
    for (int i = 0; i < 60; ++i)
        triple.post_window.push_back(
            Pose{Vec3(0.4, 0, 0) + 0.003 * Vec3(n01(rng), n01(rng), n01(rng)),
                 Quat::Identity()});
    MotionTriple back;
    for (int i = 0; i <= 40; ++i) {
        const double f = i / 40.0;
        back.obj_in_reference.push_back(
            {0.02 * i, Pose{Vec3(0.4 * (1 - f), 0.4 * (1 - (1 - f) * (1 - f)), 0),
                            Quat::Identity()}});
    }
    for (int i = 0; i < 60; ++i)
        back.post_window.push_back(
            Pose{0.003 * Vec3(n01(rng), n01(rng), n01(rng)), Quat::Identity()});
    ds.trajectories = {triple, back};

    std::map<std::pair<ObjectType, ObjectType>, MotionDataset> motion{{ds.key, ds}};
    PredicateConfig cfg;
    cfg.k_clusters = 2;
    const auto lib = build_libraries({}, motion, cfg);
    const std::string n0 = motion_predicate_name(door, counter, 0);
    const std::string n1 = motion_predicate_name(door, counter, 1);
    REQUIRE(lib.contains(n0));
    REQUIRE(lib.contains(n1));
    // indices ordered by mean position: cluster 0 near the origin basin
    CHECK(lib.at(n0).gaussian.mu_pos.x() < lib.at(n1).gaussian.mu_pos.x());
    // each rest basin satisfies its own predicate and not the other
    CHECK(holds(lib.at(n0), Pose{}));
    CHECK(holds(lib.at(n1), Pose{Vec3(0.4, 0, 0), Quat::Identity()}));
    CHECK_FALSE(holds(lib.at(n1), Pose{}));
    CHECK_FALSE(holds(lib.at(n0), Pose{Vec3(0.4, 0, 0), Quat::Identity()}));
    // determinism across rebuilds
    const auto lib2 = build_libraries({}, motion, cfg);
    CHECK((lib2.at(n0).gaussian.mu_pos - lib.at(n0).gaussian.mu_pos).norm() == 0.0);
}

TEST_CASE("abstract over empty libraries") {
    WorldState s;
    s.gripper = GripperState::open;
    PredicateLibraries lib;
    const auto atoms = abstract_state(s, lib);
    REQUIRE(atoms.size() == 1);
    CHECK(atoms.count(kGripperOpenAtom) == 1);
}

TEST_CASE("abstract grounds predicates over type-consistent pairs") {
    PredicateLibraries lib;
    RelPosePredicate p;
    p.name = motion_predicate_name(ObjectType{"thing_type"}, ObjectType{"cookware_type"});
    p.subject_type = "thing_type";
    p.reference_type = "cookware_type";
    p.gaussian.cov_pos = 0.01 * Mat3::Identity();
    p.gaussian.cov_ori = 0.1 * Mat3::Identity();
    lib.by_name[p.name] = p;

    WorldState s;
    s.gripper = GripperState::closed;
    s.objects["pan"] = ObjectInstance{Pose{Vec3(1, 1, 0), Quat::Identity()},
                                      ObjectType{"cookware_type"}};
    s.objects["banana"] = ObjectInstance{Pose{Vec3(1, 1, 0), Quat::Identity()},
                                         ObjectType{"thing_type"}};
    s.objects["block"] = ObjectInstance{Pose{Vec3(5, 5, 5), Quat::Identity()},
                                        ObjectType{"thing_type"}};
    const auto atoms = abstract_state(s, lib);
    CHECK(atoms.count(GroundAtom{p.name, {"banana", "pan"}}) == 1);
    CHECK(atoms.count(GroundAtom{p.name, {"block", "pan"}}) == 0);
    CHECK(atoms.count(kGripperOpenAtom) == 0);
    // purity: equal states give equal abstractions
    CHECK(abstract_state(s, lib) == atoms);
}
