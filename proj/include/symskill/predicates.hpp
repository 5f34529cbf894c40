#pragma once

// Relative-pose predicates: independent position/orientation Gaussians with
// Mahalanobis-threshold classifiers. The fitted ellipsoids double as samplers
// for goal-pose resampling during recovery.

#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "symskill/geometry.hpp"
#include "symskill/segmentation.hpp"
#include "symskill/world.hpp"

namespace symskill {

inline constexpr double kCovFloor = 1e-8;  // min covariance eigenvalue

inline Mat3 regularize_spd(const Mat3& m, double floor_eig = kCovFloor) {
    const Mat3 sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(sym);
    Vec3 ev = es.eigenvalues().cwiseMax(floor_eig);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct Se3Gaussian {
    Vec3 mu_pos{Vec3::Zero()};
    Mat3 cov_pos{Mat3::Identity()};
    Vec3 mu_ori{Vec3::Zero()};  // rotation-vector mean
    Mat3 cov_ori{Mat3::Identity()};

    Quat mean_quat() const { return exp_rotation(mu_ori); }
};

// Intrinsic mean of a set of rotations: log-map to the running mean's
// tangent, average, update.
inline Quat rotation_mean(const std::vector<Quat>& qs, int max_iters = 50,
                          double tol = 1e-10) {
    Quat mu = canonical(qs.front());
    for (int it = 0; it < max_iters; ++it) {
        Vec3 acc = Vec3::Zero();
        for (const auto& q : qs) acc += log_rotation(mu.conjugate() * q);
        acc /= static_cast<double>(qs.size());
        mu = canonical(mu * exp_rotation(acc));
        if (acc.norm() < tol) break;
    }
    return mu;
}

inline Se3Gaussian fit_se3_gaussian(const std::vector<Pose>& poses) {
    if (poses.size() < 2) throw InsufficientData("fit_se3_gaussian: need >= 2 poses");
    const double n = static_cast<double>(poses.size());
    Se3Gaussian g;
    for (const auto& p : poses) g.mu_pos += p.position;
    g.mu_pos /= n;
    Mat3 cp = Mat3::Zero();
    for (const auto& p : poses) {
        const Vec3 r = p.position - g.mu_pos;
        cp += r * r.transpose();
    }
    g.cov_pos = regularize_spd(cp / n);

    std::vector<Quat> qs;
    qs.reserve(poses.size());
    for (const auto& p : poses) qs.push_back(p.orientation);
    const Quat mu_q = rotation_mean(qs);
    g.mu_ori = log_rotation(mu_q);
    Mat3 co = Mat3::Zero();
    for (const auto& q : qs) {
        const Vec3 r = log_rotation(mu_q.conjugate() * q);
        co += r * r.transpose();
    }
    g.cov_ori = regularize_spd(co / n);
    return g;
}

inline std::pair<double, double> mahalanobis(const Se3Gaussian& g, const Pose& pose) {
    const Vec3 rp = pose.position - g.mu_pos;
    const double d_pos = std::sqrt(rp.dot(g.cov_pos.ldlt().solve(rp)));
    const Vec3 ro = log_rotation(g.mean_quat().conjugate() * pose.orientation);
    const double d_ori = std::sqrt(ro.dot(g.cov_ori.ldlt().solve(ro)));
    return {d_pos, d_ori};
}

// Draws a pose from the Gaussian; deterministic under a fixed seed.
inline Pose sample_pose(const Se3Gaussian& g, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    auto draw3 = [&] { return Vec3(n01(rng), n01(rng), n01(rng)); };
    const Mat3 lp = Eigen::LLT<Mat3>(g.cov_pos).matrixL();
    const Mat3 lo = Eigen::LLT<Mat3>(g.cov_ori).matrixL();
    const Vec3 p = g.mu_pos + lp * draw3();
    const Quat q = g.mean_quat() * exp_rotation(lo * draw3());
    return Pose{p, q};
}

inline constexpr const char* kEeSubject = "ee";

struct RelPosePredicate {
    std::string name;
    std::string subject_type;    // object type name, or "ee"
    std::string reference_type;  // object type name
    Se3Gaussian gaussian;
    double eps_pos = 3.0;
    double eps_ori = 3.0;

    bool is_ee_predicate() const { return subject_type == kEeSubject; }
};

inline bool holds(const RelPosePredicate& pred, const Pose& subject_in_reference) {
    const auto [dp, dori] = mahalanobis(pred.gaussian, subject_in_reference);
    return dp <= pred.eps_pos && dori <= pred.eps_ori;
}

struct GroundAtom {
    std::string predicate;
    std::vector<std::string> args;

    bool operator==(const GroundAtom&) const = default;
    auto operator<=>(const GroundAtom&) const = default;

    std::string str() const {
        std::string s = predicate + "(";
        for (size_t i = 0; i < args.size(); ++i) s += (i ? "," : "") + args[i];
        return s + ")";
    }
};

inline const GroundAtom kGripperOpenAtom{"GripperOpen", {}};

using AbstractState = std::set<GroundAtom>;

struct PredicateLibraries {
    std::map<std::string, RelPosePredicate> by_name;
    double eps_pos = 3.0;
    double eps_ori = 3.0;

    const RelPosePredicate& at(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw Error("unknown predicate: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return by_name.count(name) > 0; }
};

// "thing_type" -> "thing"
inline std::string type_stem(const std::string& type_name) {
    constexpr const char* suffix = "_type";
    if (type_name.size() > 5 && type_name.ends_with(suffix))
        return type_name.substr(0, type_name.size() - 5);
    return type_name;
}

inline std::string ee_predicate_name(const ObjectType& obj_type) {
    return "Gripper-in-" + type_stem(obj_type.name);
}

inline std::string motion_predicate_name(const ObjectType& obj_type,
                                         const ObjectType& ref_type, int index = 0) {
    return "RelPose(" + type_stem(obj_type.name) + "," + type_stem(ref_type.name) + ")-" +
           std::to_string(index);
}

struct PredicateConfig {
    double eps_pos = 3.0;
    double eps_ori = 3.0;
    // fit ψ_ee over the full motion segment (paper behavior) or only a
    // trailing window of samples per trajectory
    int ee_trailing_window = 0;  // 0 = full segment
    // object-object predicates per type pair: 1 keeps a single Gaussian,
    // k > 1 is an upper bound on rest basins per pair. Post-window (rest)
    // positions are k-means clustered and under-separated clusters merged
    // back, so distinct rest poses (an open vs a closed door) become
    // distinct symbols while unimodal pairs keep a single Gaussian.
    int k_clusters = 1;
    uint64_t seed = 0;
};

namespace detail {

inline int nearest_center(const std::vector<Vec3>& centers, const Vec3& p) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centers.size(); ++c) {
        const double d = (p - centers[c]).squaredNorm();
        if (d < bd) {
            bd = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

// Lloyd iterations with k-means++ seeding over rest (post-window) positions,
// followed by an agglomerative merge: clusters whose center gap is under
// 4x their summed rms spreads are not genuinely separate basins and are
// collapsed, so k acts as an upper bound and unimodal pools keep one
// Gaussian. Surviving centers are ordered lexicographically so predicate
// indices are stable across runs.
inline std::vector<Vec3> rest_cluster_centers(const std::vector<Vec3>& pts, int k,
                                              uint64_t seed) {
    const int n = static_cast<int>(pts.size());
    std::mt19937_64 rng(seed);
    std::vector<Vec3> centers;
    std::uniform_int_distribution<int> pick(0, n - 1);
    centers.push_back(pts[pick(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, (pts[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        if (total <= 0) {
            centers.push_back(pts[pick(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0, total);
        double r = u(rng), acc = 0;
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r) {
                chosen = i;
                break;
            }
        }
        centers.push_back(pts[chosen]);
    }

    auto lloyd = [&](std::vector<Vec3>& cs) {
        std::vector<int> assign(n, 0);
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                const int best = nearest_center(cs, pts[i]);
                if (assign[i] != best) {
                    assign[i] = best;
                    changed = true;
                }
            }
            std::vector<Vec3> sums(cs.size(), Vec3::Zero());
            std::vector<int> counts(cs.size(), 0);
            for (int i = 0; i < n; ++i) {
                sums[assign[i]] += pts[i];
                counts[assign[i]]++;
            }
            for (size_t c = 0; c < cs.size(); ++c)
                if (counts[c] > 0) cs[c] = sums[c] / counts[c];
            if (!changed) break;
        }
        // drop empty clusters
        std::vector<Vec3> kept;
        std::vector<int> counts(cs.size(), 0);
        for (int i = 0; i < n; ++i) counts[nearest_center(cs, pts[i])]++;
        for (size_t c = 0; c < cs.size(); ++c)
            if (counts[c] > 0) kept.push_back(cs[c]);
        cs = kept;
        return assign;
    };
    lloyd(centers);

    while (centers.size() > 1) {
        std::vector<double> rms(centers.size(), 0);
        std::vector<int> counts(centers.size(), 0);
        for (int i = 0; i < n; ++i) {
            const int c = nearest_center(centers, pts[i]);
            rms[c] += (pts[i] - centers[c]).squaredNorm();
            counts[c]++;
        }
        for (size_t c = 0; c < centers.size(); ++c)
            rms[c] = std::sqrt(rms[c] / std::max(counts[c], 1));
        size_t bi = 0, bj = 1;
        double bd = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < centers.size(); ++i)
            for (size_t j = i + 1; j < centers.size(); ++j) {
                const double d = (centers[i] - centers[j]).norm();
                if (d < bd) {
                    bd = d;
                    bi = i;
                    bj = j;
                }
            }
        if (bd >= 4.0 * (rms[bi] + rms[bj])) break;
        centers[bi] = (double(counts[bi]) * centers[bi] + double(counts[bj]) * centers[bj]) /
                      double(counts[bi] + counts[bj]);
        centers.erase(centers.begin() + bj);
        lloyd(centers);
    }

    std::sort(centers.begin(), centers.end(), [](const Vec3& a, const Vec3& b) {
        return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
    });
    return centers;
}

}  // namespace detail

inline PredicateLibraries build_libraries(
    const std::map<ObjectType, PreDataset>& /*pre*/,
    const std::map<std::pair<ObjectType, ObjectType>, MotionDataset>& motion,
    const PredicateConfig& cfg = {}) {
    PredicateLibraries lib;
    lib.eps_pos = cfg.eps_pos;
    lib.eps_ori = cfg.eps_ori;

    // ψ_ee per motion-object type, fitted over motion-segment {ᵒⁱT_ee}
    std::map<ObjectType, std::vector<Pose>> ee_samples;
    for (const auto& [key, ds] : motion) {
        for (const auto& triple : ds.trajectories) {
            const auto& traj = triple.ee_in_motion_obj;
            size_t begin = 0;
            if (cfg.ee_trailing_window > 0 &&
                traj.size() > static_cast<size_t>(cfg.ee_trailing_window))
                begin = traj.size() - cfg.ee_trailing_window;
            for (size_t i = begin; i < traj.size(); ++i)
                ee_samples[key.first].push_back(traj[i].pose);
        }
    }
    for (const auto& [ty, samples] : ee_samples) {
        if (samples.size() < 2) continue;
        RelPosePredicate p;
        p.name = ee_predicate_name(ty);
        p.subject_type = kEeSubject;
        p.reference_type = ty.name;
        p.gaussian = fit_se3_gaussian(samples);
        p.eps_pos = cfg.eps_pos;
        p.eps_ori = cfg.eps_ori;
        lib.by_name[p.name] = std::move(p);
    }

    // ᵒʳψ_{o^i} per (motion type, reference type), fitted over {ᵒʳT_{o^i}}
    // augmented with the post-motion window
    for (const auto& [key, ds] : motion) {
        std::vector<Pose> samples;
        for (const auto& triple : ds.trajectories) {
            for (const auto& tp : triple.obj_in_reference) samples.push_back(tp.pose);
            for (const auto& p : triple.post_window) samples.push_back(p);
        }
        if (samples.size() < 2) continue;
        std::vector<int> assign(samples.size(), 0);
        int n_clusters = 1;
        if (cfg.k_clusters > 1) {
            std::vector<Vec3> posts;
            for (const auto& triple : ds.trajectories)
                for (const auto& p : triple.post_window) posts.push_back(p.position);
            const int k = std::min<int>(cfg.k_clusters, posts.size() / 2);
            if (k > 1) {
                const auto centers = detail::rest_cluster_centers(posts, k, cfg.seed);
                if (centers.size() > 1) {
                    n_clusters = static_cast<int>(centers.size());
                    for (size_t i = 0; i < samples.size(); ++i)
                        assign[i] = detail::nearest_center(centers, samples[i].position);
                }
            }
        }
        for (int c = 0; c < n_clusters; ++c) {
            std::vector<Pose> cluster;
            for (size_t i = 0; i < samples.size(); ++i)
                if (assign[i] == c) cluster.push_back(samples[i]);
            if (cluster.size() < 2) continue;
            RelPosePredicate p;
            p.name = motion_predicate_name(key.first, key.second, c);
            p.subject_type = key.first.name;
            p.reference_type = key.second.name;
            p.gaussian = fit_se3_gaussian(cluster);
            p.eps_pos = cfg.eps_pos;
            p.eps_ori = cfg.eps_ori;
            lib.by_name[p.name] = std::move(p);
        }
    }
    return lib;
}

// Evaluates every library predicate over every type-consistent frame pair,
// plus the built-in GripperOpen atom.
inline AbstractState abstract_state(const WorldState& state, const PredicateLibraries& lib) {
    AbstractState atoms;
    if (state.gripper == GripperState::open) atoms.insert(kGripperOpenAtom);
    for (const auto& [name, pred] : lib.by_name) {
        if (pred.is_ee_predicate()) {
            for (const auto& [id, obj] : state.objects) {
                if (obj.type.name != pred.reference_type) continue;
                if (holds(pred, relative_pose(obj.pose, state.ee_pose)))
                    atoms.insert(GroundAtom{name, {id}});
            }
        } else {
            for (const auto& [sid, sobj] : state.objects) {
                if (sobj.type.name != pred.subject_type) continue;
                for (const auto& [rid, robj] : state.objects) {
                    if (rid == sid || robj.type.name != pred.reference_type) continue;
                    if (holds(pred, relative_pose(robj.pose, sobj.pose)))
                        atoms.insert(GroundAtom{name, {sid, rid}});
                }
            }
        }
    }
    return atoms;
}

}  // namespace symskill
