#pragma once

// Splits unsegmented demonstrations into premotion/motion episodes using
// velocity thresholds with hysteresis, and aggregates the per-type
// relative-frame datasets consumed by predicate and skill learning.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "symskill/geometry.hpp"
#include "symskill/world.hpp"

namespace symskill {

// Half-open index interval [begin, end).
struct IndexInterval {
    int begin{0};
    int end{0};

    int size() const { return end - begin; }
    bool empty() const { return end <= begin; }
};

struct Episode {
    std::string motion_object;           // o^i, never "ee"
    IndexInterval premotion;             // [t0, t_start), may be empty
    IndexInterval motion;                // [t_start, t_stop]
    std::optional<std::string> reference_object;  // o^r, set by reference selection

    int t_start() const { return motion.begin; }
    int t_stop() const { return motion.end - 1; }
};

struct SegmentationConfig {
    double v_thresh = 0.01;          // m/s
    double w_thresh = 0.05;          // rad/s
    int smoothing_window = 5;
    double exit_ratio = 0.5;         // hysteresis: exit threshold = exit_ratio * entry
    int min_segment_len = 5;         // samples
    double post_window_s = 2.0;      // post-motion window for predicate fitting
};

struct PreDataset {
    ObjectType key;                              // λ_{o^i}
    std::vector<std::vector<TimedPose>> trajectories;  // {ᵒⁱT_ee(t)} per episode
};

struct MotionTriple {
    std::vector<TimedPose> ee_in_motion_obj;   // {ᵒⁱT_ee}
    std::vector<TimedPose> ee_in_reference;    // {ᵒʳT_ee}
    std::vector<TimedPose> obj_in_reference;   // {ᵒʳT_{o^i}}
    std::vector<Pose> post_window;             // ᵒʳT_{o^i} for ~2 s past t_stop
};

struct MotionDataset {
    std::pair<ObjectType, ObjectType> key;     // (λ_{o^i}, λ_{o^r})
    std::vector<MotionTriple> trajectories;
};

namespace detail {

inline std::vector<TimedPose> frame_track(const Demonstration& demo, const std::string& id) {
    std::vector<TimedPose> out;
    out.reserve(demo.size());
    for (const auto& [t, s] : demo.records) out.push_back({t, s.frame_pose(id)});
    return out;
}

// Hysteresis thresholding of a speed profile into motion intervals.
inline std::vector<IndexInterval> motion_intervals(const std::vector<Twist>& tws,
                                                   const SegmentationConfig& cfg) {
    const int n = static_cast<int>(tws.size());
    std::vector<bool> moving(n, false);
    bool on = false;
    for (int i = 0; i < n; ++i) {
        const double v = tws[i].linear_norm(), w = tws[i].angular_norm();
        if (!on) {
            on = v > cfg.v_thresh || w > cfg.w_thresh;
        } else {
            on = v > cfg.v_thresh * cfg.exit_ratio || w > cfg.w_thresh * cfg.exit_ratio;
        }
        moving[i] = on;
    }
    std::vector<IndexInterval> ivs;
    for (int i = 0; i < n;) {
        if (!moving[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j < n && moving[j]) ++j;
        ivs.push_back({i, j});
        i = j;
    }
    // merge intervals separated by sub-minimum gaps, then drop short ones
    std::vector<IndexInterval> merged;
    for (const auto& iv : ivs) {
        if (!merged.empty() && iv.begin - merged.back().end < cfg.min_segment_len)
            merged.back().end = iv.end;
        else
            merged.push_back(iv);
    }
    std::vector<IndexInterval> kept;
    for (const auto& iv : merged)
        if (iv.size() >= cfg.min_segment_len) kept.push_back(iv);
    return kept;
}

}  // namespace detail

inline std::vector<Episode> detect_episodes(const Demonstration& demo,
                                            const SegmentationConfig& cfg = {}) {
    if (demo.size() < 2) return {};
    const int n = static_cast<int>(demo.size());

    std::map<std::string, std::vector<IndexInterval>> obj_motion;
    for (const auto& id : demo.object_ids()) {
        const auto track = detail::frame_track(demo, id);
        const auto tws = estimate_twists(track, cfg.smoothing_window);
        auto ivs = detail::motion_intervals(tws, cfg);
        if (ivs.empty()) continue;
        // the smoother widens intervals; tighten edges against raw velocities
        const auto raw = estimate_twists(track, 1);
        auto above = [&](int i) {
            return raw[i].linear_norm() > cfg.v_thresh || raw[i].angular_norm() > cfg.w_thresh;
        };
        for (auto& iv : ivs) {
            while (iv.size() > 1 && !above(iv.begin)) ++iv.begin;
            while (iv.size() > 1 && !above(iv.end - 1)) --iv.end;
        }
        obj_motion[id] = std::move(ivs);
    }

    // at most one non-ee object may move at any sample
    std::vector<const std::string*> mover(n, nullptr);
    for (const auto& [id, ivs] : obj_motion) {
        for (const auto& iv : ivs) {
            for (int i = iv.begin; i < iv.end; ++i) {
                if (mover[i] && *mover[i] != id)
                    throw MultiObjectMotion("objects \"" + *mover[i] + "\" and \"" + id +
                                            "\" both moving near t=" +
                                            std::to_string(demo.time_at(i)));
                mover[i] = &id;
            }
        }
    }

    struct Mot {
        std::string id;
        IndexInterval iv;
    };
    std::vector<Mot> motions;
    for (const auto& [id, ivs] : obj_motion)
        for (const auto& iv : ivs) motions.push_back({id, iv});
    std::sort(motions.begin(), motions.end(),
              [](const Mot& a, const Mot& b) { return a.iv.begin < b.iv.begin; });

    auto object_moving_at = [&](int i) { return mover[i] != nullptr; };

    std::vector<Episode> episodes;
    int prev_block_end = 0;  // premotion may not reach into the previous post window
    for (const auto& m : motions) {
        Episode ep;
        ep.motion_object = m.id;
        ep.motion = m.iv;
        int t0 = m.iv.begin;
        while (t0 > prev_block_end && !object_moving_at(t0 - 1)) --t0;
        ep.premotion = {t0, m.iv.begin};
        episodes.push_back(ep);
        // block the post-motion window of this episode from the next premotion
        const double stop_time = demo.time_at(ep.t_stop());
        int pb = m.iv.end;
        while (pb < n && demo.time_at(pb) <= stop_time + cfg.post_window_s) ++pb;
        prev_block_end = pb;
    }
    return episodes;
}

// Relative-frame trajectory extraction shared by datasets and skill learning.

inline std::vector<TimedPose> premotion_traj(const Demonstration& demo, const Episode& ep) {
    std::vector<TimedPose> out;
    for (int i = ep.premotion.begin; i < ep.premotion.end; ++i) {
        const auto& s = demo.state_at(i);
        out.push_back({demo.time_at(i),
                       relative_pose(s.object(ep.motion_object).pose, s.ee_pose)});
    }
    return out;
}

inline std::vector<TimedPose> motion_rel_traj(const Demonstration& demo, const Episode& ep,
                                              const std::string& frame_id,
                                              const std::string& target_id) {
    std::vector<TimedPose> out;
    for (int i = ep.motion.begin; i < ep.motion.end; ++i) {
        const auto& s = demo.state_at(i);
        out.push_back({demo.time_at(i),
                       relative_pose(s.frame_pose(frame_id), s.frame_pose(target_id))});
    }
    return out;
}

inline std::vector<Pose> post_window_poses(const Demonstration& demo, const Episode& ep,
                                           double window_s) {
    std::vector<Pose> out;
    const double stop_time = demo.time_at(ep.t_stop());
    for (int i = ep.motion.end; i < static_cast<int>(demo.size()); ++i) {
        if (demo.time_at(i) > stop_time + window_s) break;
        const auto& s = demo.state_at(i);
        out.push_back(relative_pose(s.object(*ep.reference_object).pose,
                                    s.object(ep.motion_object).pose));
    }
    return out;
}

inline std::pair<std::map<ObjectType, PreDataset>,
                 std::map<std::pair<ObjectType, ObjectType>, MotionDataset>>
aggregate_datasets(const std::vector<Demonstration>& demos,
                   const std::vector<std::vector<Episode>>& episodes,
                   const SegmentationConfig& cfg = {}) {
    std::map<ObjectType, PreDataset> pre;
    std::map<std::pair<ObjectType, ObjectType>, MotionDataset> motion;
    for (size_t d = 0; d < demos.size(); ++d) {
        const auto& demo = demos[d];
        for (const auto& ep : episodes[d]) {
            const ObjectType ty_obj = demo.state_at(ep.t_start()).object(ep.motion_object).type;
            auto pt = premotion_traj(demo, ep);
            if (!pt.empty()) {
                auto& ds = pre[ty_obj];
                ds.key = ty_obj;
                ds.trajectories.push_back(std::move(pt));
            }
            if (!ep.reference_object) continue;
            const std::string& ref = *ep.reference_object;
            const ObjectType ty_ref = demo.state_at(ep.t_start()).object(ref).type;
            MotionTriple triple;
            triple.ee_in_motion_obj = motion_rel_traj(demo, ep, ep.motion_object, "ee");
            triple.ee_in_reference = motion_rel_traj(demo, ep, ref, "ee");
            triple.obj_in_reference = motion_rel_traj(demo, ep, ref, ep.motion_object);
            triple.post_window = post_window_poses(demo, ep, cfg.post_window_s);
            auto& ds = motion[{ty_obj, ty_ref}];
            ds.key = {ty_obj, ty_ref};
            ds.trajectories.push_back(std::move(triple));
        }
    }
    return {std::move(pre), std::move(motion)};
}

}  // namespace symskill
