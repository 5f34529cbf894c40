#pragma once

// SE(3) poses, relative-frame transforms, rotation log/exp, and
// finite-difference twist estimation. Quaternions are (w,x,y,z) everywhere.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "symskill/errors.hpp"

namespace symskill {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kQuatNormTol = 1e-9;

// Canonical sign: w >= 0.
inline Quat canonical(Quat q) {
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
}

struct Pose {
    Vec3 position{Vec3::Zero()};
    Quat orientation{Quat::Identity()};

    Pose() = default;
    Pose(const Vec3& p, const Quat& q) : position(p), orientation(canonical(q)) {}

    static Pose identity() { return Pose{}; }

    Mat3 rotation() const { return orientation.toRotationMatrix(); }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation();
        m.topRightCorner<3, 1>() = position;
        return m;
    }

    Pose inverse() const {
        Quat qi = orientation.conjugate();
        return Pose{qi * (-position), qi};
    }

    bool approx_equal(const Pose& other, double tol = 1e-9) const {
        return (position - other.position).norm() <= tol &&
               (canonical(orientation).coeffs() - canonical(other.orientation).coeffs()).norm() <= tol;
    }
};

struct Twist {
    Vec3 linear{Vec3::Zero()};
    Vec3 angular{Vec3::Zero()};

    bool is_finite() const { return linear.allFinite() && angular.allFinite(); }
    double linear_norm() const { return linear.norm(); }
    double angular_norm() const { return angular.norm(); }
};

struct TimedPose {
    double t{0.0};
    Pose pose;
};

inline Pose compose(const Pose& a, const Pose& b) {
    return Pose{a.position + a.orientation * b.position, a.orientation * b.orientation};
}

// Pose of b expressed in frame a: inverse(a) * b.
inline Pose relative_pose(const Pose& a, const Pose& b) {
    return compose(a.inverse(), b);
}

// Rotation vector (axis * angle), angle in [0, pi]. At angle == pi the axis
// sign is fixed so that its largest-magnitude component is positive.
inline Vec3 log_rotation(const Quat& q_in) {
    Quat q = canonical(q_in);
    const double w = std::min(1.0, q.w());
    const Vec3 v(q.x(), q.y(), q.z());
    const double vn = v.norm();
    if (vn < 1e-12) return Vec3::Zero();
    const double angle = 2.0 * std::atan2(vn, w);
    Vec3 axis = v / vn;
    if (angle > M_PI - 1e-9) {
        int imax = 0;
        axis.cwiseAbs().maxCoeff(&imax);
        if (axis[imax] < 0.0) axis = -axis;
    }
    return axis * angle;
}

inline Quat exp_rotation(const Vec3& rv) {
    const double angle = rv.norm();
    if (angle < 1e-12) {
        Quat q(1.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z());
        return canonical(q);
    }
    const Vec3 axis = rv / angle;
    Quat q(Eigen::AngleAxisd(angle, axis));
    return canonical(q);
}

// Integrate a space-frame twist over dt.
inline Pose integrate(const Pose& p, const Twist& tw, double dt) {
    return Pose{p.position + tw.linear * dt,
                exp_rotation(tw.angular * dt) * p.orientation};
}

namespace detail {

inline std::vector<Vec3> moving_average(const std::vector<Vec3>& xs, int window) {
    if (window <= 1) return xs;
    const int n = static_cast<int>(xs.size());
    const int half = window / 2;
    std::vector<Vec3> out(xs.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        Vec3 acc = Vec3::Zero();
        for (int j = lo; j <= hi; ++j) acc += xs[j];
        out[i] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace detail

// Central finite differences (one-sided at the ends); angular velocity from
// the body-frame relative-rotation log over the step, reported in the space
// frame for consistency with integrate(). Output length equals input length.
inline std::vector<Twist> estimate_twists(const std::vector<TimedPose>& traj,
                                          int smoothing_window = 5) {
    if (traj.size() < 2) throw InsufficientData("estimate_twists: need >= 2 samples");
    const int n = static_cast<int>(traj.size());
    for (int i = 1; i < n; ++i) {
        if (traj[i].t <= traj[i - 1].t) {
            if (traj[i].t == traj[i - 1].t)
                throw DuplicateTimestamp("estimate_twists: duplicate timestamp");
            throw MonotonicityError("estimate_twists: timestamps not increasing");
        }
    }
    std::vector<Vec3> lin(n), ang(n);
    auto diff = [&](int i, int j) {
        const double dt = traj[j].t - traj[i].t;
        Vec3 v = (traj[j].pose.position - traj[i].pose.position) / dt;
        const Quat rel = traj[i].pose.orientation.conjugate() * traj[j].pose.orientation;
        // body-frame rotation vector, re-expressed in the space frame
        Vec3 w = traj[i].pose.orientation * (log_rotation(rel) / dt);
        return std::make_pair(v, w);
    };
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - 1);
        const int hi = std::min(n - 1, i + 1);
        auto [v, w] = diff(lo, hi);
        lin[i] = v;
        ang[i] = w;
    }
    lin = detail::moving_average(lin, smoothing_window);
    ang = detail::moving_average(ang, smoothing_window);
    std::vector<Twist> out(n);
    for (int i = 0; i < n; ++i) out[i] = Twist{lin[i], ang[i]};
    return out;
}

}  // namespace symskill
