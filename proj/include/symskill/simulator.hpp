#pragma once

// Deterministic kinematic tabletop world: free-flying end-effector, proximity
// grasping, 1-DOF articulated objects driven by constraint projection, a
// scripted play demonstrator with ground-truth annotations, and disturbance
// injection. No contact dynamics; pose trajectories are the only product.

#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symskill/geometry.hpp"
#include "symskill/world.hpp"

namespace symskill {

enum class Joint { revolute, prismatic };

struct Articulation {
    Joint joint{Joint::revolute};
    Vec3 axis{0, 0, 1};   // in the joint origin frame, unit norm
    Pose origin;          // joint frame in the world
    Pose link;            // moving body (handle) frame in joint coordinates
    double q_min{0};
    double q_max{1.5707963267948966};
    double q{0};
};

inline Pose articulated_fk(const Articulation& a) {
    Pose joint_tf;
    if (a.joint == Joint::revolute)
        joint_tf = Pose{Vec3::Zero(), exp_rotation(a.axis.normalized() * a.q)};
    else
        joint_tf = Pose{a.axis.normalized() * a.q, Quat::Identity()};
    return compose(compose(a.origin, joint_tf), a.link);
}

struct Ellipsoid {
    Vec3 center{Vec3::Zero()};
    Mat3 basis{Mat3::Identity()};  // columns = principal directions
    Vec3 axes{0.1, 0.1, 0.1};      // semi-axis lengths
};

// Gamma = 1 on the boundary, > 1 outside, < 1 inside.
inline double gamma(const Ellipsoid& e, const Vec3& x) {
    const Vec3 local = e.basis.transpose() * (x - e.center);
    double g = 0;
    for (int i = 0; i < 3; ++i) g += (local[i] / e.axes[i]) * (local[i] / e.axes[i]);
    return g;
}

struct SimObject {
    std::string id;
    ObjectType type;
    Pose pose;
    enum class Kind { free_rigid, articulated } kind{Kind::free_rigid};
    std::optional<Articulation> articulation;
    double grasp_radius{0.06};
    std::optional<Ellipsoid> obstacle;  // in the object frame

    Pose current_pose() const {
        return kind == Kind::articulated ? articulated_fk(*articulation) : pose;
    }
};

struct SimWorld {
    std::map<std::string, SimObject> objects;
    Pose ee;
    Twist ee_velocity;
    GripperState gripper{GripperState::open};
    std::optional<std::string> attached;
    Pose grasp_offset;  // attached object in the ee frame
    double time{0};

    SimObject& object(const std::string& id) {
        auto it = objects.find(id);
        if (it == objects.end()) throw UnknownObject("unknown object id: " + id);
        return it->second;
    }
    const SimObject& object(const std::string& id) const {
        return const_cast<SimWorld*>(this)->object(id);
    }

    WorldState observe() const {
        WorldState s;
        s.ee_pose = ee;
        s.gripper = gripper;
        for (const auto& [id, o] : objects)
            s.objects[id] = ObjectInstance{o.current_pose(), o.type};
        return s;
    }

    // world-frame obstacle ellipsoids, optionally excluding one object
    std::vector<Ellipsoid> obstacles(const std::string& exclude = "") const {
        std::vector<Ellipsoid> out;
        for (const auto& [id, o] : objects) {
            if (!o.obstacle || id == exclude) continue;
            const Pose p = o.current_pose();
            Ellipsoid e = *o.obstacle;
            e.center = p.position + p.orientation * e.center;
            e.basis = p.orientation.toRotationMatrix() * e.basis;
            out.push_back(e);
        }
        return out;
    }
};

enum class GripperCmd { hold, open, close };

namespace detail {

inline Vec3 handle_tangent(const Articulation& a) {
    auto pos_at = [&](double q) {
        Articulation t = a;
        t.q = q;
        return articulated_fk(t).position;
    };
    const double h = 1e-6;
    return (pos_at(a.q + h) - pos_at(a.q - h)) / (2 * h);
}

}  // namespace detail

inline void step(SimWorld& w, const Twist& applied, GripperCmd cmd, double dt) {
    if (cmd == GripperCmd::open) {
        w.gripper = GripperState::open;
        w.attached.reset();
    } else if (cmd == GripperCmd::close) {
        w.gripper = GripperState::closed;
        if (!w.attached) {
            double best = std::numeric_limits<double>::infinity();
            const SimObject* hit = nullptr;
            for (const auto& [id, o] : w.objects) {
                const double d = (o.current_pose().position - w.ee.position).norm();
                if (d <= o.grasp_radius && d < best) {
                    best = d;
                    hit = &o;
                }
            }
            if (hit) {
                w.attached = hit->id;
                w.grasp_offset = relative_pose(w.ee, hit->current_pose());
            }
        }
    }

    const Pose before = w.ee;
    SimObject* held = w.attached ? &w.object(*w.attached) : nullptr;
    if (held && held->kind == SimObject::Kind::articulated) {
        // project ee motion onto the joint tangent, snap back to the manifold
        auto& art = *held->articulation;
        const Vec3 u = detail::handle_tangent(art);
        const double u2 = u.squaredNorm();
        if (u2 > 1e-12) {
            const double dq = applied.linear.dot(u) / u2 * dt;
            art.q = std::clamp(art.q + dq, art.q_min, art.q_max);
        }
        w.ee = compose(articulated_fk(art), w.grasp_offset.inverse());
    } else {
        w.ee = integrate(w.ee, applied, dt);
        if (held) held->pose = compose(w.ee, w.grasp_offset);
    }
    w.ee_velocity.linear = (w.ee.position - before.position) / dt;
    w.ee_velocity.angular = log_rotation(w.ee.orientation * before.orientation.conjugate()) / dt;
    w.time += dt;
}

// --- Disturbance injection -------------------------------------------------

struct Event {
    enum class Kind { teleport, detach, move_obstacle, reclose } kind{Kind::detach};
    std::string id;
    Pose pose;
};

inline void inject(SimWorld& w, const Event& e) {
    switch (e.kind) {
        case Event::Kind::detach:
            w.attached.reset();
            break;
        case Event::Kind::teleport:
        case Event::Kind::move_obstacle: {
            auto& obj = w.object(e.id);
            if (w.attached == e.id) w.attached.reset();
            obj.pose = e.pose;
            break;
        }
        case Event::Kind::reclose: {
            auto& obj = w.object(e.id);
            if (!obj.articulation) throw UnknownObject(e.id + " is not articulated");
            if (w.attached == e.id) w.attached.reset();
            obj.articulation->q = obj.articulation->q_min;
            break;
        }
    }
}

// --- Scenario files --------------------------------------------------------

struct ScriptStep {
    std::string intent;  // "transport", "open", "close"
    std::string target;
    std::string reference;
    double noise{1.0};
};

struct Disturbance {
    double time{0};
    Event event;
};

struct Scenario {
    uint64_t seed{0};
    double dt{0.02};
    Vec3 ee_start{0, 0, 0.4};
    std::vector<SimObject> objects;
    std::vector<ScriptStep> script;
    std::vector<Disturbance> disturbances;
};

namespace detail {

inline Pose parse_pose(const json& j, const char* what) {
    return Pose{parse_vec3(j.at("p"), what), parse_quat(j.at("q"), what)};
}

inline Event parse_event(const json& j) {
    Event e;
    const std::string k = j.at("kind").get<std::string>();
    if (k == "teleport")
        e.kind = Event::Kind::teleport;
    else if (k == "detach")
        e.kind = Event::Kind::detach;
    else if (k == "move_obstacle")
        e.kind = Event::Kind::move_obstacle;
    else if (k == "reclose")
        e.kind = Event::Kind::reclose;
    else
        throw SchemaError("unknown event kind: " + k);
    if (j.contains("id")) e.id = j.at("id").get<std::string>();
    if (j.contains("pose")) e.pose = parse_pose(j.at("pose"), "event");
    return e;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j) {
    Scenario sc;
    sc.seed = j.value("seed", uint64_t{0});
    sc.dt = j.value("dt", 0.02);
    if (j.contains("ee_start")) sc.ee_start = detail::parse_vec3(j.at("ee_start"), "ee_start");
    for (const auto& jo : j.at("objects")) {
        SimObject o;
        o.id = jo.at("id").get<std::string>();
        o.type = ObjectType{jo.at("type").get<std::string>()};
        if (jo.contains("pose")) o.pose = detail::parse_pose(jo.at("pose"), o.id.c_str());
        o.grasp_radius = jo.value("grasp_radius", 0.06);
        if (jo.contains("articulation")) {
            const auto& ja = jo.at("articulation");
            Articulation a;
            const std::string joint = ja.value("joint", "revolute");
            if (joint == "revolute")
                a.joint = Joint::revolute;
            else if (joint == "prismatic")
                a.joint = Joint::prismatic;
            else
                throw SchemaError("unknown joint type: " + joint);
            a.axis = detail::parse_vec3(ja.at("axis"), "axis").normalized();
            if (ja.contains("origin")) a.origin = detail::parse_pose(ja.at("origin"), "origin");
            if (ja.contains("link")) a.link = detail::parse_pose(ja.at("link"), "link");
            if (ja.contains("range")) {
                a.q_min = ja.at("range")[0].get<double>();
                a.q_max = ja.at("range")[1].get<double>();
            }
            a.q = ja.value("q", 0.0);
            if (a.q < a.q_min || a.q > a.q_max) throw SchemaError("q out of range for " + o.id);
            o.articulation = a;
            o.kind = SimObject::Kind::articulated;
        }
        if (jo.contains("obstacle")) {
            const auto& je = jo.at("obstacle");
            Ellipsoid e;
            if (je.contains("center")) e.center = detail::parse_vec3(je.at("center"), "center");
            e.axes = detail::parse_vec3(je.at("axes"), "axes");
            o.obstacle = e;
        }
        sc.objects.push_back(std::move(o));
    }
    for (const auto& js : j.value("script", json::array())) {
        ScriptStep st;
        st.intent = js.at("intent").get<std::string>();
        st.target = js.at("target").get<std::string>();
        st.reference = js.value("reference", "");
        st.noise = js.value("noise", 1.0);
        sc.script.push_back(std::move(st));
    }
    for (const auto& jd : j.value("disturbances", json::array())) {
        Disturbance d;
        d.time = jd.at("time").get<double>();
        d.event = detail::parse_event(jd.at("event"));
        sc.disturbances.push_back(std::move(d));
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad scenario: ") + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad scenario: ") + e.what());
    }
}

inline SimWorld make_world(const Scenario& sc) {
    SimWorld w;
    w.ee = Pose{sc.ee_start, Quat::Identity()};
    for (const auto& o : sc.objects) {
        if (w.objects.count(o.id)) throw SchemaError("duplicate object id: " + o.id);
        w.objects[o.id] = o;
    }
    return w;
}

// --- Scripted play generation ----------------------------------------------

struct EpisodeAnnotation {
    int t0{};       // approach start sample
    int t_start{};  // first sample with the motion object displaced
    int t_stop{};   // last sample with the motion object displaced
    std::string motion_object;
    std::string reference_object;
    std::string label;
};

struct PlayResult {
    Demonstration demo;
    std::vector<EpisodeAnnotation> annotations;
};

namespace detail {

struct PlayDriver {
    SimWorld& w;
    Demonstration& demo;
    double dt;
    std::mt19937_64 rng;
    std::normal_distribution<double> n01;

    void record() { demo.records.emplace_back(w.time, w.observe()); }

    void tick(const Twist& tw, GripperCmd cmd = GripperCmd::hold) {
        step(w, tw, cmd, dt);
        record();
    }

    void dwell(double seconds) {
        const int n = static_cast<int>(std::round(seconds / dt));
        for (int i = 0; i < n; ++i) tick(Twist{});
    }

    // bounded-norm Gaussian jitter, so no draw lands implausibly far out
    Vec3 jitter_pos(double sigma) {
        Vec3 v(n01(rng), n01(rng), n01(rng));
        if (v.norm() > 2.2) v *= 2.2 / v.norm();
        return sigma * v;
    }
    Quat jitter_ori(double sigma) { return exp_rotation(jitter_pos(sigma)); }

    void move_to(const Pose& target, double speed = 0.25, double wspeed = 1.0) {
        const double kp = 25.0;
        const int cap = static_cast<int>(60.0 / dt);
        for (int i = 0; i < cap; ++i) {
            const Vec3 dp = target.position - w.ee.position;
            const Vec3 dr = log_rotation(target.orientation * w.ee.orientation.conjugate());
            if (dp.norm() <= 1e-3 && dr.norm() <= 0.01) return;
            Twist tw;
            if (dp.norm() > 1e-12)
                tw.linear = dp.normalized() * std::min(speed, kp * dp.norm());
            if (dr.norm() > 1e-12)
                tw.angular = dr.normalized() * std::min(wspeed, kp * dr.norm());
            tick(tw);
        }
        throw ScriptInfeasible("waypoint unreachable");
    }

    void drive_articulation(const std::string& id, double q_target, double speed = 0.15) {
        auto& art = *w.object(id).articulation;
        if (q_target < art.q_min - 1e-9 || q_target > art.q_max + 1e-9)
            throw ScriptInfeasible("joint target outside range for " + id);
        const int cap = static_cast<int>(60.0 / dt);
        for (int i = 0; i < cap; ++i) {
            const double err = q_target - art.q;
            if (std::abs(err) < 0.01) return;
            const Vec3 u = handle_tangent(art);
            if (u.norm() < 1e-9) throw ScriptInfeasible("degenerate joint tangent");
            Twist tw;
            tw.linear = u.normalized() * (err > 0 ? speed : -speed);
            tick(tw);
        }
        throw ScriptInfeasible("joint target unreachable for " + id);
    }
};

}  // namespace detail

inline PlayResult generate_play(const Scenario& sc) {
    SimWorld w = make_world(sc);
    PlayResult out;
    detail::PlayDriver drv{w, out.demo, sc.dt, std::mt19937_64(sc.seed), {}};
    drv.record();
    drv.dwell(1.0);

    const double sigma_pos = 0.005;
    const double sigma_ori = 2.0 * M_PI / 180.0;

    for (const auto& st : sc.script) {
        const SimObject& target = w.object(st.target);
        if (!st.reference.empty()) w.object(st.reference);

        EpisodeAnnotation ann;
        ann.motion_object = st.target;
        ann.reference_object = st.reference;
        ann.t0 = static_cast<int>(out.demo.size());

        const double np = st.noise * sigma_pos;
        const double no = st.noise * sigma_ori;

        if (st.intent == "transport") {
            if (target.kind != SimObject::Kind::free_rigid)
                throw ScriptInfeasible("transport target must be free_rigid: " + st.target);
            if (st.reference.empty())
                throw ScriptInfeasible("transport requires a reference object");
            ann.label = "Transport(" + target.type.name + "," +
                        w.object(st.reference).type.name + ")";

            const Pose grasp = compose(target.current_pose(),
                                       Pose{Vec3(0, 0, 0.02) + drv.jitter_pos(np),
                                            drv.jitter_ori(no)});
            if (st.noise > 0 && std::uniform_real_distribution<double>(0, 1)(drv.rng) <
                                    0.3 * st.noise) {
                // suboptimal double approach: overshoot above, then descend
                drv.move_to(compose(grasp, Pose{Vec3(0, 0, 0.05), Quat::Identity()}));
            }
            drv.move_to(grasp);
            drv.tick(Twist{}, GripperCmd::close);
            if (w.attached != st.target)
                throw ScriptInfeasible("grasp missed " + st.target);

            ann.t_start = static_cast<int>(out.demo.size());
            const Pose place = compose(w.object(st.reference).current_pose(),
                                       Pose{Vec3(0, 0, 0.03) + drv.jitter_pos(np),
                                            drv.jitter_ori(no)});
            drv.move_to(compose(place, w.grasp_offset.inverse()));
            ann.t_stop = static_cast<int>(out.demo.size()) - 1;
            drv.tick(Twist{}, GripperCmd::open);
            drv.move_to(compose(Pose{Vec3(0, 0, 0.15), Quat::Identity()}, w.ee), 0.4);
        } else if (st.intent == "open" || st.intent == "close") {
            if (target.kind != SimObject::Kind::articulated)
                throw ScriptInfeasible(st.intent + " target must be articulated: " + st.target);
            ann.label = (st.intent == "open" ? "Open(" : "Close(") + target.type.name + ")";

            const Pose handle = compose(target.current_pose(),
                                        Pose{drv.jitter_pos(np), drv.jitter_ori(no)});
            drv.move_to(handle);
            drv.tick(Twist{}, GripperCmd::close);
            if (w.attached != st.target)
                throw ScriptInfeasible("grasp missed " + st.target);

            ann.t_start = static_cast<int>(out.demo.size());
            const auto& art = *target.articulation;
            drv.drive_articulation(st.target,
                                   st.intent == "open" ? art.q_max : art.q_min);
            ann.t_stop = static_cast<int>(out.demo.size()) - 1;
            drv.tick(Twist{}, GripperCmd::open);
            drv.move_to(compose(Pose{Vec3(0, 0, 0.15), Quat::Identity()}, w.ee), 0.4);
        } else {
            throw ScriptInfeasible("unknown intent: " + st.intent);
        }

        out.annotations.push_back(std::move(ann));
        drv.dwell(3.0);
    }
    return out;
}

}  // namespace symskill
