#pragma once

// Closed-loop execution of planned skeletons: each ground operator runs its
// skill under maintain monitoring and obstacle modulation, effects are checked
// after convergence plus a short settling window, and failures feed a failure
// memory that triggers attractor resampling and replanning.

#include <chrono>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "symskill/bundle.hpp"
#include "symskill/planner.hpp"
#include "symskill/simulator.hpp"

namespace symskill {

using Mat6 = Eigen::Matrix<double, 6, 6>;

struct ExecutorConfig {
    int replan_limit = 20;
    double conv_eps = 1e-3;      // twist norm threshold for skill convergence
    double control_dt = 0.01;
    double margin = 0.0;         // obstacle ellipsoids inflated by this much
    Mat6 damping = 25.0 * Mat6::Identity();
    double settle_s = 0.2;       // wait before effect checks, mirrors the
                                 // post-motion window used when fitting
    double skill_timeout_s = 60.0;
    double stall_s = 0.5;  // quiescent time after which the skill is treated
                           // as converged even if its command has not vanished
    bool record_telemetry = true;
};

// --- Obstacle modulation ----------------------------------------------------

namespace detail {

inline Vec3 gamma_normal(const Ellipsoid& e, const Vec3& x) {
    Mat3 inv_ax2 = Mat3::Zero();
    for (int i = 0; i < 3; ++i) inv_ax2(i, i) = 1.0 / (e.axes[i] * e.axes[i]);
    const Vec3 grad = 2.0 * e.basis * inv_ax2 * e.basis.transpose() * (x - e.center);
    const double n = grad.norm();
    return n > 1e-12 ? Vec3(grad / n) : Vec3(1, 0, 0);
}

inline Mat3 orthonormal_from_normal(const Vec3& n) {
    const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    const Vec3 t1 = n.cross(a).normalized();
    const Vec3 t2 = n.cross(t1);
    Mat3 e;
    e.col(0) = n;
    e.col(1) = t1;
    e.col(2) = t2;
    return e;
}

}  // namespace detail

// Applies the ellipsoid modulation matrix per obstacle, nearest first. The
// angular component passes through. Inside an obstacle the inward normal
// component is removed instead; *inside is set so callers can log it.
inline Twist modulate(const Twist& tw, const Vec3& x, std::vector<Ellipsoid> obstacles,
                      bool* inside = nullptr) {
    if (inside) *inside = false;
    std::sort(obstacles.begin(), obstacles.end(),
              [&](const Ellipsoid& a, const Ellipsoid& b) { return gamma(a, x) < gamma(b, x); });
    Twist out = tw;
    for (const auto& e : obstacles) {
        const double g = gamma(e, x);
        const Vec3 n = detail::gamma_normal(e, x);
        if (g < 1.0) {
            const double vn = n.dot(out.linear);
            if (vn < 0) out.linear -= vn * n;
            if (inside) *inside = true;
            continue;
        }
        const Mat3 basis = detail::orthonormal_from_normal(n);
        Vec3 lambda(1.0 - 1.0 / g, 1.0 + 1.0 / g, 1.0 + 1.0 / g);
        out.linear = basis * lambda.asDiagonal() * basis.transpose() * out.linear;
    }
    return out;
}

// Passive velocity tracking: acceleration = -D (current - commanded) with unit
// virtual mass, one explicit Euler step.
inline Twist track(const Twist& commanded, const Twist& current, const ExecutorConfig& cfg) {
    Eigen::Matrix<double, 6, 1> v, c;
    v << current.linear, current.angular;
    c << commanded.linear, commanded.angular;
    v += -cfg.damping * (v - c) * cfg.control_dt;
    Twist out;
    out.linear = v.head<3>();
    out.angular = v.tail<3>();
    return out;
}

// --- Reports ----------------------------------------------------------------

enum class Outcome { success, failure };

struct ExecEvent {
    double t{0};
    std::string kind;    // "plan", "effect_failure", "maintain_violation",
                         // "resample", "disturbance", "inside_obstacle",
                         // "timeout", "unreachable", "op_done"
    std::string detail;
};

struct StepTelemetry {
    double t{0};
    Pose ee;
    std::string active_op;
    double gamma_min{std::numeric_limits<double>::infinity()};
    double v_norm{0};
    double w_norm{0};
};

struct ExecutionReport {
    Outcome outcome{Outcome::failure};
    int replans{0};
    int resamples{0};
    int plan_calls{0};
    std::vector<double> plan_ms;
    std::vector<ExecEvent> events;
    std::vector<StepTelemetry> telemetry;
    double sim_time_s{0};

    bool succeeded() const { return outcome == Outcome::success; }
};

inline json report_to_json(const ExecutionReport& r) {
    json ev = json::array();
    for (const auto& e : r.events)
        ev.push_back(json{{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
    return json{{"outcome", r.outcome == Outcome::success ? "success" : "failure"},
                {"replans", r.replans},
                {"resamples", r.resamples},
                {"plan_calls", r.plan_calls},
                {"plan_ms", r.plan_ms},
                {"sim_time_s", r.sim_time_s},
                {"events", ev}};
}

inline void write_telemetry_csv(const ExecutionReport& r, std::ostream& out) {
    out << "t,px,py,pz,active_op,gamma_min,v_norm,w_norm\n";
    for (const auto& s : r.telemetry) {
        // operator instances contain commas, so the field is quoted
        std::string op = s.active_op;
        for (size_t p = op.find('"'); p != std::string::npos; p = op.find('"', p + 2))
            op.insert(p, 1, '"');
        out << s.t << "," << s.ee.position.x() << "," << s.ee.position.y() << ","
            << s.ee.position.z() << ",\"" << op << "\"," << s.gamma_min << ","
            << s.v_norm << "," << s.w_norm << "\n";
    }
}

// --- Execution --------------------------------------------------------------

namespace detail {

// Frame the skill's dynamics are expressed in: the motion object for
// premotion skills, the selected reference for motion skills. Falls back to
// the world frame if the role variable never made it into the operator.
inline std::optional<std::string> skill_frame_id(const GroundOperator& g) {
    const char* role = g.op->phase == Phase::premotion ? "?obj" : "?ref";
    auto it = g.binding.find(role);
    if (it != g.binding.end()) return it->second;
    return std::nullopt;
}

// Rigid attractor shift: a pose drawn from the operator's effect distribution
// moves the attractor and every GMM mean by the same offset, preserving the
// learned field shape.
inline double resample_attractor(Skill& skill, const GroundOperator& g,
                                 const ModelBundle& bundle, uint64_t draw_seed) {
    for (const auto& la : g.op->add) {
        if (!bundle.predicates.contains(la.predicate)) continue;
        const auto& pred = bundle.predicates.at(la.predicate);
        const Pose sampled = sample_pose(pred.gaussian, draw_seed);
        const Vec3 delta = sampled.position - pred.gaussian.mu_pos;
        skill.position_ds.attractor += delta;
        for (auto& mu : skill.position_ds.gmm.mu) mu += delta;
        return delta.norm();
    }
    return 0.0;
}

struct DisturbanceQueue {
    std::deque<Disturbance> pending;

    explicit DisturbanceQueue(std::vector<Disturbance> ds) {
        std::stable_sort(ds.begin(), ds.end(),
                         [](const Disturbance& a, const Disturbance& b) {
                             return a.time < b.time;
                         });
        pending.assign(ds.begin(), ds.end());
    }

    void drain(SimWorld& w, ExecutionReport& report) {
        while (!pending.empty() && pending.front().time <= w.time) {
            inject(w, pending.front().event);
            report.events.push_back({w.time, "disturbance", pending.front().event.id});
            pending.pop_front();
        }
    }
};

}  // namespace detail

inline ExecutionReport execute(const Goal& goal, SimWorld& w, const ModelBundle& bundle,
                               const ExecutorConfig& cfg = {}, uint64_t seed = 0,
                               std::vector<Disturbance> disturbances = {}) {
    ExecutionReport report;
    std::mt19937_64 rng(seed);
    detail::DisturbanceQueue queue(std::move(disturbances));
    std::set<std::string> failmem;
    Twist velocity;  // controller-side velocity state

    auto abstraction = [&] { return abstract_state(w.observe(), bundle.predicates); };
    auto goal_reached = [&](const AbstractState& s) {
        for (const auto& a : goal.atoms)
            if (!s.count(a)) return false;
        return true;
    };

    auto controlled_step = [&](const Twist& commanded, GripperCmd gcmd,
                               const std::set<std::string>& exclude,
                               const std::string& active_op) {
        std::vector<Ellipsoid> obs;
        for (const auto& [id, o] : w.objects) {
            if (!o.obstacle || exclude.count(id)) continue;
            const Pose p = o.current_pose();
            Ellipsoid e = *o.obstacle;
            e.center = p.position + p.orientation * e.center;
            e.basis = p.orientation.toRotationMatrix() * e.basis;
            e.axes += cfg.margin * Vec3::Ones();
            obs.push_back(e);
        }
        bool inside = false;
        const Twist mod = modulate(commanded, w.ee.position, obs, &inside);
        if (inside) report.events.push_back({w.time, "inside_obstacle", active_op});
        velocity = track(mod, velocity, cfg);
        step(w, velocity, gcmd, cfg.control_dt);
        queue.drain(w, report);
        if (cfg.record_telemetry) {
            StepTelemetry tel;
            tel.t = w.time;
            tel.ee = w.ee;
            tel.active_op = active_op;
            for (const auto& e : obs) tel.gamma_min = std::min(tel.gamma_min, gamma(e, w.ee.position));
            tel.v_norm = velocity.linear_norm();
            tel.w_norm = velocity.angular_norm();
            report.telemetry.push_back(tel);
        }
        return mod;
    };

    int replan_count = 0;
    queue.drain(w, report);
    while (true) {
        if (replan_count >= cfg.replan_limit) {
            report.events.push_back({w.time, "replan_limit", std::to_string(replan_count)});
            report.outcome = Outcome::failure;
            break;
        }
        // a closed empty gripper is a symbolic dead end no operator can leave;
        // restore the neutral open state before planning
        if (!w.attached && w.gripper == GripperState::closed) {
            controlled_step(Twist{}, GripperCmd::open, {}, "");
            report.events.push_back({w.time, "gripper_reset", ""});
        }
        const AbstractState s0 = abstraction();

        const auto t_plan0 = std::chrono::steady_clock::now();
        const auto skeleton = plan(s0, goal, bundle.operators, object_types(w.observe()));
        report.plan_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_plan0)
                .count());
        ++report.plan_calls;
        if (!skeleton) {
            report.events.push_back({w.time, "unreachable", ""});
            report.outcome = Outcome::failure;
            break;
        }
        if (skeleton->steps.empty()) {
            report.outcome = goal_reached(s0) ? Outcome::success : Outcome::failure;
            if (report.outcome == Outcome::success) failmem.clear();
            break;
        }
        report.events.push_back({w.time, "plan", skeleton->str()});

        bool need_replan = false;
        for (size_t si = 0; si < skeleton->steps.size() && !need_replan; ++si) {
            const GroundOperator& g = skeleton->steps[si];
            const std::string instance = g.str();
            Skill skill = bundle.skill(g.op->skill_ref);
            if (failmem.count(instance)) {
                const double shift = detail::resample_attractor(skill, g, bundle, rng());
                ++report.resamples;
                report.events.push_back(
                    {w.time, "resample", instance + " shift=" + std::to_string(shift)});
            }

            const auto frame_id = detail::skill_frame_id(g);
            std::set<std::string> exclude;
            if (frame_id) exclude.insert(*frame_id);
            auto obj_it = g.binding.find("?obj");
            if (obj_it != g.binding.end()) exclude.insert(obj_it->second);

            const AbstractState maintain = g.instantiate_set(g.op->maintain);
            const AbstractState effects = g.instantiate_set(g.op->add);

            auto fail_current = [&](const std::string& kind, const std::string& detail_str) {
                failmem.insert(instance);
                report.events.push_back({w.time, kind, detail_str});
                ++replan_count;
                ++report.replans;
                need_replan = true;
            };

            // run the skill until its (modulated) command vanishes, or until a
            // constraint (joint limit, blocking obstacle) pins the ee short of
            // the attractor: sustained quiescence also counts as convergence
            // and the effect check decides whether the step actually worked
            const double t_begin = w.time;
            bool converged = false;
            Pose prev_ee = w.ee;
            double stall_t = 0;
            while (!need_replan) {
                if (w.attached) exclude.insert(*w.attached);
                const AbstractState s_now = abstraction();
                bool maintain_ok = true;
                std::string violated;
                for (const auto& a : maintain)
                    if (!s_now.count(a)) {
                        maintain_ok = false;
                        violated = a.str();
                        break;
                    }
                if (!maintain_ok) {
                    // blame the skill that produced the now-broken condition
                    const std::string prev = si > 0 ? skeleton->steps[si - 1].str() : instance;
                    failmem.insert(prev);
                    report.events.push_back({w.time, "maintain_violation", prev + " " + violated});
                    ++replan_count;
                    ++report.replans;
                    need_replan = true;
                    break;
                }
                if (w.time - t_begin > cfg.skill_timeout_s) {
                    fail_current("timeout", instance);
                    break;
                }

                const Pose frame = frame_id ? w.observe().frame_pose(*frame_id) : Pose{};
                const Pose ee_in_frame = relative_pose(frame, w.ee);
                const Twist local = evaluate(skill, ee_in_frame);
                Twist commanded;
                commanded.linear = frame.orientation * local.linear;
                commanded.angular = frame.orientation * local.angular;
                const Twist mod = controlled_step(commanded, GripperCmd::hold, exclude, instance);
                if (std::max(mod.linear_norm(), mod.angular_norm()) < cfg.conv_eps) {
                    converged = true;
                    break;
                }
                const double dlin =
                    (w.ee.position - prev_ee.position).norm() / cfg.control_dt;
                const double dang =
                    log_rotation(relative_pose(prev_ee, w.ee).orientation).norm() /
                    cfg.control_dt;
                prev_ee = w.ee;
                if (std::max(dlin, dang) < cfg.conv_eps)
                    stall_t += cfg.control_dt;
                else
                    stall_t = 0;
                if (stall_t >= cfg.stall_s) {
                    converged = true;
                    break;
                }
            }
            if (!converged) continue;

            // actuate the gripper, then settle before judging effects
            controlled_step(Twist{}, skill.gripper == GripperState::open ? GripperCmd::open
                                                                         : GripperCmd::close,
                            exclude, instance);
            const int settle_steps = static_cast<int>(std::round(cfg.settle_s / cfg.control_dt));
            for (int k = 0; k < settle_steps; ++k)
                controlled_step(Twist{}, GripperCmd::hold, exclude, instance);

            const AbstractState s_after = abstraction();
            bool effects_ok = true;
            std::string missing;
            for (const auto& a : effects)
                if (!s_after.count(a)) {
                    effects_ok = false;
                    missing = a.str();
                    break;
                }
            if (effects_ok) {
                failmem.erase(instance);
                report.events.push_back({w.time, "op_done", instance});
            } else {
                fail_current("effect_failure", instance + " missing " + missing);
            }
        }
    }
    report.sim_time_s = w.time;
    return report;
}

}  // namespace symskill
