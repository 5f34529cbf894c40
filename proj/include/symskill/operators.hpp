#pragma once

// Lifted operator induction from predicate-abstracted demonstration
// boundaries: transitions are lifted via canonical role assignment, grouped
// by identical lifted effects, and pre/add/del/maintain computed as
// intersections over each group.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "symskill/predicates.hpp"
#include "symskill/segmentation.hpp"

namespace symskill {

struct Variable {
    std::string name;  // "?obj", "?ref", "?v1", ...
    std::string type;

    bool operator==(const Variable&) const = default;
    auto operator<=>(const Variable&) const = default;
};

struct LiftedAtom {
    std::string predicate;
    std::vector<Variable> args;

    bool operator==(const LiftedAtom&) const = default;
    auto operator<=>(const LiftedAtom&) const = default;

    std::string str() const {
        std::string s = predicate + "(";
        for (size_t i = 0; i < args.size(); ++i)
            s += (i ? "," : "") + args[i].name + ":" + args[i].type;
        return s + ")";
    }
};

enum class Phase { premotion, motion };

inline std::string to_string(Phase p) {
    return p == Phase::premotion ? "premotion" : "motion";
}

struct SegmentRef {
    int demo{};
    int episode{};
    Phase phase{Phase::premotion};
};

struct Operator {
    std::string name;
    std::vector<Variable> params;
    std::set<LiftedAtom> pre;
    std::set<LiftedAtom> add;
    std::set<LiftedAtom> del;
    std::set<LiftedAtom> maintain;
    std::string skill_ref;
    std::vector<SegmentRef> segments;
    Phase phase{Phase::premotion};
};

struct BoundaryData {
    // abstract states at t0, t_start, and the post-window end
    AbstractState s_before_pre;
    AbstractState s_start_motion;
    AbstractState s_after_motion;
    // atoms holding at every sample of each phase (endpoints included)
    AbstractState held_pre;
    AbstractState held_motion;
    bool has_premotion{false};
    int post_end_index{};
};

namespace detail {

inline AbstractState intersect(const AbstractState& a, const AbstractState& b) {
    AbstractState out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::inserter(out, out.begin()));
    return out;
}

inline AbstractState subtract(const AbstractState& a, const AbstractState& b) {
    AbstractState out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(out, out.begin()));
    return out;
}

}  // namespace detail

inline BoundaryData boundary_states(const Demonstration& demo, const Episode& ep,
                                    const PredicateLibraries& lib,
                                    double post_window_s = 2.0) {
    BoundaryData out;
    out.has_premotion = !ep.premotion.empty();
    if (out.has_premotion)
        out.s_before_pre = abstract_state(demo.state_at(ep.premotion.begin), lib);
    out.s_start_motion = abstract_state(demo.state_at(ep.t_start()), lib);

    int post_end = ep.t_stop();
    const double stop_time = demo.time_at(ep.t_stop());
    while (post_end + 1 < static_cast<int>(demo.size()) &&
           demo.time_at(post_end + 1) <= stop_time + post_window_s)
        ++post_end;
    out.post_end_index = post_end;
    out.s_after_motion = abstract_state(demo.state_at(post_end), lib);

    if (out.has_premotion) {
        out.held_pre = out.s_before_pre;
        for (int i = ep.premotion.begin + 1; i <= ep.t_start(); ++i)
            out.held_pre = detail::intersect(out.held_pre,
                                             abstract_state(demo.state_at(i), lib));
    }
    out.held_motion = out.s_start_motion;
    for (int i = ep.t_start() + 1; i <= ep.t_stop(); ++i)
        out.held_motion = detail::intersect(out.held_motion,
                                            abstract_state(demo.state_at(i), lib));
    return out;
}

struct Transition {
    AbstractState s0, s1, held;
    SegmentRef segment;
    std::string motion_object;
    std::optional<std::string> reference_object;
    std::map<std::string, std::string> object_types;  // id -> type name
};

namespace detail {

struct LiftedTransition {
    std::set<LiftedAtom> s0, s1, add, del, held;
    SegmentRef segment;
};

// Canonical role assignment: motion object -> ?obj, reference -> ?ref,
// remaining objects by type and first use over the sorted atom stream.
inline LiftedTransition lift(const Transition& tr) {
    std::map<std::string, Variable> binding;
    binding[tr.motion_object] = Variable{"?obj", tr.object_types.at(tr.motion_object)};
    if (tr.reference_object && *tr.reference_object != tr.motion_object)
        binding[*tr.reference_object] =
            Variable{"?ref", tr.object_types.at(*tr.reference_object)};
    int next = 1;
    auto var_for = [&](const std::string& id) -> Variable {
        auto it = binding.find(id);
        if (it != binding.end()) return it->second;
        Variable v{"?v" + std::to_string(next++), tr.object_types.at(id)};
        binding[id] = v;
        return v;
    };
    auto lift_set = [&](const AbstractState& s) {
        std::set<LiftedAtom> out;
        for (const auto& ga : s) {
            LiftedAtom la{ga.predicate, {}};
            for (const auto& arg : ga.args) la.args.push_back(var_for(arg));
            out.insert(std::move(la));
        }
        return out;
    };
    LiftedTransition lt;
    lt.segment = tr.segment;
    // assign variables in a fixed order: effects first so effect variables get
    // the lowest indices, then preconditions, then maintained atoms
    const AbstractState add_g = subtract(tr.s1, tr.s0);
    const AbstractState del_g = subtract(tr.s0, tr.s1);
    lt.add = lift_set(add_g);
    lt.del = lift_set(del_g);
    lt.s0 = lift_set(tr.s0);
    lt.s1 = lift_set(tr.s1);
    lt.held = lift_set(tr.held);
    return lt;
}

template <typename T>
std::set<T> intersect_sets(const std::set<T>& a, const std::set<T>& b) {
    std::set<T> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::inserter(out, out.begin()));
    return out;
}

}  // namespace detail

inline std::vector<Operator> induce_operators(const std::vector<Transition>& transitions) {
    std::vector<detail::LiftedTransition> lifted;
    for (const auto& tr : transitions) {
        if (tr.s0 == tr.s1) continue;  // cannot drive planning; dropped
        lifted.push_back(detail::lift(tr));
    }

    // group by (phase, lifted add, lifted del)
    using GroupKey = std::tuple<Phase, std::set<LiftedAtom>, std::set<LiftedAtom>>;
    std::map<GroupKey, std::vector<const detail::LiftedTransition*>> groups;
    for (const auto& lt : lifted)
        groups[{lt.segment.phase, lt.add, lt.del}].push_back(&lt);

    std::vector<Operator> ops;
    std::map<std::string, int> name_counts;
    for (const auto& [key, members] : groups) {
        Operator op;
        op.phase = std::get<0>(key);
        op.add = std::get<1>(key);
        op.del = std::get<2>(key);
        op.pre = members.front()->s0;
        op.maintain = members.front()->held;
        for (const auto* m : members) {
            op.pre = detail::intersect_sets(op.pre, m->s0);
            op.maintain = detail::intersect_sets(op.maintain, m->held);
            op.segments.push_back(m->segment);
        }
        // params: ?obj, ?ref, then extra variables by first occurrence
        std::map<std::string, Variable> vars;
        auto collect = [&](const std::set<LiftedAtom>& s) {
            for (const auto& a : s)
                for (const auto& v : a.args) vars.emplace(v.name, v);
        };
        collect(op.pre);
        collect(op.add);
        collect(op.del);
        collect(op.maintain);
        for (const char* role : {"?obj", "?ref"})
            if (vars.count(role)) {
                op.params.push_back(vars.at(role));
                vars.erase(role);
            }
        for (const auto& [n, v] : vars) op.params.push_back(v);

        // name from the dominant add effect
        std::string stem;
        for (const auto& a : op.add) {
            if (a.predicate == "GripperOpen") continue;
            stem = a.predicate.starts_with("Gripper-in-")
                       ? "Pick-" + a.predicate.substr(11)
                       : "Move-" + a.predicate;
            break;
        }
        if (stem.empty()) stem = std::string("Op-") + to_string(op.phase);
        const int idx = name_counts[stem]++;
        op.name = idx == 0 ? stem : stem + "#" + std::to_string(idx);
        ops.push_back(std::move(op));
    }
    return ops;
}

// Builds the transition list for a whole corpus.
inline std::vector<Transition> collect_transitions(
    const std::vector<Demonstration>& demos,
    const std::vector<std::vector<Episode>>& episodes, const PredicateLibraries& lib,
    double post_window_s = 2.0) {
    std::vector<Transition> out;
    for (size_t d = 0; d < demos.size(); ++d) {
        for (size_t e = 0; e < episodes[d].size(); ++e) {
            const auto& ep = episodes[d][e];
            const auto bd = boundary_states(demos[d], ep, lib, post_window_s);
            std::map<std::string, std::string> types;
            for (const auto& [id, obj] : demos[d].state_at(ep.t_start()).objects)
                types[id] = obj.type.name;
            if (bd.has_premotion) {
                Transition tr;
                tr.s0 = bd.s_before_pre;
                tr.s1 = bd.s_start_motion;
                tr.held = bd.held_pre;
                tr.segment = {static_cast<int>(d), static_cast<int>(e), Phase::premotion};
                tr.motion_object = ep.motion_object;
                tr.reference_object = ep.reference_object;
                tr.object_types = types;
                out.push_back(std::move(tr));
            }
            Transition tr;
            tr.s0 = bd.s_start_motion;
            tr.s1 = bd.s_after_motion;
            tr.held = bd.held_motion;
            tr.segment = {static_cast<int>(d), static_cast<int>(e), Phase::motion};
            tr.motion_object = ep.motion_object;
            tr.reference_object = ep.reference_object;
            tr.object_types = types;
            out.push_back(std::move(tr));
        }
    }
    return out;
}

// --- Grounding -------------------------------------------------------------

struct GroundOperator {
    // owning copy so skeletons outlive the operator list they were planned from
    std::shared_ptr<const Operator> op;
    std::map<std::string, std::string> binding;  // variable name -> object id

    GroundAtom instantiate(const LiftedAtom& la) const {
        GroundAtom ga{la.predicate, {}};
        for (const auto& v : la.args) ga.args.push_back(binding.at(v.name));
        return ga;
    }
    AbstractState instantiate_set(const std::set<LiftedAtom>& s) const {
        AbstractState out;
        for (const auto& la : s) out.insert(instantiate(la));
        return out;
    }
    bool applicable(const AbstractState& state) const {
        for (const auto& la : op->pre)
            if (!state.count(instantiate(la))) return false;
        return true;
    }
    AbstractState apply(const AbstractState& state) const {
        AbstractState out = detail::subtract(state, instantiate_set(op->del));
        for (const auto& la : op->add) out.insert(instantiate(la));
        return out;
    }
    std::string str() const {
        std::string s = op->name + "(";
        bool first = true;
        for (const auto& v : op->params) {
            if (!first) s += ",";
            s += binding.at(v.name);
            first = false;
        }
        return s + ")";
    }
};

inline std::optional<GroundOperator> ground(
    const Operator& op, const std::map<std::string, std::string>& binding,
    const std::map<std::string, std::string>& object_types) {
    for (const auto& v : op.params) {
        auto it = binding.find(v.name);
        if (it == binding.end()) throw TypeMismatch("binding missing " + v.name);
        auto ty = object_types.find(it->second);
        if (ty == object_types.end()) throw TypeMismatch("unknown object " + it->second);
        if (ty->second != v.type)
            throw TypeMismatch("object " + it->second + " is " + ty->second + ", need " +
                               v.type + " for " + v.name);
    }
    // distinct params must bind distinct objects
    std::set<std::string> used;
    for (const auto& v : op.params)
        if (!used.insert(binding.at(v.name)).second) return std::nullopt;
    return GroundOperator{std::make_shared<const Operator>(op), binding};
}

// Human-readable listing mirroring the learned-operator table shape.
inline std::string describe(const Operator& op) {
    auto set_str = [](const std::set<LiftedAtom>& s) {
        std::string out;
        for (const auto& a : s) out += (out.empty() ? "" : ", ") + a.str();
        return out.empty() ? "-" : out;
    };
    std::string s = op.name + " [" + to_string(op.phase) + "]\n";
    s += "  params: ";
    for (const auto& v : op.params) s += v.name + ":" + v.type + " ";
    s += "\n  pre: " + set_str(op.pre) + "\n";
    s += "  add: " + set_str(op.add) + "\n";
    s += "  del: " + set_str(op.del) + "\n";
    s += "  maintain: " + set_str(op.maintain) + "\n";
    return s;
}

}  // namespace symskill
