#pragma once

// Symbolic planning over the learned operators: exhaustive grounding over the
// typed scene objects, then A* on ground-atom states with unit action cost.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "symskill/operators.hpp"

namespace symskill {

struct Goal {
    AbstractState atoms;
};

struct PlanSkeleton {
    std::vector<GroundOperator> steps;

    std::string str() const {
        std::string s;
        for (size_t i = 0; i < steps.size(); ++i) {
            s += std::to_string(i + 1) + ". " + steps[i].str();
            if (i + 1 < steps.size()) s += "\n";
        }
        return s;
    }
};

struct PlannerConfig {
    size_t node_cap = 1000000;
};

inline std::map<std::string, std::string> object_types(const WorldState& s) {
    std::map<std::string, std::string> out;
    for (const auto& [id, obj] : s.objects) out[id] = obj.type.name;
    return out;
}

// Every type-consistent binding of every operator, distinct objects per
// binding, in a deterministic order: operators as given, objects sorted by id.
inline std::vector<GroundOperator> ground_all(
    const std::vector<Operator>& ops,
    const std::map<std::string, std::string>& types) {
    std::map<std::string, std::vector<std::string>> by_type;
    for (const auto& [id, ty] : types) by_type[ty].push_back(id);

    std::vector<GroundOperator> out;
    for (const auto& op : ops) {
        std::vector<std::map<std::string, std::string>> partial{{}};
        for (const auto& v : op.params) {
            std::vector<std::map<std::string, std::string>> next;
            auto it = by_type.find(v.type);
            if (it == by_type.end()) {
                partial.clear();
                break;
            }
            for (const auto& binding : partial)
                for (const auto& id : it->second) {
                    auto b = binding;
                    b[v.name] = id;
                    next.push_back(std::move(b));
                }
            partial = std::move(next);
        }
        for (const auto& binding : partial)
            if (auto g = ground(op, binding, types)) out.push_back(*g);
    }
    return out;
}

namespace detail {

inline int unsatisfied(const AbstractState& s, const Goal& goal) {
    int n = 0;
    for (const auto& a : goal.atoms)
        if (!s.count(a)) ++n;
    return n;
}

}  // namespace detail

// A* with unit costs. The heuristic is the unsatisfied-goal count divided by
// the largest number of goal atoms any single ground step adds, rounded up;
// a step can satisfy at most that many goal atoms, so the estimate never
// exceeds the true cost.
inline std::optional<PlanSkeleton> plan(const AbstractState& s0, const Goal& goal,
                                        const std::vector<Operator>& ops,
                                        const std::map<std::string, std::string>& types,
                                        const PlannerConfig& cfg = {}) {
    const auto grounded = ground_all(ops, types);
    int max_add = 1;
    for (const auto& g : grounded) {
        int n = 0;
        for (const auto& la : g.op->add) n += goal.atoms.count(g.instantiate(la));
        max_add = std::max(max_add, n);
    }
    auto h = [&](const AbstractState& s) {
        return (detail::unsatisfied(s, goal) + max_add - 1) / max_add;
    };

    struct Node {
        AbstractState state;
        int g{};
        int parent{-1};
        int via{-1};  // index into grounded
    };
    std::vector<Node> nodes{{s0, 0, -1, -1}};

    struct Entry {
        int f;
        uint64_t order;
        int node;
        bool operator>(const Entry& o) const {
            return std::tie(f, order) > std::tie(o.f, o.order);
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
    uint64_t counter = 0;
    open.push({h(s0), counter++, 0});

    std::map<AbstractState, int> best_g{{s0, 0}};
    size_t expanded = 0;

    while (!open.empty()) {
        const Entry e = open.top();
        open.pop();
        const Node cur = nodes[e.node];
        if (cur.g > best_g.at(cur.state)) continue;
        if (detail::unsatisfied(cur.state, goal) == 0) {
            PlanSkeleton sk;
            for (int i = e.node; nodes[i].via >= 0; i = nodes[i].parent)
                sk.steps.push_back(grounded[nodes[i].via]);
            std::reverse(sk.steps.begin(), sk.steps.end());
            return sk;
        }
        if (++expanded > cfg.node_cap)
            throw SearchBudgetExceeded("node cap " + std::to_string(cfg.node_cap));

        for (size_t gi = 0; gi < grounded.size(); ++gi) {
            const auto& op = grounded[gi];
            if (!op.applicable(cur.state)) continue;
            AbstractState succ = op.apply(cur.state);
            const int g2 = cur.g + 1;
            auto it = best_g.find(succ);
            if (it != best_g.end() && it->second <= g2) continue;
            best_g[succ] = g2;
            nodes.push_back({std::move(succ), g2, e.node, static_cast<int>(gi)});
            open.push({g2 + h(nodes.back().state), counter++,
                       static_cast<int>(nodes.size() - 1)});
        }
    }
    return std::nullopt;
}

inline bool validate(const PlanSkeleton& sk, const AbstractState& s0, const Goal& goal) {
    AbstractState s = s0;
    for (const auto& step : sk.steps) {
        if (!step.applicable(s)) return false;
        s = step.apply(s);
    }
    return detail::unsatisfied(s, goal) == 0;
}

}  // namespace symskill
