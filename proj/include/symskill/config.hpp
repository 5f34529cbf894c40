#pragma once

// One config file for the whole toolkit. Every tunable named elsewhere has a
// key here so nothing is compiled-in only; absent keys keep their defaults.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "symskill/bundle.hpp"
#include "symskill/executor.hpp"
#include "symskill/planner.hpp"

namespace symskill {

struct RolloutConfig {
    double dt = 0.01;
    double t_max = 30.0;
    double eps_conv = 1e-3;
};

struct Config {
    SegmentationConfig seg;
    PredicateConfig pred;
    SkillConfig skill;
    PlannerConfig planner;
    ExecutorConfig exec;
    RolloutConfig rollout;
    uint64_t seed = 0;

    LearnConfig learn() const { return LearnConfig{seg, pred, skill, seed}; }
};

namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace detail

inline Config parse_config(const json& j) {
    Config c;
    if (j.contains("segmentation")) {
        const auto& s = j.at("segmentation");
        detail::maybe(s, "v_thresh", c.seg.v_thresh);
        detail::maybe(s, "w_thresh", c.seg.w_thresh);
        detail::maybe(s, "smoothing_window", c.seg.smoothing_window);
        detail::maybe(s, "exit_ratio", c.seg.exit_ratio);
        detail::maybe(s, "min_segment_len", c.seg.min_segment_len);
        detail::maybe(s, "post_window_s", c.seg.post_window_s);
    }
    if (j.contains("predicates")) {
        const auto& p = j.at("predicates");
        detail::maybe(p, "eps_pos", c.pred.eps_pos);
        detail::maybe(p, "eps_ori", c.pred.eps_ori);
        detail::maybe(p, "ee_trailing_window", c.pred.ee_trailing_window);
        detail::maybe(p, "k_clusters", c.pred.k_clusters);
    }
    if (j.contains("skills")) {
        const auto& s = j.at("skills");
        detail::maybe(s, "K", c.skill.K);
        detail::maybe(s, "k_max", c.skill.k_max);
        detail::maybe(s, "em_max_iters", c.skill.em_max_iters);
        detail::maybe(s, "em_tol", c.skill.em_tol);
        detail::maybe(s, "cov_floor", c.skill.cov_floor);
        detail::maybe(s, "ridge", c.skill.ridge);
        detail::maybe(s, "eps_stab", c.skill.eps_stab);
        detail::maybe(s, "min_rate_ratio", c.skill.min_rate_ratio);
        detail::maybe(s, "control_dt", c.skill.control_dt);
        detail::maybe(s, "v_max", c.skill.v_max);
        detail::maybe(s, "w_max", c.skill.w_max);
        detail::maybe(s, "smoothing_window", c.skill.smoothing_window);
        detail::maybe(s, "ori_spread_min", c.skill.ori_spread_min);
    }
    if (j.contains("planner")) {
        detail::maybe(j.at("planner"), "node_cap", c.planner.node_cap);
    }
    if (j.contains("executor")) {
        const auto& e = j.at("executor");
        detail::maybe(e, "replan_limit", c.exec.replan_limit);
        detail::maybe(e, "conv_eps", c.exec.conv_eps);
        detail::maybe(e, "control_dt", c.exec.control_dt);
        detail::maybe(e, "margin", c.exec.margin);
        detail::maybe(e, "settle_s", c.exec.settle_s);
        detail::maybe(e, "skill_timeout_s", c.exec.skill_timeout_s);
        detail::maybe(e, "stall_s", c.exec.stall_s);
        detail::maybe(e, "record_telemetry", c.exec.record_telemetry);
        if (e.contains("damping"))
            c.exec.damping = e.at("damping").get<double>() * Mat6::Identity();
        if (c.exec.replan_limit < 1) throw SchemaError("replan_limit must be >= 1");
        if (c.exec.control_dt <= 0) throw SchemaError("control_dt must be positive");
    }
    if (j.contains("rollout")) {
        const auto& r = j.at("rollout");
        detail::maybe(r, "dt", c.rollout.dt);
        detail::maybe(r, "t_max", c.rollout.t_max);
        detail::maybe(r, "eps_conv", c.rollout.eps_conv);
    }
    detail::maybe(j, "seed", c.seed);
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad config: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad config: ") + e.what());
    }
}

// Goal files: {"atoms":[{"predicate":"...","args":["id",...]}]}
inline Goal parse_goal(const json& j) {
    Goal g;
    for (const auto& ja : j.at("atoms")) {
        GroundAtom a;
        a.predicate = ja.at("predicate").get<std::string>();
        for (const auto& arg : ja.at("args")) a.args.push_back(arg.get<std::string>());
        g.atoms.insert(std::move(a));
    }
    return g;
}

inline Goal load_goal(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad goal file: ") + e.what());
    }
    try {
        return parse_goal(j);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad goal file: ") + e.what());
    }
}

}  // namespace symskill
