#pragma once

// The model bundle: everything the online pipeline needs, persisted as one
// self-describing JSON file, plus the offline learning pipeline that produces
// it (segmentation -> reference selection -> predicates -> operators ->
// skills). Serialization is deterministic: sorted keys, shortest-round-trip
// floats, so save -> load -> save is byte-identical.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symskill/operators.hpp"
#include "symskill/predicates.hpp"
#include "symskill/reference.hpp"
#include "symskill/segmentation.hpp"
#include "symskill/skills.hpp"
#include "symskill/world.hpp"

namespace symskill {

struct ModelBundle {
    int version{1};
    std::set<std::string> types;
    PredicateLibraries predicates;
    std::vector<Operator> operators;
    std::map<std::string, Skill> skills;
    json config_snapshot = json::object();
    std::string corpus_hash;
    uint64_t seed{0};

    const Skill& skill(const std::string& id) const {
        auto it = skills.find(id);
        if (it == skills.end()) throw UnknownSkill("unknown skill id: " + id);
        return it->second;
    }
};

// --- JSON (de)serialization ------------------------------------------------

namespace detail {

inline json j_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json j_quat(const Quat& q_in) {
    const Quat q = canonical(q_in);
    return json::array({q.w(), q.x(), q.y(), q.z()});
}
inline json j_pose(const Pose& p) {
    return json{{"p", j_vec3(p.position)}, {"q", j_quat(p.orientation)}};
}
inline json j_mat3(const Mat3& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
    return a;
}
inline Mat3 mat3_from(const json& j) {
    if (!j.is_array() || j.size() != 9) throw SchemaError("bad 3x3 matrix");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = j[r * 3 + c].get<double>();
    return m;
}

inline json j_gaussian(const Se3Gaussian& g) {
    return json{{"mu_pos", j_vec3(g.mu_pos)},
                {"cov_pos", j_mat3(g.cov_pos)},
                {"mu_ori", j_vec3(g.mu_ori)},
                {"cov_ori", j_mat3(g.cov_ori)}};
}
inline Se3Gaussian gaussian_from(const json& j) {
    Se3Gaussian g;
    g.mu_pos = parse_vec3(j.at("mu_pos"), "mu_pos");
    g.cov_pos = mat3_from(j.at("cov_pos"));
    g.mu_ori = parse_vec3(j.at("mu_ori"), "mu_ori");
    g.cov_ori = mat3_from(j.at("cov_ori"));
    return g;
}

inline json j_predicate(const RelPosePredicate& p) {
    return json{{"name", p.name},
                {"subject_type", p.subject_type},
                {"reference_type", p.reference_type},
                {"gaussian", j_gaussian(p.gaussian)},
                {"eps_pos", p.eps_pos},
                {"eps_ori", p.eps_ori}};
}
inline RelPosePredicate predicate_from(const json& j) {
    RelPosePredicate p;
    p.name = j.at("name").get<std::string>();
    p.subject_type = j.at("subject_type").get<std::string>();
    p.reference_type = j.at("reference_type").get<std::string>();
    p.gaussian = gaussian_from(j.at("gaussian"));
    p.eps_pos = j.at("eps_pos").get<double>();
    p.eps_ori = j.at("eps_ori").get<double>();
    return p;
}

inline json j_lifted(const LiftedAtom& a) {
    json args = json::array();
    for (const auto& v : a.args) args.push_back(json{{"name", v.name}, {"type", v.type}});
    return json{{"predicate", a.predicate}, {"args", args}};
}
inline LiftedAtom lifted_from(const json& j) {
    LiftedAtom a;
    a.predicate = j.at("predicate").get<std::string>();
    for (const auto& jv : j.at("args"))
        a.args.push_back(Variable{jv.at("name").get<std::string>(),
                                  jv.at("type").get<std::string>()});
    return a;
}
inline json j_lifted_set(const std::set<LiftedAtom>& s) {
    json a = json::array();
    for (const auto& la : s) a.push_back(j_lifted(la));
    return a;
}
inline std::set<LiftedAtom> lifted_set_from(const json& j) {
    std::set<LiftedAtom> s;
    for (const auto& ja : j) s.insert(lifted_from(ja));
    return s;
}

inline json j_operator(const Operator& op) {
    json params = json::array();
    for (const auto& v : op.params) params.push_back(json{{"name", v.name}, {"type", v.type}});
    json segs = json::array();
    for (const auto& s : op.segments)
        segs.push_back(json{{"demo", s.demo},
                            {"episode", s.episode},
                            {"phase", to_string(s.phase)}});
    return json{{"name", op.name},
                {"params", params},
                {"pre", j_lifted_set(op.pre)},
                {"add", j_lifted_set(op.add)},
                {"del", j_lifted_set(op.del)},
                {"maintain", j_lifted_set(op.maintain)},
                {"skill_ref", op.skill_ref},
                {"segments", segs},
                {"phase", to_string(op.phase)}};
}
inline Phase phase_from(const std::string& s) {
    if (s == "premotion") return Phase::premotion;
    if (s == "motion") return Phase::motion;
    throw SchemaError("unknown phase: " + s);
}
inline Operator operator_from(const json& j) {
    Operator op;
    op.name = j.at("name").get<std::string>();
    for (const auto& jv : j.at("params"))
        op.params.push_back(Variable{jv.at("name").get<std::string>(),
                                     jv.at("type").get<std::string>()});
    op.pre = lifted_set_from(j.at("pre"));
    op.add = lifted_set_from(j.at("add"));
    op.del = lifted_set_from(j.at("del"));
    op.maintain = lifted_set_from(j.at("maintain"));
    op.skill_ref = j.at("skill_ref").get<std::string>();
    for (const auto& js : j.at("segments"))
        op.segments.push_back(SegmentRef{js.at("demo").get<int>(),
                                         js.at("episode").get<int>(),
                                         phase_from(js.at("phase").get<std::string>())});
    op.phase = phase_from(j.at("phase").get<std::string>());
    return op;
}

inline json j_gmm(const GmmParams& g) {
    json mu = json::array(), sigma = json::array();
    for (const auto& m : g.mu) mu.push_back(j_vec3(m));
    for (const auto& s : g.sigma) sigma.push_back(j_mat3(s));
    return json{{"K", g.K}, {"pi", g.pi}, {"mu", mu}, {"sigma", sigma}};
}
inline GmmParams gmm_from(const json& j) {
    GmmParams g;
    g.K = j.at("K").get<int>();
    g.pi = j.at("pi").get<std::vector<double>>();
    for (const auto& jm : j.at("mu")) g.mu.push_back(parse_vec3(jm, "mu"));
    for (const auto& js : j.at("sigma")) g.sigma.push_back(mat3_from(js));
    return g;
}

inline json j_lpvds(const LpvDsParams& p) {
    json a = json::array();
    for (const auto& m : p.A) a.push_back(j_mat3(m));
    return json{{"gmm", j_gmm(p.gmm)},
                {"A", a},
                {"attractor", j_vec3(p.attractor)},
                {"rms_velocity_error", p.rms_velocity_error},
                {"unconstrained_rms_error", p.unconstrained_rms_error}};
}
inline LpvDsParams lpvds_from(const json& j) {
    LpvDsParams p;
    p.gmm = gmm_from(j.at("gmm"));
    for (const auto& jm : j.at("A")) p.A.push_back(mat3_from(jm));
    p.attractor = parse_vec3(j.at("attractor"), "attractor");
    p.rms_velocity_error = j.at("rms_velocity_error").get<double>();
    p.unconstrained_rms_error = j.at("unconstrained_rms_error").get<double>();
    return p;
}

inline json j_skill(const Skill& s) {
    return json{{"id", s.id},
                {"frame", s.frame == SkillFrame::motion_object ? "motion_object"
                                                               : "reference_object"},
                {"gripper", to_string(s.gripper)},
                {"position_ds", j_lpvds(s.position_ds)},
                {"orientation", json{{"attractor_q", j_quat(s.orientation_ds.attractor_q)},
                                     {"tangent_ds", j_lpvds(s.orientation_ds.tangent_ds)}}}};
}
inline Skill skill_from(const json& j) {
    Skill s;
    s.id = j.at("id").get<std::string>();
    const std::string f = j.at("frame").get<std::string>();
    if (f == "motion_object")
        s.frame = SkillFrame::motion_object;
    else if (f == "reference_object")
        s.frame = SkillFrame::reference_object;
    else
        throw SchemaError("unknown skill frame: " + f);
    const std::string g = j.at("gripper").get<std::string>();
    s.gripper = g == "open" ? GripperState::open : GripperState::closed;
    s.position_ds = lpvds_from(j.at("position_ds"));
    s.orientation_ds.attractor_q = parse_quat(j.at("orientation").at("attractor_q"), "q*");
    s.orientation_ds.tangent_ds = lpvds_from(j.at("orientation").at("tangent_ds"));
    return s;
}

}  // namespace detail

inline json bundle_to_json(const ModelBundle& b) {
    json types = json::array();
    for (const auto& t : b.types) types.push_back(t);
    json preds = json::array();
    for (const auto& [name, p] : b.predicates.by_name) preds.push_back(detail::j_predicate(p));
    json ops = json::array();
    for (const auto& op : b.operators) ops.push_back(detail::j_operator(op));
    json skills = json::array();
    for (const auto& [id, s] : b.skills) skills.push_back(detail::j_skill(s));
    return json{{"format", "symskill-bundle"},
                {"version", b.version},
                {"types", types},
                {"predicates", json{{"eps_pos", b.predicates.eps_pos},
                                    {"eps_ori", b.predicates.eps_ori},
                                    {"library", preds}}},
                {"operators", ops},
                {"skills", skills},
                {"config", b.config_snapshot},
                {"provenance", json{{"corpus_hash", b.corpus_hash}, {"seed", b.seed}}}};
}

inline ModelBundle bundle_from_json(const json& j) {
    if (j.value("format", "") != "symskill-bundle") throw SchemaError("not a symskill bundle");
    ModelBundle b;
    b.version = j.at("version").get<int>();
    for (const auto& jt : j.at("types")) b.types.insert(jt.get<std::string>());
    b.predicates.eps_pos = j.at("predicates").at("eps_pos").get<double>();
    b.predicates.eps_ori = j.at("predicates").at("eps_ori").get<double>();
    for (const auto& jp : j.at("predicates").at("library")) {
        auto p = detail::predicate_from(jp);
        b.predicates.by_name[p.name] = std::move(p);
    }
    for (const auto& jo : j.at("operators")) b.operators.push_back(detail::operator_from(jo));
    for (const auto& js : j.at("skills")) {
        auto s = detail::skill_from(js);
        b.skills[s.id] = std::move(s);
    }
    b.config_snapshot = j.at("config");
    b.corpus_hash = j.at("provenance").at("corpus_hash").get<std::string>();
    b.seed = j.at("provenance").at("seed").get<uint64_t>();
    for (const auto& op : b.operators)
        if (!op.skill_ref.empty() && !b.skills.count(op.skill_ref))
            throw SchemaError("unresolved skill_ref: " + op.skill_ref);
    return b;
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << bundle_to_json(b).dump() << "\n";
    if (!out) throw IoError("write failure on " + path);
}

inline ModelBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad bundle: ") + e.what());
    }
    try {
        return bundle_from_json(j);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad bundle: ") + e.what());
    }
}

// --- Offline learning pipeline ---------------------------------------------

struct LearnConfig {
    SegmentationConfig seg;
    PredicateConfig pred;
    SkillConfig skill;
    uint64_t seed{0};
};

struct LearnStats {
    int demos{0};
    int episodes{0};
    int predicates{0};
    int operators{0};
    int skills{0};
};

inline std::string corpus_hash(const std::vector<Demonstration>& demos) {
    std::ostringstream ss;
    write_demonstrations(demos, ss);
    return request_hash(ss.str());
}

inline ModelBundle learn(const std::vector<Demonstration>& demos, const LearnConfig& cfg_in,
                         const SelectorContext& sel = {}, LearnStats* stats = nullptr) {
    if (demos.empty()) throw SchemaError("empty demonstration corpus");
    LearnConfig cfg = cfg_in;
    cfg.pred.seed = cfg.seed;
    cfg.skill.seed = cfg.seed;

    std::vector<std::vector<Episode>> episodes;
    for (const auto& d : demos) episodes.push_back(detect_episodes(d, cfg.seg));
    int n_eps = 0;
    for (size_t d = 0; d < demos.size(); ++d) {
        for (size_t e = 0; e < episodes[d].size(); ++e) {
            episodes[d][e].reference_object = select_reference(
                episodes[d][e], demos[d], static_cast<int>(d), static_cast<int>(e), sel);
            ++n_eps;
        }
    }

    const auto [pre, motion] = aggregate_datasets(demos, episodes, cfg.seg);
    ModelBundle b;
    b.predicates = build_libraries(pre, motion, cfg.pred);
    b.operators = induce_operators(collect_transitions(demos, episodes, b.predicates,
                                                       cfg.seg.post_window_s));

    for (auto& op : b.operators) {
        std::vector<std::vector<TimedPose>> trajs;
        for (const auto& seg : op.segments) {
            const auto& demo = demos[seg.demo];
            const auto& ep = episodes[seg.demo][seg.episode];
            if (seg.phase == Phase::premotion)
                trajs.push_back(premotion_traj(demo, ep));
            else
                trajs.push_back(motion_rel_traj(demo, ep, *ep.reference_object, "ee"));
        }
        Skill s;
        s.id = op.name;
        s.frame = op.phase == Phase::premotion ? SkillFrame::motion_object
                                               : SkillFrame::reference_object;
        s.position_ds = learn_lpvds(trajs, cfg.skill.K, cfg.skill);
        s.orientation_ds = learn_orientation_ds(trajs, std::nullopt, 1, cfg.skill);
        s.gripper = op.add.count(LiftedAtom{"GripperOpen", {}}) ? GripperState::open
                                                                : GripperState::closed;
        op.skill_ref = s.id;
        b.skills[s.id] = std::move(s);
    }

    for (const auto& d : demos)
        for (const auto& [id, o] : d.records.front().second.objects)
            b.types.insert(o.type.name);
    b.corpus_hash = corpus_hash(demos);
    b.seed = cfg.seed;
    b.config_snapshot = json{
        {"segmentation",
         json{{"v_thresh", cfg.seg.v_thresh},
              {"w_thresh", cfg.seg.w_thresh},
              {"smoothing_window", cfg.seg.smoothing_window},
              {"exit_ratio", cfg.seg.exit_ratio},
              {"min_segment_len", cfg.seg.min_segment_len},
              {"post_window_s", cfg.seg.post_window_s}}},
        {"predicates",
         json{{"eps_pos", cfg.pred.eps_pos},
              {"eps_ori", cfg.pred.eps_ori},
              {"ee_trailing_window", cfg.pred.ee_trailing_window},
              {"k_clusters", cfg.pred.k_clusters}}},
        {"skills",
         json{{"K", cfg.skill.K},
              {"k_max", cfg.skill.k_max},
              {"em_max_iters", cfg.skill.em_max_iters},
              {"em_tol", cfg.skill.em_tol},
              {"cov_floor", cfg.skill.cov_floor},
              {"ridge", cfg.skill.ridge},
              {"eps_stab", cfg.skill.eps_stab},
              {"min_rate_ratio", cfg.skill.min_rate_ratio},
              {"control_dt", cfg.skill.control_dt},
              {"v_max", cfg.skill.v_max},
              {"w_max", cfg.skill.w_max},
              {"smoothing_window", cfg.skill.smoothing_window},
              {"ori_spread_min", cfg.skill.ori_spread_min}}},
        {"seed", cfg.seed}};

    if (stats) {
        stats->demos = static_cast<int>(demos.size());
        stats->episodes = n_eps;
        stats->predicates = static_cast<int>(b.predicates.by_name.size());
        stats->operators = static_cast<int>(b.operators.size());
        stats->skills = static_cast<int>(b.skills.size());
    }
    return b;
}

}  // namespace symskill
