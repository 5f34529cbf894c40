// symskill command line: learn models from demo logs, run them in the
// simulator, evaluate over scenario suites, roll out single skills, and
// generate scripted demonstrations.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "symskill/config.hpp"
#include "symskill/executor.hpp"

namespace fs = std::filesystem;
using namespace symskill;

namespace {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel g_log_level = LogLevel::info;

void log_at(LogLevel lvl, const std::string& msg) {
    if (lvl > g_log_level) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

LogLevel parse_log_level(const std::string& s) {
    if (s == "error") return LogLevel::error;
    if (s == "warn") return LogLevel::warn;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw CLI::ValidationError("--log-level", "expected error|warn|info|debug");
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// annotation sidecar: {"demos":[{"references":["pan", ...]}, ...]}
std::map<std::pair<int, int>, std::string> load_annotations(const std::string& path) {
    std::map<std::pair<int, int>, std::string> out;
    const json j = load_json(path);
    int d = 0;
    for (const auto& jd : j.at("demos")) {
        int e = 0;
        for (const auto& jr : jd.at("references")) out[{d, e++}] = jr.get<std::string>();
        ++d;
    }
    return out;
}

int cmd_learn(const std::string& demos_path, const Config& cfg, const std::string& out_path,
              const std::string& selector, const std::string& annotations_path,
              const std::string& replay_path) {
    const auto demos = load_demonstrations(demos_path);

    SelectorContext sel;
    std::map<std::pair<int, int>, std::string> oracle;
    ReplayClient replay;
    if (selector == "oracle") {
        if (annotations_path.empty())
            throw SchemaError("oracle selector needs --annotations");
        oracle = load_annotations(annotations_path);
        sel.kind = SelectorKind::oracle;
        sel.oracle_map = &oracle;
    } else if (selector == "external") {
        if (replay_path.empty())
            throw SchemaError("external selector needs --replay");
        replay = ReplayClient(replay_path);
        sel.kind = SelectorKind::external;
        sel.external = &replay;
    } else if (selector != "heuristic") {
        throw SchemaError("unknown selector: " + selector);
    }

    LearnStats stats;
    const ModelBundle bundle = learn(demos, cfg.learn(), sel, &stats);
    save_bundle(bundle, out_path);

    std::cout << "demonstrations: " << stats.demos << "\n"
              << "episodes:       " << stats.episodes << "\n"
              << "predicates:     " << stats.predicates << "\n"
              << "operators:      " << stats.operators << "\n"
              << "skills:         " << stats.skills << "\n";
    for (const auto& [id, s] : bundle.skills)
        std::cout << "  " << id << ": rms velocity error "
                  << s.position_ds.rms_velocity_error << " m/s (unconstrained "
                  << s.position_ds.unconstrained_rms_error << ")\n";
    std::cout << "bundle: " << out_path << " (corpus " << bundle.corpus_hash << ", seed "
              << bundle.seed << ")\n";
    return 0;
}

int cmd_execute(const std::string& bundle_path, const std::string& scenario_path,
                const std::string& goal_path, const Config& cfg,
                const std::string& report_path, const std::string& telemetry_path) {
    const auto bundle = load_bundle(bundle_path);
    const auto sc = load_scenario(scenario_path);
    const Goal goal = load_goal(goal_path);
    SimWorld w = make_world(sc);
    ExecutorConfig ecfg = cfg.exec;
    ecfg.record_telemetry = ecfg.record_telemetry || !telemetry_path.empty();

    const auto report = execute(goal, w, bundle, ecfg, cfg.seed, sc.disturbances);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw IoError("cannot write " + report_path);
        out << report_to_json(report).dump(2) << "\n";
    }
    if (!telemetry_path.empty()) {
        std::ofstream out(telemetry_path);
        if (!out) throw IoError("cannot write " + telemetry_path);
        write_telemetry_csv(report, out);
    }
    std::cout << (report.succeeded() ? "Success" : "Failure") << " replans=" << report.replans
              << " resamples=" << report.resamples << " sim_time=" << report.sim_time_s
              << "s\n";
    return report.succeeded() ? 0 : 1;
}

int cmd_eval(const std::string& bundle_path, const std::string& suite_path, int trials,
             const Config& cfg, const std::string& csv_path) {
    const auto bundle = load_bundle(bundle_path);
    const json suite = load_json(suite_path);
    const fs::path base = fs::path(suite_path).parent_path();
    const double jitter = suite.value("jitter_pos", 0.0);

    struct Row {
        std::string name;
        int trials{0};
        int successes{0};
        double replans{0}, resamples{0}, plan_ms{0};
    };
    std::vector<Row> rows;

    for (const auto& jt : suite.at("tasks")) {
        Row row;
        row.name = jt.at("name").get<std::string>();
        const auto sc = load_scenario((base / jt.at("scenario").get<std::string>()).string());
        const Goal goal = parse_goal(jt.at("goal"));
        int n_plans = 0;
        for (int t = 0; t < trials; ++t) {
            SimWorld w = make_world(sc);
            std::mt19937_64 rng(cfg.seed * 1000003 + 7919 * t + fnv1a64(row.name));
            std::normal_distribution<double> n01;
            for (auto& [id, o] : w.objects)
                if (o.kind == SimObject::Kind::free_rigid) {
                    o.pose.position.x() += jitter * n01(rng);
                    o.pose.position.y() += jitter * n01(rng);
                }
            ExecutorConfig ecfg = cfg.exec;
            ecfg.record_telemetry = false;
            const auto report = execute(goal, w, bundle, ecfg, rng(), sc.disturbances);
            ++row.trials;
            row.successes += report.succeeded();
            row.replans += report.replans;
            row.resamples += report.resamples;
            row.plan_ms += std::accumulate(report.plan_ms.begin(), report.plan_ms.end(), 0.0);
            n_plans += static_cast<int>(report.plan_ms.size());
            log_at(LogLevel::debug, row.name + " trial " + std::to_string(t) + ": " +
                                        (report.succeeded() ? "success" : "failure"));
        }
        if (row.trials) {
            row.replans /= row.trials;
            row.resamples /= row.trials;
            row.plan_ms = n_plans ? row.plan_ms / n_plans : 0.0;
        }
        rows.push_back(row);
    }

    std::ostringstream csv;
    csv << "task,trials,success_rate,mean_replans,mean_resamples,mean_plan_ms\n";
    Row avg;
    avg.name = "average";
    for (const auto& r : rows) {
        const double rate = r.trials ? double(r.successes) / r.trials : 0.0;
        csv << r.name << "," << r.trials << "," << rate << "," << r.replans << ","
            << r.resamples << "," << r.plan_ms << "\n";
        avg.trials += r.trials;
        avg.successes += r.successes;
        avg.replans += r.replans;
        avg.resamples += r.resamples;
        avg.plan_ms += r.plan_ms;
    }
    if (!rows.empty()) {
        const size_t n = rows.size();
        csv << "average," << avg.trials << ","
            << (avg.trials ? double(avg.successes) / avg.trials : 0.0) << ","
            << avg.replans / n << "," << avg.resamples / n << "," << avg.plan_ms / n << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path);
        out << csv.str();
    }

    // aligned text table
    std::cout << std::left << std::setw(28) << "task" << std::right << std::setw(8) << "trials"
              << std::setw(10) << "success" << std::setw(10) << "replans" << std::setw(11)
              << "resamples" << std::setw(10) << "plan ms" << "\n";
    auto print_row = [](const std::string& name, int tr, double rate, double rp, double rs,
                        double ms) {
        std::cout << std::left << std::setw(28) << name << std::right << std::setw(8) << tr
                  << std::setw(10) << std::fixed << std::setprecision(2) << rate
                  << std::setw(10) << rp << std::setw(11) << rs << std::setw(10)
                  << std::setprecision(3) << ms << "\n";
        std::cout.unsetf(std::ios::fixed);
    };
    for (const auto& r : rows)
        print_row(r.name, r.trials, r.trials ? double(r.successes) / r.trials : 0.0, r.replans,
                  r.resamples, r.plan_ms);
    if (!rows.empty())
        print_row("average", avg.trials, avg.trials ? double(avg.successes) / avg.trials : 0.0,
                  avg.replans / rows.size(), avg.resamples / rows.size(),
                  avg.plan_ms / rows.size());
    return 0;
}

void write_svg(const std::string& path,
               const std::vector<std::vector<Vec3>>& demo_curves,
               const std::vector<std::vector<Vec3>>& rollout_curves, const Vec3& attractor) {
    double min_x = attractor.x(), max_x = attractor.x();
    double min_y = attractor.y(), max_y = attractor.y();
    auto expand = [&](const std::vector<std::vector<Vec3>>& curves) {
        for (const auto& c : curves)
            for (const auto& p : c) {
                min_x = std::min(min_x, p.x());
                max_x = std::max(max_x, p.x());
                min_y = std::min(min_y, p.y());
                max_y = std::max(max_y, p.y());
            }
    };
    expand(demo_curves);
    expand(rollout_curves);
    const double pad = 0.05 * std::max({max_x - min_x, max_y - min_y, 1e-3});
    min_x -= pad;
    max_x += pad;
    min_y -= pad;
    max_y += pad;
    const double w = 640, h = 480;
    const double sx = w / (max_x - min_x), sy = h / (max_y - min_y);
    auto px = [&](const Vec3& p) { return (p.x() - min_x) * sx; };
    auto py = [&](const Vec3& p) { return h - (p.y() - min_y) * sy; };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto polyline = [&](const std::vector<Vec3>& c, const char* color, const char* cls) {
        out << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : c) out << px(p) << "," << py(p) << " ";
        out << "\"/>\n";
    };
    for (const auto& c : demo_curves) polyline(c, "#888888", "demo");
    for (const auto& c : rollout_curves) polyline(c, "#1565c0", "rollout");
    out << "<circle class=\"attractor\" cx=\"" << px(attractor) << "\" cy=\"" << py(attractor)
        << "\" r=\"5\" fill=\"#c62828\"/>\n</svg>\n";
}

int cmd_rollout(const std::string& bundle_path, const std::string& skill_id,
                const std::string& starts_path, const Config& cfg,
                const std::string& csv_path, const std::string& plot_path,
                const std::string& demos_path) {
    const auto bundle = load_bundle(bundle_path);
    const Skill& skill = bundle.skill(skill_id);

    std::vector<Pose> starts;
    const json jstarts = load_json(starts_path);
    for (const auto& js : jstarts.at("starts"))
        starts.push_back(Pose{detail::parse_vec3(js.at("p"), "start"),
                              detail::parse_quat(js.at("q"), "start")});

    std::vector<std::vector<Vec3>> rollout_curves;
    std::ostringstream csv;
    csv << "rollout,t,px,py,pz,qw,qx,qy,qz\n";
    for (size_t i = 0; i < starts.size(); ++i) {
        const auto rr = rollout(skill, starts[i], cfg.rollout.dt, cfg.rollout.t_max,
                                cfg.rollout.eps_conv);
        std::vector<Vec3> curve;
        for (const auto& tp : rr.trajectory) {
            curve.push_back(tp.pose.position);
            const Quat q = canonical(tp.pose.orientation);
            csv << i << "," << tp.t << "," << tp.pose.position.x() << ","
                << tp.pose.position.y() << "," << tp.pose.position.z() << "," << q.w() << ","
                << q.x() << "," << q.y() << "," << q.z() << "\n";
        }
        rollout_curves.push_back(std::move(curve));
        log_at(LogLevel::info, "rollout " + std::to_string(i) + ": " +
                                   std::to_string(rr.trajectory.size()) + " samples, " +
                                   (rr.converged ? "converged" : "hit t_max"));
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path);
        out << csv.str();
    } else {
        std::cout << csv.str();
    }

    // demo curves come from the training segments recorded on the operator
    std::vector<std::vector<Vec3>> demo_curves;
    if (!demos_path.empty()) {
        const auto demos = load_demonstrations(demos_path);
        for (const auto& op : bundle.operators) {
            if (op.skill_ref != skill_id) continue;
            std::vector<std::vector<Episode>> episodes;
            for (const auto& d : demos) episodes.push_back(detect_episodes(d, cfg.seg));
            for (const auto& seg : op.segments) {
                if (seg.demo >= static_cast<int>(demos.size()) ||
                    seg.episode >= static_cast<int>(episodes[seg.demo].size()))
                    throw SchemaError("bundle segments do not match the demo file");
                auto& ep = episodes[seg.demo][seg.episode];
                std::vector<TimedPose> traj;
                if (seg.phase == Phase::premotion) {
                    traj = premotion_traj(demos[seg.demo], ep);
                } else {
                    ep.reference_object =
                        select_reference(ep, demos[seg.demo], seg.demo, seg.episode, {});
                    traj = motion_rel_traj(demos[seg.demo], ep, *ep.reference_object, "ee");
                }
                std::vector<Vec3> curve;
                for (const auto& tp : traj) curve.push_back(tp.pose.position);
                demo_curves.push_back(std::move(curve));
            }
        }
    }
    if (!plot_path.empty())
        write_svg(plot_path, demo_curves, rollout_curves, skill.position_ds.attractor);
    return 0;
}

int cmd_simulate_demos(const std::vector<std::string>& scenario_paths,
                       const std::string& out_path, const std::string& annotations_path,
                       uint64_t seed_override, bool has_seed) {
    std::vector<Demonstration> demos;
    json ann_out = json{{"demos", json::array()}};
    for (const auto& path : scenario_paths) {
        Scenario sc = load_scenario(path);
        if (has_seed) sc.seed = seed_override + demos.size();
        const auto play = generate_play(sc);
        json refs = json::array();
        for (const auto& a : play.annotations) refs.push_back(a.reference_object);
        ann_out["demos"].push_back(json{{"references", refs}});
        demos.push_back(play.demo);
        log_at(LogLevel::info, path + ": " + std::to_string(demos.back().size()) +
                                   " records, " + std::to_string(play.annotations.size()) +
                                   " episodes");
    }
    save_demonstrations(demos, out_path);
    if (!annotations_path.empty()) {
        std::ofstream out(annotations_path);
        if (!out) throw IoError("cannot write " + annotations_path);
        out << ann_out.dump() << "\n";
    }
    std::cout << "wrote " << demos.size() << " demonstrations to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symskill: learn and execute symbolic manipulation skills"};
    app.require_subcommand(1);

    std::string config_path, log_level = "info";
    uint64_t seed = 0;
    bool seed_given = false;
    app.add_option("--config", config_path, "config JSON file")->expected(1);
    app.add_option("--seed", seed, "rng seed (overrides config)")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--log-level", log_level, "error|warn|info|debug");

    auto* learn_cmd = app.add_subcommand("learn", "learn a model bundle from demonstrations");
    std::string demos_path, out_path = "bundle.json", selector = "heuristic";
    std::string annotations_path, replay_path;
    learn_cmd->add_option("demos", demos_path, "demonstration file")->required();
    learn_cmd->add_option("-o,--out", out_path, "output bundle path");
    learn_cmd->add_option("--selector", selector, "oracle|heuristic|external");
    learn_cmd->add_option("--annotations", annotations_path, "oracle annotation sidecar");
    learn_cmd->add_option("--replay", replay_path, "canned replies for the external selector");

    auto* exec_cmd = app.add_subcommand("execute", "execute a goal in a scenario");
    std::string bundle_path, scenario_path, goal_path, report_path, telemetry_path;
    exec_cmd->add_option("bundle", bundle_path, "model bundle")->required();
    exec_cmd->add_option("scenario", scenario_path, "scenario JSON")->required();
    exec_cmd->add_option("goal", goal_path, "goal JSON")->required();
    exec_cmd->add_option("--report", report_path, "execution report output");
    exec_cmd->add_option("--telemetry", telemetry_path, "per-step telemetry CSV");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a bundle over a scenario suite");
    std::string suite_path, eval_csv;
    int trials = 10;
    eval_cmd->add_option("bundle", bundle_path, "model bundle")->required();
    eval_cmd->add_option("suite", suite_path, "scenario suite JSON")->required();
    eval_cmd->add_option("--trials", trials, "trials per task");
    eval_cmd->add_option("--csv", eval_csv, "metrics CSV output");

    auto* roll_cmd = app.add_subcommand("rollout", "roll out one skill from given starts");
    std::string skill_id, starts_path, roll_csv, plot_path, roll_demos;
    roll_cmd->add_option("bundle", bundle_path, "model bundle")->required();
    roll_cmd->add_option("skill", skill_id, "skill id")->required();
    roll_cmd->add_option("starts", starts_path, "starts JSON")->required();
    roll_cmd->add_option("--csv", roll_csv, "trajectory CSV output (default stdout)");
    roll_cmd->add_option("--plot", plot_path, "SVG plot output");
    roll_cmd->add_option("--demos", roll_demos, "demo file for overlaying training curves");

    auto* sim_cmd = app.add_subcommand("simulate-demos", "generate scripted demonstrations");
    std::vector<std::string> scenario_paths;
    std::string sim_out = "demos.ndjson", sim_ann;
    sim_cmd->add_option("scenarios", scenario_paths, "scenario JSON files")->required();
    sim_cmd->add_option("-o,--out", sim_out, "output demonstration file");
    sim_cmd->add_option("--annotations", sim_ann, "ground-truth reference sidecar output");

    CLI11_PARSE(app, argc, argv);

    try {
        g_log_level = parse_log_level(log_level);
        Config cfg = config_path.empty() ? Config{} : load_config(config_path);
        if (seed_given) cfg.seed = seed;

        if (*learn_cmd)
            return cmd_learn(demos_path, cfg, out_path, selector, annotations_path, replay_path);
        if (*exec_cmd)
            return cmd_execute(bundle_path, scenario_path, goal_path, cfg, report_path,
                               telemetry_path);
        if (*eval_cmd) return cmd_eval(bundle_path, suite_path, trials, cfg, eval_csv);
        if (*roll_cmd)
            return cmd_rollout(bundle_path, skill_id, starts_path, cfg, roll_csv, plot_path,
                               roll_demos);
        if (*sim_cmd)
            return cmd_simulate_demos(scenario_paths, sim_out, sim_ann, seed, seed_given);
    } catch (const Error& e) {
        log_at(LogLevel::error, e.what());
        return 2;
    } catch (const std::exception& e) {
        log_at(LogLevel::error, e.what());
        return 2;
    }
    return 2;
}
