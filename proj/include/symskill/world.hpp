#pragma once

// Continuous world state, object typing, and demonstration containers.
//
// Demonstration files are newline-delimited JSON: a header line
//   {"format":"symskill-demo","version":1,"types":[...]}
// followed by one record per line:
//   {"t":..,"ee":{"p":[..],"q":[w,x,y,z]},"gripper":"open"|"closed",
//    "objects":{"<id>":{"p":[..],"q":[..],"type":".."}},"frame":".."?}

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symskill/errors.hpp"
#include "symskill/geometry.hpp"
#include "symskill/json_io.hpp"

namespace symskill {

using json = nlohmann::json;

struct ObjectType {
    std::string name;

    bool operator==(const ObjectType&) const = default;
    auto operator<=>(const ObjectType&) const = default;
};

enum class GripperState { open, closed };

inline std::string to_string(GripperState g) {
    return g == GripperState::open ? "open" : "closed";
}

struct ObjectInstance {
    Pose pose;
    ObjectType type;
};

struct WorldState {
    Pose ee_pose;
    std::map<std::string, ObjectInstance> objects;  // id -> (pose, type)
    GripperState gripper{GripperState::open};

    const ObjectInstance& object(const std::string& id) const {
        auto it = objects.find(id);
        if (it == objects.end()) throw UnknownObject("unknown object id: " + id);
        return it->second;
    }
    bool has_object(const std::string& id) const { return objects.count(id) > 0; }

    // Pose of frame `id` ("ee" allowed) in the world frame.
    const Pose& frame_pose(const std::string& id) const {
        return id == "ee" ? ee_pose : object(id).pose;
    }
};

struct Demonstration {
    std::vector<std::pair<double, WorldState>> records;
    std::vector<std::string> frame_refs;  // optional, aligned with records

    size_t size() const { return records.size(); }
    double time_at(size_t i) const { return records[i].first; }
    const WorldState& state_at(size_t i) const { return records[i].second; }

    std::vector<std::string> object_ids() const {
        std::vector<std::string> ids;
        if (!records.empty())
            for (const auto& [id, obj] : records.front().second.objects) ids.push_back(id);
        return ids;
    }
};

namespace detail {

inline Vec3 parse_vec3(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw SchemaError(std::string("bad 3-vector for ") + what);
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Quat parse_quat(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 4) throw SchemaError(std::string("bad quaternion for ") + what);
    Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
    if (std::abs(q.norm() - 1.0) > 1e-6)
        throw SchemaError(std::string("quaternion not unit-norm for ") + what);
    return q;
}

inline std::string vec3_str(const Vec3& v) {
    return "[" + fmt_double(v.x()) + "," + fmt_double(v.y()) + "," + fmt_double(v.z()) + "]";
}

inline std::string quat_str(const Quat& q_in) {
    Quat q = canonical(q_in);
    return "[" + fmt_double(q.w()) + "," + fmt_double(q.x()) + "," + fmt_double(q.y()) + "," +
           fmt_double(q.z()) + "]";
}

}  // namespace detail

inline std::vector<Demonstration> load_demonstrations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty demonstration file");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad header: ") + e.what());
    }
    if (header.value("format", "") != "symskill-demo")
        throw SchemaError("not a symskill-demo file");
    std::set<std::string> types;
    for (const auto& t : header.at("types")) types.insert(t.get<std::string>());

    std::vector<Demonstration> demos;
    Demonstration cur;
    bool has_frames = false;
    auto flush = [&] {
        if (cur.records.empty()) return;
        if (!has_frames) cur.frame_refs.clear();
        demos.push_back(std::move(cur));
        cur = Demonstration{};
        has_frames = false;
    };
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("demo_break")) {
            flush();
            continue;
        }
        WorldState s;
        double t;
        try {
            t = j.at("t").get<double>();
            s.ee_pose = Pose{detail::parse_vec3(j.at("ee").at("p"), "ee"),
                             detail::parse_quat(j.at("ee").at("q"), "ee")};
            const std::string g = j.at("gripper").get<std::string>();
            if (g == "open")
                s.gripper = GripperState::open;
            else if (g == "closed")
                s.gripper = GripperState::closed;
            else
                throw SchemaError("bad gripper value: " + g);
            for (const auto& [id, jo] : j.at("objects").items()) {
                if (id == "ee") throw SchemaError("\"ee\" is a reserved id");
                const std::string ty = jo.at("type").get<std::string>();
                if (!types.count(ty)) throw SchemaError("unknown type name: " + ty);
                s.objects[id] = ObjectInstance{Pose{detail::parse_vec3(jo.at("p"), id.c_str()),
                                                    detail::parse_quat(jo.at("q"), id.c_str())},
                                               ObjectType{ty}};
            }
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!cur.records.empty()) {
            if (t <= cur.records.back().first)
                throw MonotonicityError("line " + std::to_string(lineno) +
                                        ": timestamps not strictly increasing");
            std::set<std::string> prev, now;
            for (const auto& [id, o] : cur.records.back().second.objects) prev.insert(id);
            for (const auto& [id, o] : s.objects) now.insert(id);
            if (prev != now)
                throw SchemaError("line " + std::to_string(lineno) + ": object-id set changed");
        }
        if (j.contains("frame")) {
            has_frames = true;
            cur.frame_refs.resize(cur.records.size());
            cur.frame_refs.push_back(j.at("frame").get<std::string>());
        } else if (has_frames) {
            cur.frame_refs.push_back("");
        }
        cur.records.emplace_back(t, std::move(s));
    }
    flush();
    if (demos.empty()) throw SchemaError("file contains no demonstration records");
    return demos;
}

inline void write_demonstrations(const std::vector<Demonstration>& demos,
                                 std::ostream& out) {
    std::set<std::string> types;
    for (const auto& d : demos)
        for (const auto& [t, s] : d.records)
            for (const auto& [id, o] : s.objects) types.insert(o.type.name);
    out << "{\"format\":\"symskill-demo\",\"version\":1,\"types\":[";
    bool first = true;
    for (const auto& t : types) {
        if (!first) out << ",";
        out << json(t).dump();
        first = false;
    }
    out << "]}\n";
    for (size_t di = 0; di < demos.size(); ++di) {
        const auto& d = demos[di];
        if (di > 0) out << "{\"demo_break\":true}\n";
        for (size_t i = 0; i < d.records.size(); ++i) {
            const auto& [t, s] = d.records[i];
            out << "{\"t\":" << fmt_double(t) << ",\"ee\":{\"p\":" << detail::vec3_str(s.ee_pose.position)
                << ",\"q\":" << detail::quat_str(s.ee_pose.orientation) << "},\"gripper\":\""
                << to_string(s.gripper) << "\",\"objects\":{";
            bool firstobj = true;
            for (const auto& [id, o] : s.objects) {
                if (!firstobj) out << ",";
                out << json(id).dump() << ":{\"p\":" << detail::vec3_str(o.pose.position)
                    << ",\"q\":" << detail::quat_str(o.pose.orientation) << ",\"type\":"
                    << json(o.type.name).dump() << "}";
                firstobj = false;
            }
            out << "}";
            if (i < d.frame_refs.size() && !d.frame_refs[i].empty())
                out << ",\"frame\":" << json(d.frame_refs[i]).dump();
            out << "}\n";
        }
    }
}

inline void save_demonstrations(const std::vector<Demonstration>& demos,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_demonstrations(demos, out);
    if (!out) throw IoError("write failure on " + path);
}

}  // namespace symskill
