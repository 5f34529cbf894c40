#pragma once

// Assigns each motion episode its reference object. Three selector modes:
// an oracle fed by scripted-generator annotations, a proximity-at-rest
// heuristic, and an external text-protocol client with a file-backed replay
// stub for offline tests.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symskill/segmentation.hpp"
#include "symskill/world.hpp"

namespace symskill {

enum class SelectorKind { oracle, heuristic, external };

struct ReferenceQuery {
    std::vector<std::string> frames;      // n evenly spaced opaque frame ids
    std::vector<std::string> candidates;  // scene objects, motion object excluded
    std::string motion_object;
    std::string instruction;

    std::string to_line() const {
        json j;
        j["frames"] = frames;
        j["candidates"] = candidates;
        j["motion_object"] = motion_object;
        j["instruction"] = instruction;
        return j.dump();
    }
};

inline constexpr const char* kReferenceInstruction =
    "Select the stationary object the moving object is organized around. "
    "Answer with exactly one candidate id.";

// Request/response exchange with a reference-selection endpoint.
class ExternalClient {
  public:
    virtual ~ExternalClient() = default;
    // Sends one request line, returns one response line. Throws
    // ExternalUnavailable if the endpoint cannot be reached.
    virtual std::string exchange(const std::string& request_line) = 0;
};

inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string request_hash(const std::string& request_line) {
    std::ostringstream os;
    os << std::hex << fnv1a64(request_line);
    return os.str();
}

// Replays canned responses keyed by request hash. File format: one
// `<hash> <response-json>` pair per line.
class ReplayClient : public ExternalClient {
  public:
    ReplayClient() = default;
    explicit ReplayClient(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open replay file " + path);
        std::string line;
        while (std::getline(in, line)) {
            const auto sp = line.find(' ');
            if (sp == std::string::npos) continue;
            responses_[line.substr(0, sp)] = line.substr(sp + 1);
        }
    }

    void add(const std::string& request_line, const std::string& response_line) {
        responses_[request_hash(request_line)] = response_line;
    }

    std::string exchange(const std::string& request_line) override {
        auto it = responses_.find(request_hash(request_line));
        if (it == responses_.end())
            throw ExternalUnavailable("no canned response for request");
        return it->second;
    }

  private:
    std::map<std::string, std::string> responses_;
};

struct SelectorContext {
    SelectorKind kind = SelectorKind::heuristic;
    // oracle: (demo index, episode index) -> annotated reference id
    const std::map<std::pair<int, int>, std::string>* oracle_map = nullptr;
    ExternalClient* external = nullptr;
    int n_frames = 4;
    bool fallback_to_heuristic = false;  // on ExternalUnavailable
};

namespace detail {

inline std::vector<std::string> candidate_ids(const Episode& ep, const Demonstration& demo) {
    std::vector<std::string> out;
    for (const auto& id : demo.object_ids())
        if (id != ep.motion_object) out.push_back(id);
    return out;
}

// Final-pose proximity score; monotone in distance so the argmin is the
// nearest candidate at rest.
inline std::string heuristic_select(const Episode& ep, const Demonstration& demo,
                                    const std::vector<std::string>& candidates) {
    const auto& s = demo.state_at(ep.t_stop());
    std::string best;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& id : candidates) {
        const double d =
            relative_pose(s.object(id).pose, s.object(ep.motion_object).pose).position.norm();
        const double score = d / (1.0 + d);
        if (score < best_score - 1e-15 ||
            (std::abs(score - best_score) <= 1e-15 && id < best)) {
            best = id;
            best_score = score;
        }
    }
    return best;
}

inline std::vector<std::string> evenly_spaced_frames(const Episode& ep,
                                                     const Demonstration& demo, int n) {
    std::vector<std::string> out;
    const int len = ep.motion.size();
    for (int k = 0; k < n; ++k) {
        const int idx = ep.motion.begin + (n == 1 ? 0 : k * (len - 1) / (n - 1));
        if (idx < static_cast<int>(demo.frame_refs.size()) && !demo.frame_refs[idx].empty())
            out.push_back(demo.frame_refs[idx]);
        else
            out.push_back("t" + std::to_string(idx));
    }
    return out;
}

}  // namespace detail

inline std::string select_reference(const Episode& ep, const Demonstration& demo,
                                    int demo_idx, int ep_idx, const SelectorContext& ctx) {
    if (ep.motion.empty()) throw Error("episode has empty motion interval");
    const auto candidates = detail::candidate_ids(ep, demo);
    if (candidates.empty()) throw NoCandidates("no candidate reference objects in scene");
    if (candidates.size() == 1) return candidates.front();

    switch (ctx.kind) {
        case SelectorKind::oracle: {
            if (!ctx.oracle_map) throw Error("oracle selector without annotations");
            auto it = ctx.oracle_map->find({demo_idx, ep_idx});
            if (it == ctx.oracle_map->end())
                throw Error("no annotation for demo " + std::to_string(demo_idx) +
                            " episode " + std::to_string(ep_idx));
            if (std::find(candidates.begin(), candidates.end(), it->second) == candidates.end())
                throw Error("annotated reference not a candidate: " + it->second);
            return it->second;
        }
        case SelectorKind::heuristic:
            return detail::heuristic_select(ep, demo, candidates);
        case SelectorKind::external: {
            if (!ctx.external) throw ExternalUnavailable("no external client configured");
            ReferenceQuery q;
            q.frames = detail::evenly_spaced_frames(ep, demo, std::max(1, ctx.n_frames));
            q.candidates = candidates;
            q.motion_object = ep.motion_object;
            q.instruction = kReferenceInstruction;
            std::string reply_line;
            try {
                reply_line = ctx.external->exchange(q.to_line());
            } catch (const ExternalUnavailable&) {
                if (ctx.fallback_to_heuristic)
                    return detail::heuristic_select(ep, demo, candidates);
                throw;
            }
            std::string ref;
            try {
                ref = json::parse(reply_line).at("reference").get<std::string>();
            } catch (const json::exception& e) {
                throw InvalidExternalReply(std::string("malformed reply: ") + e.what());
            }
            if (std::find(candidates.begin(), candidates.end(), ref) == candidates.end())
                throw InvalidExternalReply("reply not in candidate list: " + ref);
            return ref;
        }
    }
    throw Error("unreachable");
}

// Modal element; ties broken by earliest first occurrence.
inline std::string modal_reply(const std::vector<std::string>& replies) {
    if (replies.empty()) throw Error("modal_reply: empty group");
    std::vector<std::string> order;
    std::map<std::string, int> counts;
    for (const auto& r : replies) {
        if (counts.find(r) == counts.end()) order.push_back(r);
        ++counts[r];
    }
    std::string best = order.front();
    for (const auto& r : order)
        if (counts[r] > counts[best]) best = r;
    return best;
}

template <typename Key>
std::map<Key, std::string> majority_assign(const std::map<Key, std::vector<std::string>>& groups) {
    std::map<Key, std::string> out;
    for (const auto& [k, replies] : groups) out[k] = modal_reply(replies);
    return out;
}

}  // namespace symskill
