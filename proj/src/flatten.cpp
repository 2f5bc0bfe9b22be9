#include "graphtok3d/flatten.hpp"

#include <cstdio>

#include <json.hpp>

#include "graphtok3d/error.hpp"

namespace graphtok3d {

using nlohmann::json;

std::string_view to_string(SlotKind kind) {
    switch (kind) {
        case SlotKind::Identifier: return "identifier";
        case SlotKind::Feature2d: return "feature2d";
        case SlotKind::Node: return "node";
        case SlotKind::Edge: return "edge";
    }
    return "unknown";
}

std::string_view to_string(Layout layout) {
    return layout == Layout::Triplet ? "triplet" : "edge_only";
}

Layout parse_layout(std::string_view name) {
    if (name == "triplet") return Layout::Triplet;
    if (name == "edge_only") return Layout::EdgeOnly;
    throw Error(ErrorKind::ParseError, "unknown layout '" + std::string(name) + "'");
}

namespace {

SlotKind parse_kind(std::string_view name) {
    for (SlotKind k : {SlotKind::Identifier, SlotKind::Feature2d, SlotKind::Node, SlotKind::Edge})
        if (to_string(k) == name) return k;
    throw Error(ErrorKind::ParseError, "unknown slot kind '" + std::string(name) + "'");
}

void push(FlatSequence& seq, SlotKind kind, ObjectId object, ObjectId target = -1) {
    seq.slots.push_back({kind, object, target, seq.slots.size()});
}

}  // namespace

FlatSequence flatten_triplet(const GraphTopology& graph) {
    FlatSequence seq;
    seq.layout = Layout::Triplet;
    seq.slots.reserve(2 * graph.survivors.size() + 3 * graph.edge_count());
    for (std::size_t idx = 0; idx < graph.survivors.size(); ++idx) {
        const ObjectId i = graph.survivors[idx];
        push(seq, SlotKind::Identifier, i);
        push(seq, SlotKind::Feature2d, i);
        for (ObjectId j : graph.neighbors[idx]) {
            push(seq, SlotKind::Node, i);
            push(seq, SlotKind::Edge, i, j);
            push(seq, SlotKind::Node, j);
        }
    }
    return seq;
}

FlatSequence flatten_edge_only(const GraphTopology& graph) {
    FlatSequence seq;
    seq.layout = Layout::EdgeOnly;
    seq.slots.reserve(3 * graph.survivors.size() + graph.edge_count());
    for (std::size_t idx = 0; idx < graph.survivors.size(); ++idx) {
        const ObjectId i = graph.survivors[idx];
        push(seq, SlotKind::Identifier, i);
        push(seq, SlotKind::Feature2d, i);
        push(seq, SlotKind::Node, i);
        for (ObjectId j : graph.neighbors[idx]) push(seq, SlotKind::Edge, i, j);
    }
    return seq;
}

FlatSequence flatten_triplet(const SceneGraphOut& graph) { return flatten_triplet(graph.topology); }
FlatSequence flatten_edge_only(const SceneGraphOut& graph) { return flatten_edge_only(graph.topology); }

FlatSequence flatten(const GraphTopology& graph, Layout layout) {
    return layout == Layout::Triplet ? flatten_triplet(graph) : flatten_edge_only(graph);
}

std::uint64_t token_budget(std::uint64_t n, std::uint64_t k) { return 2 * n + 3 * n * k; }

std::uint64_t token_budget_full(std::uint64_t n) { return n == 0 ? 0 : 2 * n + 3 * n * (n - 1); }

std::string identifier_token(ObjectId id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "<OBJ%03d>", id);
    return buf;
}

std::string sequence_to_json(const FlatSequence& seq) {
    json slots = json::array();
    for (const auto& s : seq.slots) {
        json j;
        j["position"] = s.position;
        j["kind"] = to_string(s.kind);
        if (s.kind == SlotKind::Edge)
            j["object_ref"] = {s.object, s.target};
        else
            j["object_ref"] = s.object;
        if (s.kind == SlotKind::Identifier) j["token"] = identifier_token(s.object);
        slots.push_back(std::move(j));
    }
    json doc;
    doc["layout"] = to_string(seq.layout);
    doc["length"] = seq.slots.size();
    doc["slots"] = std::move(slots);
    if (!seq.embeddings.empty()) doc["d_model"] = seq.embeddings.cols();
    return doc.dump(2) + "\n";
}

FlatSequence parse_sequence_json(std::string_view text) {
    FlatSequence seq;
    try {
        const json doc = json::parse(text.begin(), text.end());
        seq.layout = parse_layout(doc.at("layout").get<std::string>());
        for (const auto& j : doc.at("slots")) {
            TokenSlot s;
            s.kind = parse_kind(j.at("kind").get<std::string>());
            s.position = j.at("position").get<std::size_t>();
            const json& ref = j.at("object_ref");
            if (s.kind == SlotKind::Edge) {
                s.object = ref.at(0).get<ObjectId>();
                s.target = ref.at(1).get<ObjectId>();
            } else {
                s.object = ref.get<ObjectId>();
            }
            if (s.position != seq.slots.size())
                throw Error(ErrorKind::ParseError, "sequence.json: slot positions are not contiguous");
            seq.slots.push_back(s);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("sequence.json: ") + e.what());
    }
    return seq;
}

const std::string_view kSystemPreamble =
    "A chat between a curious user and an artificial intelligence assistant. "
    "The assistant gives helpful, detailed, and polite answers to the user’s questions. "
    "The conversation centers around an indoor scene:";

PromptLayout assemble_prompt(const FlatSequence& seq, std::string_view user_query,
                             std::optional<std::string_view> assistant_target) {
    PromptLayout layout;
    layout.segments.push_back(
        {Role::System, {std::string(kSystemPreamble), std::string("["), SequenceRef{0, seq.size()}, std::string("]")}});
    layout.segments.push_back({Role::User, {std::string(user_query)}});
    PromptSegment assistant{Role::Assistant, {}};
    if (assistant_target) {
        std::string text(*assistant_target);
        if (text.empty() || text.back() != '.') text += '.';
        assistant.spans.emplace_back(std::move(text));
    }
    layout.segments.push_back(std::move(assistant));
    return layout;
}

namespace {

std::string_view role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "unknown";
}

Role parse_role(std::string_view name) {
    for (Role r : {Role::System, Role::User, Role::Assistant})
        if (role_name(r) == name) return r;
    throw Error(ErrorKind::ParseError, "unknown role '" + std::string(name) + "'");
}

}  // namespace

std::string prompt_to_json(const PromptLayout& layout) {
    json segs = json::array();
    for (const auto& seg : layout.segments) {
        json spans = json::array();
        for (const auto& span : seg.spans) {
            if (const auto* text = std::get_if<std::string>(&span))
                spans.push_back({{"text", *text}});
            else {
                const auto& ref = std::get<SequenceRef>(span);
                spans.push_back({{"sequence_ref", {ref.begin, ref.end}}});
            }
        }
        segs.push_back({{"role", role_name(seg.role)}, {"spans", std::move(spans)}});
    }
    json doc;
    doc["segments"] = std::move(segs);
    return doc.dump(2) + "\n";
}

PromptLayout parse_prompt_json(std::string_view text) {
    PromptLayout layout;
    std::size_t sequence_spans = 0;
    try {
        const json doc = json::parse(text.begin(), text.end());
        for (const auto& s : doc.at("segments")) {
            PromptSegment seg;
            seg.role = parse_role(s.at("role").get<std::string>());
            for (const auto& span : s.at("spans")) {
                if (span.contains("text")) {
                    seg.spans.emplace_back(span.at("text").get<std::string>());
                } else {
                    const auto& r = span.at("sequence_ref");
                    seg.spans.emplace_back(SequenceRef{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
                    if (seg.role != Role::System)
                        throw Error(ErrorKind::ParseError, "prompt.json: scene sequence outside the system segment");
                    ++sequence_spans;
                }
            }
            layout.segments.push_back(std::move(seg));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("prompt.json: ") + e.what());
    }
    if (sequence_spans != 1)
        throw Error(ErrorKind::ParseError, "prompt.json: expected exactly one scene sequence span");
    return layout;
}

}  // namespace graphtok3d
