#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "graphtok3d/graph.hpp"
#include "graphtok3d/matrix.hpp"

namespace graphtok3d {

enum class SlotKind { Identifier, Feature2d, Node, Edge };
enum class Layout { Triplet, EdgeOnly };

std::string_view to_string(SlotKind kind);
std::string_view to_string(Layout layout);
Layout parse_layout(std::string_view name);

// One position in the flat sequence. `object` names the object whose feature
// fills the slot; edge slots also carry the neighbor in `target`.
struct TokenSlot {
    SlotKind kind = SlotKind::Identifier;
    ObjectId object = 0;
    ObjectId target = -1;
    std::size_t position = 0;

    bool operator==(const TokenSlot&) const = default;
};

struct FlatSequence {
    Layout layout = Layout::Triplet;
    std::vector<TokenSlot> slots;
    Matrix embeddings;  // |slots| x d_model once projected, empty before

    std::size_t size() const noexcept { return slots.size(); }
};

// Per object (ascending id): <OBJi>, 2D feature, then (node i, edge i->j,
// node j) for each neighbor j in stored order.
FlatSequence flatten_triplet(const GraphTopology& graph);
FlatSequence flatten_triplet(const SceneGraphOut& graph);

// Per object: <OBJi>, 2D feature, node i, then one edge slot per neighbor.
FlatSequence flatten_edge_only(const GraphTopology& graph);
FlatSequence flatten_edge_only(const SceneGraphOut& graph);

FlatSequence flatten(const GraphTopology& graph, Layout layout);

// 2n + 3nk: sequence length with every object holding k neighbors.
std::uint64_t token_budget(std::uint64_t n, std::uint64_t k);
// 2n + 3n(n - 1): sequence length for the complete graph.
std::uint64_t token_budget_full(std::uint64_t n);

// Text form of an identifier token, e.g. <OBJ007>.
std::string identifier_token(ObjectId id);

std::string sequence_to_json(const FlatSequence& seq);
FlatSequence parse_sequence_json(std::string_view text);

enum class Role { System, User, Assistant };

struct SequenceRef {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last slot

    bool operator==(const SequenceRef&) const = default;
};

using PromptSpan = std::variant<std::string, SequenceRef>;

struct PromptSegment {
    Role role = Role::System;
    std::vector<PromptSpan> spans;

    bool operator==(const PromptSegment&) const = default;
};

struct PromptLayout {
    std::vector<PromptSegment> segments;  // system, user, assistant

    bool operator==(const PromptLayout&) const = default;
};

// Fixed system preamble preceding the bracketed scene sequence.
extern const std::string_view kSystemPreamble;

// System segment: preamble, "[", the whole sequence, "]". The assistant
// segment holds the target terminated by a period, or nothing at inference.
PromptLayout assemble_prompt(const FlatSequence& seq, std::string_view user_query,
                             std::optional<std::string_view> assistant_target = std::nullopt);

std::string prompt_to_json(const PromptLayout& layout);
PromptLayout parse_prompt_json(std::string_view text);

}  // namespace graphtok3d
