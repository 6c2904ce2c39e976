#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jitterlab {

enum class NodeKind { Intent, Slot };

struct ParseNode;

// One child of a ParseNode: either a plain token or a nested node.
// The nested node is held in a size-0/1 vector so the recursive type keeps
// value semantics.
struct ParseItem {
  std::string token;
  std::vector<ParseNode> node;

  bool is_node() const { return !node.empty(); }
};

struct ParseNode {
  NodeKind kind = NodeKind::Intent;
  std::string label;  // lowercase, without the "in:"/"sl:" prefix
  std::vector<ParseItem> children;
};

// A bracketed semantic parse over an utterance. Gold trees carry the
// utterance tokens; trees built from predicted strings carry their own
// leaf tokens.
struct ParseTree {
  ParseNode root;
  std::vector<std::string> source_tokens;
};

enum class ParseErrorKind {
  EmptyInput,
  UnbalancedBrackets,
  UnknownLabelPrefix,
  // Any top-level content besides a single bracketed root: a second root,
  // stray tokens before/after the root, or no bracketed root at all.
  MultipleRoots,
  RootNotIntent,
};

const char* parse_error_name(ParseErrorKind k);

struct ParseError {
  ParseErrorKind kind;
  int token_index = -1;  // offending whitespace token, when known
  std::string detail;
};

struct ParseResult {
  std::optional<ParseTree> tree;
  std::optional<ParseError> error;

  bool ok() const { return tree.has_value(); }
};

// Parses a whitespace-tokenized TOP bracket string. Labels are matched
// case-insensitively and stored lowercased. Never throws; malformed input
// yields exactly one ParseError.
ParseResult parse_tree(std::string_view text);

// Canonical form: single spaces, "[" glued to its label, a space before each
// "]", labels lowercase. parse_tree(serialize_tree(t)) reproduces t.
std::string serialize_node(const ParseNode& n);
std::string serialize_tree(const ParseTree& t);

// Exact-sequence equality: canonical serializations are identical strings.
bool trees_equal(const ParseTree& a, const ParseTree& b);

// Every intent / slot label occurrence in pre-order, with multiplicity.
struct LabelOccurrences {
  std::vector<std::string> intents;
  std::vector<std::string> slots;
};
LabelOccurrences collect_labels(const ParseTree& t);

// Leaf tokens of the subtree in left-to-right order.
std::vector<std::string> leaf_tokens(const ParseNode& n);

// True when the tree's leaves equal source_tokens in order. Gold data is
// expected to satisfy this; predictions may not, and loaders only flag it.
bool leaves_match_source(const ParseTree& t);

}  // namespace jitterlab
