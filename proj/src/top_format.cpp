#include "jitterlab/top_format.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace jitterlab {

namespace {

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

ParseResult fail(ParseErrorKind kind, int tok, std::string detail) {
  ParseResult r;
  r.error = ParseError{kind, tok, std::move(detail)};
  return r;
}

void collect_rec(const ParseNode& n, LabelOccurrences& out) {
  (n.kind == NodeKind::Intent ? out.intents : out.slots).push_back(n.label);
  for (const auto& c : n.children) {
    if (c.is_node()) collect_rec(c.node.front(), out);
  }
}

void leaves_rec(const ParseNode& n, std::vector<std::string>& out) {
  for (const auto& c : n.children) {
    if (c.is_node()) {
      leaves_rec(c.node.front(), out);
    } else {
      out.push_back(c.token);
    }
  }
}

}  // namespace

const char* parse_error_name(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::EmptyInput: return "EmptyInput";
    case ParseErrorKind::UnbalancedBrackets: return "UnbalancedBrackets";
    case ParseErrorKind::UnknownLabelPrefix: return "UnknownLabelPrefix";
    case ParseErrorKind::MultipleRoots: return "MultipleRoots";
    case ParseErrorKind::RootNotIntent: return "RootNotIntent";
  }
  return "?";
}

ParseResult parse_tree(std::string_view text) {
  const std::vector<std::string> toks = split_ws(text);
  if (toks.empty()) return fail(ParseErrorKind::EmptyInput, -1, "no tokens");

  // Stack of open nodes; the finished root lands in `root`.
  std::vector<ParseNode> stack;
  std::optional<ParseNode> root;

  for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
    const std::string& tok = toks[i];
    if (tok[0] == '[') {
      if (root.has_value()) {
        return fail(ParseErrorKind::MultipleRoots, i, "second top-level node: " + tok);
      }
      std::string body = lower(tok.substr(1));
      NodeKind kind;
      std::string label;
      if (body.rfind("in:", 0) == 0) {
        kind = NodeKind::Intent;
        label = body.substr(3);
      } else if (body.rfind("sl:", 0) == 0) {
        kind = NodeKind::Slot;
        label = body.substr(3);
      } else {
        return fail(ParseErrorKind::UnknownLabelPrefix, i, "expected in:/sl: after '[': " + tok);
      }
      if (label.empty()) {
        return fail(ParseErrorKind::UnknownLabelPrefix, i, "empty label: " + tok);
      }
      stack.push_back(ParseNode{kind, std::move(label), {}});
    } else if (tok == "]") {
      if (stack.empty()) {
        return fail(ParseErrorKind::UnbalancedBrackets, i, "']' with no open node");
      }
      ParseNode done = std::move(stack.back());
      stack.pop_back();
      if (stack.empty()) {
        if (root.has_value()) {
          return fail(ParseErrorKind::MultipleRoots, i, "second top-level node closed");
        }
        root = std::move(done);
      } else {
        ParseItem item;
        item.node.push_back(std::move(done));
        stack.back().children.push_back(std::move(item));
      }
    } else {
      if (stack.empty()) {
        return fail(ParseErrorKind::MultipleRoots, i, "token outside brackets: " + tok);
      }
      ParseItem item;
      item.token = tok;
      stack.back().children.push_back(std::move(item));
    }
  }

  if (!stack.empty()) {
    return fail(ParseErrorKind::UnbalancedBrackets, static_cast<int>(toks.size()) - 1,
                "unclosed node: " + stack.back().label);
  }
  if (!root.has_value()) {
    return fail(ParseErrorKind::MultipleRoots, -1, "no bracketed root");
  }
  if (root->kind != NodeKind::Intent) {
    return fail(ParseErrorKind::RootNotIntent, 0, "root is a slot: " + root->label);
  }

  ParseResult r;
  ParseTree t;
  t.root = std::move(*root);
  t.source_tokens = leaf_tokens(t.root);
  r.tree = std::move(t);
  return r;
}

namespace {

void serialize_rec(const ParseNode& n, std::string& out) {
  out += '[';
  out += (n.kind == NodeKind::Intent) ? "in:" : "sl:";
  out += lower(n.label);
  for (const auto& c : n.children) {
    out += ' ';
    if (c.is_node()) {
      serialize_rec(c.node.front(), out);
    } else {
      out += c.token;
    }
  }
  out += " ]";
}

}  // namespace

std::string serialize_node(const ParseNode& n) {
  std::string out;
  serialize_rec(n, out);
  return out;
}

std::string serialize_tree(const ParseTree& t) { return serialize_node(t.root); }

bool trees_equal(const ParseTree& a, const ParseTree& b) {
  return serialize_tree(a) == serialize_tree(b);
}

LabelOccurrences collect_labels(const ParseTree& t) {
  LabelOccurrences out;
  collect_rec(t.root, out);
  return out;
}

std::vector<std::string> leaf_tokens(const ParseNode& n) {
  std::vector<std::string> out;
  leaves_rec(n, out);
  return out;
}

bool leaves_match_source(const ParseTree& t) {
  return leaf_tokens(t.root) == t.source_tokens;
}

}  // namespace jitterlab
