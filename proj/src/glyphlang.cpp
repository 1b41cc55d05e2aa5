#include "stn/glyphlang.hpp"

#include <algorithm>
#include <sstream>

#include "stn/glyph_table_data.hpp"
#include "stn/errors.hpp"
#include "stn/rng.hpp"

namespace stn {

namespace {

constexpr std::array<std::string_view, kVocabSize> kTokenNames = {
    "a", "b", "c", "d", "e", "f", "g", "h", "frac", "sup", "sqrt", "{", "}", "</s>", "<s>"};

}  // namespace

Token token_from_id(int id) {
  if (id < 0 || id >= kVocabSize) throw UnknownTokenError("#" + std::to_string(id));
  return static_cast<Token>(id);
}

std::string_view token_name(Token t) noexcept { return kTokenNames[token_id(t)]; }

Token token_from_name(std::string_view name) {
  for (int i = 0; i < kVocabSize; ++i) {
    if (kTokenNames[i] == name) return static_cast<Token>(i);
  }
  throw UnknownTokenError(std::string(name));
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(token_from_name(text.substr(start, i - start)));
  }
  return out;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token_name(tokens[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// AST

Node Node::atom(Token glyph) {
  Node n;
  n.kind = Kind::Atom;
  n.glyph = glyph;
  return n;
}

Node Node::row(std::vector<Node> items) {
  std::vector<Node> flat;
  for (auto& item : items) {
    if (item.kind == Kind::Row) {
      for (auto& c : item.children) flat.push_back(std::move(c));
    } else {
      flat.push_back(std::move(item));
    }
  }
  if (flat.size() == 1) return std::move(flat.front());
  Node n;
  n.kind = Kind::Row;
  n.children = std::move(flat);
  return n;
}

Node Node::frac(Node numerator, Node denominator) {
  Node n;
  n.kind = Kind::Frac;
  n.children.push_back(std::move(numerator));
  n.children.push_back(std::move(denominator));
  return n;
}

Node Node::sup(Node base, Node exponent) {
  Node n;
  n.kind = Kind::Sup;
  n.children.push_back(std::move(base));
  n.children.push_back(std::move(exponent));
  return n;
}

Node Node::sqrt(Node child) {
  Node n;
  n.kind = Kind::Sqrt;
  n.children.push_back(std::move(child));
  return n;
}

int node_depth(const Node& node) {
  int inner = 0;
  for (const auto& c : node.children) inner = std::max(inner, node_depth(c));
  switch (node.kind) {
    case Node::Kind::Atom: return 1;
    case Node::Kind::Row: return inner;
    default: return inner + 1;
  }
}

int Program::depth() const { return node_depth(root); }

bool contains_structure(const Node& node) {
  if (node.kind == Node::Kind::Frac || node.kind == Node::Kind::Sup ||
      node.kind == Node::Kind::Sqrt)
    return true;
  return std::any_of(node.children.begin(), node.children.end(), contains_structure);
}

namespace {

void emit(const Node& node, TokenSequence& out) {
  auto group = [&](const Node& n) {
    out.push_back(Token::LBrace);
    emit(n, out);
    out.push_back(Token::RBrace);
  };
  switch (node.kind) {
    case Node::Kind::Atom: out.push_back(node.glyph); break;
    case Node::Kind::Row:
      for (const auto& c : node.children) emit(c, out);
      break;
    case Node::Kind::Frac:
      out.push_back(Token::Frac);
      group(node.children[0]);
      group(node.children[1]);
      break;
    case Node::Kind::Sup:
      out.push_back(Token::Sup);
      group(node.children[0]);
      group(node.children[1]);
      break;
    case Node::Kind::Sqrt:
      out.push_back(Token::Sqrt);
      group(node.children[0]);
      break;
  }
}

void describe(const Node& node, std::string& out) {
  auto list = [&](const char* name) {
    out += name;
    out += '(';
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      if (i) out += ", ";
      describe(node.children[i], out);
    }
    out += ')';
  };
  switch (node.kind) {
    case Node::Kind::Atom: out += token_name(node.glyph); break;
    case Node::Kind::Row: list("Row"); break;
    case Node::Kind::Frac: list("Frac"); break;
    case Node::Kind::Sup: list("Sup"); break;
    case Node::Kind::Sqrt: list("Sqrt"); break;
  }
}

// Recursive descent over  E -> atom | frac {E+} {E+} | sup {E+} {E+} | sqrt {E+} | E E
class Parser {
 public:
  explicit Parser(std::span<const Token> tokens) : tokens_(tokens) {}

  Node program() {
    if (tokens_.empty()) throw ParseError(0, "empty program");
    Node root = sequence();
    if (pos_ < tokens_.size()) throw ParseError(pos_, "unexpected '" + name(pos_) + "'");
    return root;
  }

 private:
  std::string name(std::size_t i) const { return std::string(token_name(tokens_[i])); }

  [[noreturn]] void fail_expected(std::string_view what) const {
    if (pos_ >= tokens_.size())
      throw ParseError(tokens_.size() - 1, "input ended, expected " + std::string(what));
    throw ParseError(pos_, "expected " + std::string(what) + ", found '" + name(pos_) + "'");
  }

  Node sequence() {
    std::vector<Node> items;
    while (pos_ < tokens_.size() && starts_item(tokens_[pos_])) items.push_back(item());
    if (items.empty()) fail_expected("an expression");
    return Node::row(std::move(items));
  }

  static bool starts_item(Token t) {
    return is_glyph(t) || t == Token::Frac || t == Token::Sup || t == Token::Sqrt;
  }

  Node group() {
    expect(Token::LBrace);
    Node inner = sequence();
    expect(Token::RBrace);
    return inner;
  }

  void expect(Token t) {
    if (pos_ >= tokens_.size() || tokens_[pos_] != t)
      fail_expected("'" + std::string(token_name(t)) + "'");
    ++pos_;
  }

  Node item() {
    const Token t = tokens_[pos_++];
    if (is_glyph(t)) return Node::atom(t);
    if (t == Token::Sqrt) return Node::sqrt(group());
    Node first = group();
    Node second = group();
    return t == Token::Frac ? Node::frac(std::move(first), std::move(second))
                            : Node::sup(std::move(first), std::move(second));
  }

  std::span<const Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

TokenSequence serialize(const Program& program) {
  TokenSequence out;
  emit(program.root, out);
  return out;
}

std::string to_string(const Program& program) {
  std::string out;
  describe(program.root, out);
  return out;
}

Program parse(std::span<const Token> tokens) { return Program{Parser(tokens).program()}; }

// ---------------------------------------------------------------------------
// Glyph table

std::array<GlyphBitmap, kNumGlyphs> parse_glyph_table(std::string_view text) {
  std::array<GlyphBitmap, kNumGlyphs> table{};
  std::array<bool, kNumGlyphs> seen{};
  std::istringstream in{std::string(text)};
  std::string line;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.rfind("# ", 0) == 0) continue;  // comments are "# ..."
      return true;
    }
    return false;
  };
  while (next_line()) {
    const Token glyph = token_from_name(line);
    if (!is_glyph(glyph)) throw Error("glyph table: '" + line + "' is not a glyph atom");
    auto& bitmap = table[token_id(glyph)];
    for (int r = 0; r < kGlyphHeight; ++r) {
      if (!next_line() || static_cast<int>(line.size()) != kGlyphWidth)
        throw Error("glyph table: bad row for glyph " + std::string(token_name(glyph)));
      for (int c = 0; c < kGlyphWidth; ++c) {
        if (line[c] != '#' && line[c] != '.') throw Error("glyph table: bad cell '" + line + "'");
        bitmap[r][c] = line[c] == '#';
      }
    }
    seen[token_id(glyph)] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw Error("glyph table: missing glyphs");
  return table;
}

const std::array<GlyphBitmap, kNumGlyphs>& glyph_table() {
  static const auto table = parse_glyph_table(kGlyphTableText);
  return table;
}

// ---------------------------------------------------------------------------
// Layout and rendering

namespace {

struct Box {
  int w = 0;
  int h = 0;
  int axis = 0;  // alignment row, from the top
  std::vector<std::uint8_t> ink;

  Box(int width, int height, int ax)
      : w(width), h(height), axis(ax), ink(static_cast<std::size_t>(width) * height, 0) {}

  void set(int x, int y) { ink[static_cast<std::size_t>(y) * w + x] = 1; }
  void blit(const Box& src, int ox, int oy) {
    for (int y = 0; y < src.h; ++y)
      for (int x = 0; x < src.w; ++x)
        if (src.ink[static_cast<std::size_t>(y) * src.w + x]) set(ox + x, oy + y);
  }
};

Box layout(const Node& node) {
  switch (node.kind) {
    case Node::Kind::Atom: {
      Box box(kGlyphWidth, kGlyphHeight, kGlyphHeight / 2);
      const auto& bitmap = glyph_table()[token_id(node.glyph)];
      for (int y = 0; y < kGlyphHeight; ++y)
        for (int x = 0; x < kGlyphWidth; ++x)
          if (bitmap[y][x]) box.set(x, y);
      return box;
    }
    case Node::Kind::Row: {
      std::vector<Box> parts;
      int width = -1, ascent = 0, descent = 0;
      for (const auto& c : node.children) {
        parts.push_back(layout(c));
        width += parts.back().w + 1;
        ascent = std::max(ascent, parts.back().axis);
        descent = std::max(descent, parts.back().h - parts.back().axis);
      }
      Box box(width, ascent + descent, ascent);
      int x = 0;
      for (const auto& p : parts) {
        box.blit(p, x, ascent - p.axis);
        x += p.w + 1;
      }
      return box;
    }
    case Node::Kind::Frac: {
      const Box num = layout(node.children[0]);
      const Box den = layout(node.children[1]);
      const int width = std::max(num.w, den.w) + 2;
      const int bar = num.h + 1;
      Box box(width, num.h + 3 + den.h, bar);
      box.blit(num, (width - num.w) / 2, 0);
      box.blit(den, (width - den.w) / 2, bar + 2);
      for (int x = 0; x < width; ++x) box.set(x, bar);
      return box;
    }
    case Node::Kind::Sup: {
      const Box base = layout(node.children[0]);
      const Box exp = layout(node.children[1]);
      const int raise = base.h / 2;
      const int exp_top = base.h - raise - exp.h;  // relative to the base top
      const int shift = std::max(0, -exp_top);
      Box box(base.w + 1 + exp.w, shift + base.h, shift + base.axis);
      box.blit(base, 0, shift);
      box.blit(exp, base.w + 1, exp_top + shift);
      return box;
    }
    case Node::Kind::Sqrt: {
      const Box child = layout(node.children[0]);
      Box box(child.w + 4, child.h + 2, child.axis + 2);
      box.blit(child, 4, 2);
      box.set(0, box.h - 3);
      box.set(1, box.h - 2);
      box.set(1, box.h - 1);
      for (int y = 0; y < box.h; ++y) box.set(2, y);
      for (int x = 2; x < box.w; ++x) box.set(x, 0);
      return box;
    }
  }
  throw Error("unreachable node kind");
}

bool fits_canvas(int w, int h) {
  return kAnchorX + w <= kCanvasWidth && kAnchorY + h <= kCanvasHeight;
}

}  // namespace

InkBox measure(const Program& program) {
  const Box box = layout(program.root);
  return {box.w, box.h};
}

Image render(const Program& program) {
  const Box box = layout(program.root);
  if (!fits_canvas(box.w, box.h))
    throw OverflowError("layout " + std::to_string(box.w) + "x" + std::to_string(box.h) +
                        " exceeds the " + std::to_string(kCanvasWidth) + "x" +
                        std::to_string(kCanvasHeight) + " canvas");
  Image image(kCanvasWidth, kCanvasHeight, 0.0);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x)
      if (box.ink[static_cast<std::size_t>(y) * box.w + x]) image.at(kAnchorX + x, kAnchorY + y) = 1.0;
  return image;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

constexpr double kStructureChance = 0.35;
constexpr int kMaxAttempts = 64;

Node random_atom(Rng& rng) { return Node::atom(static_cast<Token>(rng.below(kNumGlyphs))); }

Node random_group(Rng& rng, int depth_left, int max_items);

Node random_item(Rng& rng, int depth_left) {
  if (depth_left <= 1 || !rng.chance(kStructureChance)) return random_atom(rng);
  const double pick = rng.uniform();
  if (pick < 0.4) {
    Node num = random_group(rng, depth_left - 1, 2);
    return Node::frac(std::move(num), random_group(rng, depth_left - 1, 2));
  }
  if (pick < 0.7) {
    Node base = random_group(rng, depth_left - 1, 2);
    return Node::sup(std::move(base), random_group(rng, depth_left - 1, 2));
  }
  return Node::sqrt(random_group(rng, depth_left - 1, 3));
}

Node random_group(Rng& rng, int depth_left, int max_items) {
  const int n = rng.between(1, max_items);
  std::vector<Node> items;
  for (int i = 0; i < n; ++i) items.push_back(random_item(rng, depth_left));
  return Node::row(std::move(items));
}

bool acceptable(const Program& p) {
  if (static_cast<int>(serialize(p).size()) > kMaxProgramTokens) return false;
  const InkBox box = measure(p);
  return fits_canvas(box.width, box.height);
}

}  // namespace

Program random_program(std::uint64_t seed, int max_depth) {
  if (max_depth < 1 || max_depth > 3) throw Error("random_program: max_depth must be in [1, 3]");
  Rng rng(seed);
  for (int depth = max_depth; depth > 1; --depth) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Program p{random_group(rng, depth, 4)};
      if (acceptable(p)) return p;
    }
  }
  return Program{random_group(rng, 1, 6)};
}

// ---------------------------------------------------------------------------
// Reward

double pixel_similarity(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionMismatch("images differ in size: " + std::to_string(a.width) + "x" +
                            std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                            std::to_string(b.height));
  if (a.pixels.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    same += (a.pixels[i] >= 0.5) == (b.pixels[i] >= 0.5);
  return static_cast<double>(same) / static_cast<double>(a.pixels.size());
}

double episode_reward(std::span<const Token> predicted, const Image& original) {
  Image reconstruction;
  try {
    reconstruction = render(parse(predicted));
  } catch (const ParseError&) {
    return -1.0;
  } catch (const OverflowError&) {
    return -1.0;
  }
  return pixel_similarity(reconstruction, original);
}

}  // namespace stn
