#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stn {

// Fixed vocabulary. Output distributions range over every id below kStart.
enum class Token : std::uint8_t {
  A = 0, B, C, D, E, F, G, H,
  Frac, Sup, Sqrt, LBrace, RBrace,
  End,    // </s>
  Start,  // <s>
};

inline constexpr int kNumGlyphs = 8;
inline constexpr int kVocabSize = 15;
inline constexpr int kOutputSize = 14;  // all tokens except <s>
inline constexpr int kMaxProgramTokens = 16;

using TokenSequence = std::vector<Token>;

constexpr int token_id(Token t) noexcept { return static_cast<int>(t); }
Token token_from_id(int id);
std::string_view token_name(Token t) noexcept;
Token token_from_name(std::string_view name);  // throws UnknownTokenError

constexpr bool is_glyph(Token t) noexcept { return token_id(t) < kNumGlyphs; }

TokenSequence tokenize(std::string_view text);
std::string detokenize(std::span<const Token> tokens);

// Grayscale image, row-major, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

inline constexpr int kCanvasWidth = 64;
inline constexpr int kCanvasHeight = 32;
inline constexpr int kAnchorX = 2;
inline constexpr int kAnchorY = 2;
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

struct Node {
  enum class Kind : std::uint8_t { Atom, Row, Frac, Sup, Sqrt };

  Kind kind = Kind::Atom;
  Token glyph = Token::A;      // Atom only
  std::vector<Node> children;  // Row: >= 2 non-Row items; Frac/Sup: 2; Sqrt: 1

  static Node atom(Token glyph);
  static Node row(std::vector<Node> items);  // flattens nested rows; one item collapses
  static Node frac(Node numerator, Node denominator);
  static Node sup(Node base, Node exponent);
  static Node sqrt(Node child);

  bool operator==(const Node&) const = default;
};

struct Program {
  Node root;

  int depth() const;
  bool operator==(const Program&) const = default;
};

int node_depth(const Node& node);
TokenSequence serialize(const Program& program);
std::string to_string(const Program& program);  // debug form, e.g. Frac(a, b)

Program parse(std::span<const Token> tokens);

using GlyphBitmap = std::array<std::array<bool, kGlyphWidth>, kGlyphHeight>;

// Parses `#`/`.` glyph text in the checked-in format.
std::array<GlyphBitmap, kNumGlyphs> parse_glyph_table(std::string_view text);
const std::array<GlyphBitmap, kNumGlyphs>& glyph_table();

struct InkBox {
  int width = 0;
  int height = 0;
};
InkBox measure(const Program& program);  // layout size before anchoring

Image render(const Program& program);

Program random_program(std::uint64_t seed, int max_depth);
bool contains_structure(const Node& node);

double pixel_similarity(const Image& a, const Image& b);
double episode_reward(std::span<const Token> predicted, const Image& original);

// Dataset directory: images/NNNNN.pgm and labels.txt.
struct Sample {
  Image image;
  TokenSequence tokens;  // without sentinels
};
using Dataset = std::vector<Sample>;

Dataset dataset_generate(int count, std::uint64_t seed);
void dataset_write(const Dataset& data, const std::filesystem::path& dir);
Dataset dataset_read(const std::filesystem::path& dir);

void write_pgm(const Image& image, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

}  // namespace stn
