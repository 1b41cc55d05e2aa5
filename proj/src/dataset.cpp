#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stn/errors.hpp"
#include "stn/glyphlang.hpp"
#include "stn/rng.hpp"

namespace stn {

namespace fs = std::filesystem;

namespace {

std::string image_id(std::size_t index) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

Dataset dataset_generate(int count, std::uint64_t seed) {
  if (count < 1) throw Error("dataset_generate: count must be >= 1");
  Rng rng(seed);
  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Program p = random_program(rng.bits(), 3);
    out.push_back({render(p), serialize(p)});
  }
  return out;
}

void write_pgm(const Image& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.pixels) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  auto header_field = [&]() -> std::string {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw Error("truncated PGM header: " + path.string());
  };
  if (header_field() != "P5") throw Error("not a binary PGM (P5): " + path.string());
  const int w = std::stoi(header_field());
  const int h = std::stoi(header_field());
  const int maxval = std::stoi(header_field());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw Error("unsupported PGM geometry in " + path.string());
  in.get();  // single whitespace byte ends the header
  Image image(w, h);
  std::vector<unsigned char> raw(image.pixels.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error("truncated PGM data: " + path.string());
  for (std::size_t i = 0; i < raw.size(); ++i) image.pixels[i] = raw[i] / static_cast<double>(maxval);
  return image;
}

void dataset_write(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream labels(dir / "labels.txt");
  if (!labels) throw Error("cannot open " + (dir / "labels.txt").string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string id = image_id(i);
    write_pgm(data[i].image, dir / "images" / (id + ".pgm"));
    labels << id << '\t' << detokenize(data[i].tokens) << '\n';
  }
  if (!labels) throw Error("write failed: " + (dir / "labels.txt").string());
}

Dataset dataset_read(const fs::path& dir) {
  std::ifstream labels(dir / "labels.txt");
  if (!labels) throw Error("cannot open " + (dir / "labels.txt").string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(labels, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("labels.txt line " + std::to_string(lineno) + ": missing TAB");
    const std::string id = line.substr(0, tab);
    out.push_back({read_pgm(dir / "images" / (id + ".pgm")), tokenize(line.substr(tab + 1))});
  }
  return out;
}

}  // namespace stn
