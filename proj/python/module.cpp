#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "stn/errors.hpp"
#include "stn/gradcheck.hpp"
#include "stn/training.hpp"
#include "stn/transcribe.hpp"

namespace py = pybind11;
using namespace stn;

namespace {

py::array_t<double> image_to_array(const Image& image) {
  py::array_t<double> out({image.height, image.width});
  std::copy(image.pixels.begin(), image.pixels.end(), out.mutable_data());
  return out;
}

Image array_to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("image must be a 2-D array");
  Image image(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), image.pixels.begin());
  return image;
}

std::vector<std::string> token_names(std::span<const Token> tokens) {
  std::vector<std::string> names;
  for (Token t : tokens) names.emplace_back(token_name(t));
  return names;
}

TokenSequence from_names(const std::vector<std::string>& names) {
  TokenSequence tokens;
  for (const auto& n : names) tokens.push_back(token_from_name(n));
  return tokens;
}

Dataset load_data(const std::filesystem::path& dir) { return dataset_read(dir); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Glyph transcription with spotlight attention";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UnknownTokenError>(m, "UnknownTokenError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<OverflowError>(m, "OverflowError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  m.attr("CANVAS_WIDTH") = kCanvasWidth;
  m.attr("CANVAS_HEIGHT") = kCanvasHeight;

  m.def("tokenize", [](const std::string& text) { return token_names(tokenize(text)); }, py::arg("text"));
  m.def("detokenize", [](const std::vector<std::string>& names) { return detokenize(from_names(names)); },
        py::arg("tokens"));
  m.def("parse", [](const std::string& text) { return to_string(parse(tokenize(text))); }, py::arg("text"),
        "Parses a token string and returns the tree in debug form.");
  m.def("render", [](const std::string& text) { return image_to_array(render(parse(tokenize(text)))); },
        py::arg("text"));
  m.def("random_program",
        [](std::uint64_t seed, int max_depth) { return detokenize(serialize(random_program(seed, max_depth))); },
        py::arg("seed"), py::arg("max_depth") = 3);
  m.def("episode_reward",
        [](const std::string& predicted, const py::array_t<double>& image) {
          return episode_reward(tokenize(predicted), array_to_image(image));
        },
        py::arg("predicted"), py::arg("image"));

  m.def("weight_map",
        [](double x, double y, double sigma, int width, int height) {
          if (width < 1 || height < 1) throw ShapeError("grid must be at least 1x1");
          const WeightMap w = weight_map({x, y, sigma}, CoordinateGrids::make({width, height}));
          py::array_t<double> out({width, height});
          auto r = out.mutable_unchecked<2>();
          for (int i = 0; i < width; ++i)
            for (int j = 0; j < height; ++j) r(i, j) = w.alpha(i, j);
          return out;
        },
        py::arg("x"), py::arg("y"), py::arg("sigma"), py::arg("width"), py::arg("height"),
        "Spotlight weights; entry [i-1, j-1] belongs to grid cell (i, j).");

  m.def("gen_data",
        [](int count, std::uint64_t seed, const std::filesystem::path& out) {
          dataset_write(dataset_generate(count, seed), out);
        },
        py::arg("count"), py::arg("seed"), py::arg("out"));

  m.def("train",
        [](const std::filesystem::path& data, const std::filesystem::path& out, const std::string& variant,
           int epochs, std::uint64_t seed, int workers) {
          TrainConfig c;
          c.variant = variant_from_name(variant);
          c.epochs = epochs;
          c.seed = seed;
          c.workers = workers;
          c.data_dir = data.string();
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = train_supervised(c, load_data(data));
            save_checkpoint(r.store, out);
          }
          py::list rows;
          for (const auto& e : r.metrics) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["train_loss"] = e.train_loss;
            d["val_loss"] = e.val_loss;
            d["val_token_acc"] = e.val_token_acc;
            rows.append(d);
          }
          return rows;
        },
        py::arg("data"), py::arg("out"), py::arg("variant") = "stnr", py::arg("epochs") = 50, py::arg("seed") = 0,
        py::arg("workers") = 1, "Trains with teacher forcing, writes the best checkpoint and returns per-epoch metrics.");

  m.def("evaluate",
        [](const std::filesystem::path& ckpt, const std::filesystem::path& data) {
          const ParameterStore store = load_checkpoint(ckpt);
          const Accuracy a = evaluate_accuracy(store.params, load_data(data));
          py::dict d;
          d["token_accuracy"] = a.token_accuracy;
          d["sequence_accuracy"] = a.sequence_accuracy;
          d["mean_reward"] = a.mean_reward;
          return d;
        },
        py::arg("ckpt"), py::arg("data"));

  m.def("transcribe",
        [](const std::filesystem::path& ckpt, const py::array_t<double>& image) {
          const ParameterStore store = load_checkpoint(ckpt);
          return detokenize(greedy_decode(store.params, array_to_image(image)).body());
        },
        py::arg("ckpt"), py::arg("image"));

  m.def("gradcheck",
        [](const std::string& variant, std::uint64_t seed) {
          ParameterStore store = ParameterStore::create(variant_from_name(variant));
          glorot_init(store, seed);
          const GradCheckReport r = gradient_check(store.params, make_toy_instance(seed));
          return py::make_tuple(r.passed, format_report(r));
        },
        py::arg("variant") = "stnr", py::arg("seed") = 1, "Returns (passed, report text).");

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
