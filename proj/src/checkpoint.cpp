#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "stn/errors.hpp"
#include "stn/training.hpp"

namespace stn {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'T', 'N', '1'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put_doubles(const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) put(data[i]);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  template <class T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw Error("truncated checkpoint: " + source_);
    return to_little(v);
  }
  std::string get_string(std::size_t limit = 1 << 20) {
    const auto n = get<std::uint32_t>();
    if (n > limit) throw Error("corrupt checkpoint string in " + source_);
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw Error("truncated checkpoint: " + source_);
    return s;
  }
  void get_doubles(double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) data[i] = get<double>();
  }

 private:
  std::istream& in_;
  std::string source_;
};

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

std::set<std::string> split_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  Writer w(out);
  out.write(kMagic, 4);

  const auto views = store.params.views();
  w.put(static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    w.put_string(v.group);
    w.put_string(v.name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(v.rows));
    w.put(static_cast<std::uint64_t>(v.cols));
    w.put_doubles(v.data, v.size());
  }

  const auto m = store.adam_m.views();
  const auto vv = store.adam_v.views();
  w.put(static_cast<std::int64_t>(store.adam_step));
  w.put(static_cast<std::uint32_t>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    w.put_doubles(m[i].data, m[i].size());
    w.put_doubles(vv[i].data, vv[i].size());
  }

  KeyValues config = store.config;
  config["variant"] = std::string(variant_name(store.params.variant));
  config["frozen"] = join(store.frozen);
  std::string text;
  for (const auto& [k, v] : config) text += k + "=" + v + "\n";
  w.put_string(text);
  if (!out) throw Error("write failed: " + path.string());
}

ParameterStore load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error("not an STN1 checkpoint: " + path.string());
  Reader r(in, path.string());

  struct Record {
    std::uint64_t rows, cols;
    std::vector<double> data;
  };
  std::vector<std::pair<std::string, Record>> records;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string key = r.get_string();
    key += '/';
    key += r.get_string();
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 2) throw Error("unsupported array rank in " + path.string());
    Record rec;
    rec.rows = r.get<std::uint64_t>();
    rec.cols = r.get<std::uint64_t>();
    if (rec.rows * rec.cols > (1u << 26)) throw Error("corrupt array shape in " + path.string());
    rec.data.resize(rec.rows * rec.cols);
    r.get_doubles(rec.data.data(), static_cast<Eigen::Index>(rec.data.size()));
    records.emplace_back(std::move(key), std::move(rec));
  }
  const auto step = r.get<std::int64_t>();
  const auto moment_count = r.get<std::uint32_t>();
  if (moment_count != count) throw Error("moment count mismatch in " + path.string());
  std::vector<std::vector<double>> m(count), v(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto n = static_cast<Eigen::Index>(records[i].second.data.size());
    m[i].resize(records[i].second.data.size());
    v[i].resize(records[i].second.data.size());
    r.get_doubles(m[i].data(), n);
    r.get_doubles(v[i].data(), n);
  }
  KeyValues config;
  std::istringstream lines(r.get_string());
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!config.count("variant")) throw Error("checkpoint has no variant: " + path.string());

  ParameterStore store = ParameterStore::create(variant_from_name(config["variant"]));
  store.adam_step = step;
  store.frozen = split_list(config["frozen"]);
  config.erase("variant");
  config.erase("frozen");
  store.config = std::move(config);

  auto pv = store.params.views();
  auto mv = store.adam_m.views();
  auto vv = store.adam_v.views();
  if (pv.size() != records.size()) throw Error("checkpoint array count mismatch: " + path.string());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const std::string key = std::string(pv[i].group) + "/" + pv[i].name;
    const auto& [name, rec] = records[i];
    if (name != key) throw Error("checkpoint array '" + name + "' where '" + key + "' was expected");
    if (static_cast<Eigen::Index>(rec.rows) != pv[i].rows || static_cast<Eigen::Index>(rec.cols) != pv[i].cols)
      throw Error("checkpoint array '" + name + "' has the wrong shape");
    std::copy(rec.data.begin(), rec.data.end(), pv[i].data);
    std::copy(m[i].begin(), m[i].end(), mv[i].data);
    std::copy(v[i].begin(), v[i].end(), vv[i].data);
  }
  return store;
}

}  // namespace stn
