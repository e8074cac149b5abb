// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/io/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#ifndef INVCLR_VERSION
#define INVCLR_VERSION "unknown"
#endif

namespace invclr::io {

namespace {

using ad::Shape;
using ad::Tensor;

// ---------------------------------------------------------------------------
// Strict config reading

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    read(j_.at(key), join(path_, key), out);
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const Json kEmpty = Json::object();
    return Reader(j_.contains(key) ? j_.at(key) : kEmpty, join(path_, key));
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  /// Rejects keys that no `get` or `child` call asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + join(path_, key) + "'");
    }
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

  static void read(const Json& v, const std::string& key, double& out) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    out = v.get<double>();
  }
  static void read(const Json& v, const std::string& key, std::size_t& out) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(key + ": expected a non-negative integer");
    }
    out = v.get<std::size_t>();
  }
  static void read(const Json& v, const std::string& key, int& out) {
    if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, const std::string& key, bool& out) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    out = v.get<bool>();
  }
  static void read(const Json& v, const std::string& key, std::string& out) {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    out = v.get<std::string>();
  }
  template <class T>
  static void read(const Json& v, const std::string& key, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(key + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      read(v[i], key + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_spec_offsets(Reader r, spiro::SpecTable& specs, bool widen) {
  for (const auto& name : spiro::kNuisanceNames) {
    double v = 0.0;
    r.get(std::string(name), v);
    if (widen) {
      specs.spec(name).widen = v;
    } else {
      specs.spec(name).shift = v;
    }
  }
  for (const auto& name : spiro::kFactorNames) {
    double v = 0.0;
    r.get(std::string(name), v);
    if (widen) {
      specs.spec(name).widen = v;
    } else {
      specs.spec(name).shift = v;
    }
  }
  r.finish();
}

Json spec_offsets(const spiro::SpecTable& specs, bool widen) {
  Json out = Json::object();
  auto put = [&](std::string_view name) {
    const auto& s = specs.spec(name);
    const double v = widen ? s.widen : s.shift;
    if (v != 0.0) out[std::string(name)] = v;
  };
  for (const auto& n : spiro::kFactorNames) put(n);
  for (const auto& n : spiro::kNuisanceNames) put(n);
  return out;
}

std::string route_name(obj::PenaltyRoute r) {
  return r == obj::PenaltyRoute::kBasis ? "basis" : "per_direction";
}

Json sweep_to_json(const eval::SweepSpec& s) {
  return {{"name", s.name},
          {"kind", s.kind == eval::SweepSpec::Kind::kShift ? "shift" : "widen"},
          {"fields", s.fields},
          {"strengths", s.strengths}};
}

eval::SweepSpec sweep_from_json(const Json& j, const std::string& path) {
  Reader r(j, path);
  eval::SweepSpec s;
  std::string kind = "shift";
  r.get("name", s.name);
  r.get("kind", kind);
  r.get("fields", s.fields);
  r.get("strengths", s.strengths);
  r.finish();
  if (kind == "shift") {
    s.kind = eval::SweepSpec::Kind::kShift;
  } else if (kind == "widen") {
    s.kind = eval::SweepSpec::Kind::kWiden;
  } else {
    throw ConfigError(path + ".kind: expected \"shift\" or \"widen\", got \"" + kind + "\"");
  }
  if (s.name.empty()) throw ConfigError(path + ".name: must be non-empty");
  for (const auto& f : s.fields) {
    try {
      spiro::SpecTable::defaults().spec(f);
    } catch (const std::invalid_argument&) {
      throw ConfigError(path + ".fields: unknown field '" + f + "'");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Binary payloads

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

using Named = std::vector<std::pair<std::string, Tensor>>;

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void write_blob(const fs::path& path, Json header, const Named& tensors) {
  Json list = Json::array();
  std::size_t bytes = 0;
  for (const auto& [name, t] : tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}});
    bytes += 8 * t.size();
  }
  header["tensors"] = std::move(list);
  header["payload_bytes"] = bytes;
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + bytes);
  for (const auto& [name, t] : tensors) {
    for (double v : t.data()) put_f64(out, v);
  }
  write_atomic(path, out);
}

struct Blob {
  Json header;
  Named tensors;
};

Blob read_blob(const fs::path& path, const std::string& kind) {
  const std::string bytes = read_file(path);
  const std::string where = path.string();
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) {
    throw FormatError(where + ": no header line found (file is " + std::to_string(bytes.size()) +
                      " bytes)");
  }
  Blob blob;
  try {
    blob.header = Json::parse(bytes.substr(0, nl));
  } catch (const Json::parse_error& e) {
    throw FormatError(where + ": malformed header at byte offset " + std::to_string(e.byte) +
                      ": " + e.what());
  }
  const Json& h = blob.header;
  if (!h.is_object() || h.value("kind", "") != kind) {
    throw FormatError(where + ": expected a " + kind + " file at byte offset 0");
  }
  if (!h.contains("version") || !h["version"].is_number_integer() ||
      h["version"].get<int>() != kFormatVersion) {
    throw FormatError(where + ": unsupported " + kind + " format version " +
                      (h.contains("version") ? h["version"].dump() : "(missing)") +
                      ", expected " + std::to_string(kFormatVersion));
  }
  std::size_t offset = nl + 1;
  if (!h.contains("tensors") || !h["tensors"].is_array()) {
    throw FormatError(where + ": header lacks a tensor list");
  }
  for (const auto& entry : h["tensors"]) {
    std::string name;
    Shape shape;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
    } catch (const Json::exception& e) {
      throw FormatError(where + ": malformed tensor entry " + entry.dump());
    }
    const std::size_t need = 8 * numel(shape);
    if (bytes.size() - offset < need) {
      throw FormatError(where + ": truncated payload: tensor '" + name + "' needs " +
                        std::to_string(need) + " bytes at byte offset " + std::to_string(offset) +
                        " but the file ends at byte offset " + std::to_string(bytes.size()));
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = get_f64(bytes.data() + offset + 8 * i);
    offset += need;
    blob.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (offset != bytes.size()) {
    throw FormatError(where + ": " + std::to_string(bytes.size() - offset) +
                      " unexpected trailing bytes at byte offset " + std::to_string(offset));
  }
  return blob;
}

Json spec_to_json(const spiro::UniformSpec& s) {
  return {{"low", s.low}, {"high", s.high}, {"shift", s.shift}, {"widen", s.widen}};
}

spiro::UniformSpec spec_from_json(const Json& j) {
  return {j.at("low").get<double>(), j.at("high").get<double>(), j.at("shift").get<double>(),
          j.at("widen").get<double>()};
}

Json specs_to_json(const spiro::SpecTable& specs) {
  Json out = Json::object();
  for (const auto& n : spiro::kFactorNames) out[std::string(n)] = spec_to_json(specs.spec(n));
  for (const auto& n : spiro::kNuisanceNames) out[std::string(n)] = spec_to_json(specs.spec(n));
  return out;
}

spiro::SpecTable specs_from_json(const Json& j) {
  spiro::SpecTable specs;
  for (const auto& n : spiro::kFactorNames) specs.spec(n) = spec_from_json(j.at(std::string(n)));
  for (const auto& n : spiro::kNuisanceNames) specs.spec(n) = spec_from_json(j.at(std::string(n)));
  return specs;
}

Json estimate_json(const obj::Estimate& e) {
  return {{"value", e.value}, {"std_error", e.std_error}};
}

Json per_factor(const std::vector<double>& v) {
  Json out = Json::object();
  for (std::size_t i = 0; i < v.size() && i < spiro::kNumFactors; ++i) {
    out[std::string(spiro::kFactorNames[i])] = v[i];
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::string code_version() { return std::string("invclr ") + INVCLR_VERSION; }

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  try {
    if (data.n_train == 0) throw ConfigError("data.n_train must be positive");
    if (data.n_test == 0) throw ConfigError("data.n_test must be positive");
    grid().validate();
    data.specs.validate();
    encoder.validate();
    head.validate();
    train.validate();
    eval.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (encoder.input_shape != std::array<std::size_t, 3>{3, static_cast<std::size_t>(data.resolution),
                                                        static_cast<std::size_t>(data.resolution)}) {
    throw ConfigError("encoder input shape does not follow data.resolution");
  }
  if (train.batch_size > data.n_train) {
    throw ConfigError("train.batch_size (" + std::to_string(train.batch_size) +
                      ") exceeds data.n_train (" + std::to_string(data.n_train) + ")");
  }
  if (eval.condvar_k > data.n_test) {
    throw ConfigError("eval.condvar_k (" + std::to_string(eval.condvar_k) +
                      ") exceeds data.n_test (" + std::to_string(data.n_test) + ")");
  }
}

ExperimentConfig config_from_json(const Json& doc, bool data_only) {
  ExperimentConfig cfg;
  const Json body = doc.is_null() ? Json::object() : doc;
  Reader root(body, "");
  root.get("seed", cfg.seed);

  {
    Reader r = root.child("data");
    r.get("n_train", cfg.data.n_train);
    r.get("n_test", cfg.data.n_test);
    r.get("resolution", cfg.data.resolution);
    r.get("extent", cfg.data.extent);
    read_spec_offsets(r.child("shift"), cfg.data.specs, false);
    read_spec_offsets(r.child("widen"), cfg.data.specs, true);
    r.finish();
  }
  {
    Reader r = root.child("encoder");
    r.get("hidden_sizes", cfg.encoder.hidden_sizes);
    r.get("repr_dim", cfg.encoder.repr_dim);
    r.finish();
    if (cfg.data.resolution <= 0) throw ConfigError("data.resolution must be positive");
    const auto res = static_cast<std::size_t>(cfg.data.resolution);
    cfg.encoder.input_shape = {3, res, res};
  }
  {
    Reader r = root.child("head");
    r.get("hidden", cfg.head.hidden);
    r.get("out_dim", cfg.head.out_dim);
    r.finish();
  }
  {
    Reader r = root.child("train");
    auto& t = cfg.train;
    std::string optimizer = "adam", route = "basis";
    r.get("batch_size", t.batch_size);
    r.get("epochs", t.epochs);
    r.get("lr_max", t.lr_max);
    r.get("optimizer", optimizer);
    r.get("beta1", t.optimizer.beta1);
    r.get("beta2", t.optimizer.beta2);
    r.get("eps", t.optimizer.eps);
    r.get("momentum", t.optimizer.momentum);
    r.get("record_wall_time", t.record_wall_time);
    r.get("penalty_route", route);
    r.finish();
    if (optimizer == "adam") {
      t.optimizer.kind = train::OptimizerKind::kAdam;
    } else if (optimizer == "sgd") {
      t.optimizer.kind = train::OptimizerKind::kSgd;
    } else {
      throw ConfigError("train.optimizer: expected \"adam\" or \"sgd\", got \"" + optimizer + "\"");
    }
    if (route == "basis") {
      t.route = obj::PenaltyRoute::kBasis;
    } else if (route == "per_direction") {
      t.route = obj::PenaltyRoute::kPerDirection;
    } else {
      throw ConfigError("train.penalty_route: expected \"basis\" or \"per_direction\", got \"" +
                        route + "\"");
    }
  }
  {
    Reader r = root.child("reg");
    r.get("lambda", cfg.train.reg.lambda);
    r.get("L", cfg.train.reg.L);
    r.get("clip", cfg.train.reg.clip);
    r.finish();
  }
  {
    Reader r = root.child("similarity");
    r.get("tau", cfg.train.sim.tau);
    r.finish();
  }
  {
    Reader r = root.child("feature_averaging");
    r.get("max_M", cfg.eval.fa_max_M);
    r.finish();
  }
  {
    Reader r = root.child("eval");
    r.get("weight_decay", cfg.eval.weight_decay);
    r.get("condvar_k", cfg.eval.condvar_k);
    r.get("condvar_L", cfg.eval.condvar_L);
    r.finish();
  }
  if (root.has("sweeps")) {
    const Json& s = root.at("sweeps");
    if (!s.is_array()) throw ConfigError("sweeps: expected an array");
    cfg.eval.sweeps.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      cfg.eval.sweeps.push_back(sweep_from_json(s[i], "sweeps[" + std::to_string(i) + "]"));
    }
  }
  root.finish();

  cfg.train.seed = cfg.seed;
  cfg.eval.seed = cfg.seed;
  if (data_only) {
    try {
      cfg.grid().validate();
      cfg.data.specs.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    cfg.validate();
  }
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.train;
  Json sweeps = Json::array();
  for (const auto& s : cfg.eval.sweeps) sweeps.push_back(sweep_to_json(s));
  return {
      {"seed", cfg.seed},
      {"data",
       {{"n_train", cfg.data.n_train},
        {"n_test", cfg.data.n_test},
        {"resolution", cfg.data.resolution},
        {"extent", cfg.data.extent},
        {"shift", spec_offsets(cfg.data.specs, false)},
        {"widen", spec_offsets(cfg.data.specs, true)}}},
      {"encoder", {{"hidden_sizes", cfg.encoder.hidden_sizes}, {"repr_dim", cfg.encoder.repr_dim}}},
      {"head", {{"hidden", cfg.head.hidden}, {"out_dim", cfg.head.out_dim}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"lr_max", t.lr_max},
        {"optimizer", t.optimizer.kind == train::OptimizerKind::kAdam ? "adam" : "sgd"},
        {"beta1", t.optimizer.beta1},
        {"beta2", t.optimizer.beta2},
        {"eps", t.optimizer.eps},
        {"momentum", t.optimizer.momentum},
        {"record_wall_time", t.record_wall_time},
        {"penalty_route", route_name(t.route)}}},
      {"reg", {{"lambda", t.reg.lambda}, {"L", t.reg.L}, {"clip", t.reg.clip}}},
      {"similarity", {{"tau", t.sim.tau}}},
      {"feature_averaging", {{"max_M", cfg.eval.fa_max_M}}},
      {"eval",
       {{"weight_decay", cfg.eval.weight_decay},
        {"condvar_k", cfg.eval.condvar_k},
        {"condvar_L", cfg.eval.condvar_L}}},
      {"sweeps", sweeps},
  };
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "': expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  if (doc.is_null()) doc = Json::object();
  Json* node = &doc;
  std::stringstream ss(key);
  std::string part, walked;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + walked + "' is not an object");
    walked = join(walked, parts[i]);
    if (i + 1 == parts.size()) {
      Json value;
      try {
        value = Json::parse(text);
      } catch (const Json::parse_error&) {
        value = text;
      }
      (*node)[parts[i]] = std::move(value);
    } else {
      if (!node->contains(parts[i])) (*node)[parts[i]] = Json::object();
      node = &(*node)[parts[i]];
    }
  }
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides,
                             bool data_only) {
  Json doc = Json::object();
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError(path.string() + ": config file not found");
    const std::string text = read_file(path);
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        doc = Json::parse(text);
      } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON at byte offset " +
                          std::to_string(e.byte));
      }
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    return config_from_json(doc, data_only);
  } catch (const ConfigError& e) {
    throw ConfigError((path.empty() ? std::string("config") : path.string()) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_dataset(const fs::path& path, const spiro::SpiroDataset& data) {
  Json header = {{"kind", "dataset"},
                 {"version", kFormatVersion},
                 {"code_version", code_version()},
                 {"seed", data.seed},
                 {"n", data.size()},
                 {"grid", {{"resolution", data.grid.resolution}, {"extent", data.grid.extent}}},
                 {"specs", specs_to_json(data.specs)}};
  write_blob(path, std::move(header), {{"factors", data.factors}, {"eval_nuisance", data.eval_nuisance}});
}

spiro::SpiroDataset read_dataset(const fs::path& path) {
  Blob blob = read_blob(path, "dataset");
  spiro::SpiroDataset ds;
  try {
    const Json& h = blob.header;
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.grid.resolution = h.at("grid").at("resolution").get<int>();
    ds.grid.extent = h.at("grid").at("extent").get<double>();
    ds.specs = specs_from_json(h.at("specs"));
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": malformed dataset header: " + e.what());
  }
  if (blob.tensors.size() != 2 || blob.tensors[0].first != "factors" ||
      blob.tensors[1].first != "eval_nuisance") {
    throw FormatError(path.string() + ": expected tensors 'factors' and 'eval_nuisance'");
  }
  ds.factors = std::move(blob.tensors[0].second);
  ds.eval_nuisance = std::move(blob.tensors[1].second);
  if (ds.factors.rank() != 2 || ds.factors.dim(1) != spiro::kNumFactors ||
      ds.eval_nuisance.rank() != 2 || ds.eval_nuisance.dim(1) != spiro::kNumNuisance ||
      ds.eval_nuisance.dim(0) != ds.factors.dim(0)) {
    throw FormatError(path.string() + ": dataset tensors have inconsistent shapes");
  }
  return ds;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Json header = {{"kind", "checkpoint"},
                 {"version", kFormatVersion},
                 {"code_version", code_version()},
                 {"config", ckpt.config},
                 {"step", ckpt.step}};
  Named tensors;
  for (const auto& [name, t] : ckpt.params) tensors.emplace_back(name, t);
  write_blob(path, std::move(header), tensors);
}

Checkpoint read_checkpoint(const fs::path& path) {
  Blob blob = read_blob(path, "checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.config = blob.header.at("config");
    ckpt.step = blob.header.at("step").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  for (auto& [name, t] : blob.tensors) ckpt.params.add(name, std::move(t));
  return ckpt;
}

Json metrics_to_json(const train::MetricsRecord& rec) {
  Json j = {{"step", rec.step},
            {"epoch", rec.epoch},
            {"lr", rec.lr},
            {"infonce", rec.infonce},
            {"penalty", nullptr},
            {"penalty_clipped", rec.penalty_clipped},
            {"wall_ms", nullptr}};
  if (rec.penalty) j["penalty"] = *rec.penalty;
  if (rec.wall_ms) j["wall_ms"] = *rec.wall_ms;
  return j;
}

train::MetricsRecord metrics_from_json(const Json& j) {
  train::MetricsRecord rec;
  rec.step = j.at("step").get<std::uint64_t>();
  rec.epoch = j.at("epoch").get<std::uint64_t>();
  rec.lr = j.at("lr").get<double>();
  rec.infonce = j.at("infonce").get<double>();
  if (!j.at("penalty").is_null()) rec.penalty = j.at("penalty").get<double>();
  rec.penalty_clipped = j.at("penalty_clipped").get<bool>();
  if (!j.at("wall_ms").is_null()) rec.wall_ms = j.at("wall_ms").get<double>();
  return rec;
}

MetricsWriter::MetricsWriter(const fs::path& path, const Json& config) : path_(path) {
  tmp_ = path;
  tmp_ += ".tmp";
  Json header = {{"kind", "metrics"},
                 {"version", kFormatVersion},
                 {"code_version", code_version()},
                 {"config", config}};
  buffer_ = header.dump() + "\n";
}

void MetricsWriter::write(const train::MetricsRecord& rec) {
  buffer_ += metrics_to_json(rec).dump();
  buffer_ += '\n';
}

void MetricsWriter::close() { write_atomic(path_, buffer_); }

std::vector<train::MetricsRecord> read_metrics(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  std::vector<train::MetricsRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(where + ": malformed JSON at column " + std::to_string(e.byte));
    }
    if (lineno == 1) {
      if (j.value("kind", "") != "metrics") throw FormatError(where + ": missing metrics header");
      if (j.value("version", -1) != kFormatVersion) {
        throw FormatError(where + ": unsupported metrics format version " +
                          j.value("version", Json()).dump());
      }
      continue;
    }
    train::MetricsRecord rec;
    try {
      rec = metrics_from_json(j);
    } catch (const Json::exception& e) {
      throw FormatError(where + ": malformed record: " + e.what());
    }
    if (!out.empty() && rec.step <= out.back().step) {
      throw FormatError(where + ": step " + std::to_string(rec.step) +
                        " does not increase (previous " + std::to_string(out.back().step) + ")");
    }
    out.push_back(rec);
  }
  if (lineno == 0) throw FormatError(path.string() + ": empty metrics file");
  return out;
}

// ---------------------------------------------------------------------------
// Reports

Json report_to_json(const eval::EvalReport& report) {
  Json fa = Json::array();
  for (const auto& p : report.feature_averaging) {
    fa.push_back({{"M", p.M}, {"mse", per_factor(p.mse)}});
  }
  Json rob = Json::array();
  for (const auto& c : report.robustness) {
    Json pts = Json::array();
    for (const auto& p : c.points) pts.push_back({{"strength", p.strength}, {"mse", per_factor(p.mse)}});
    rob.push_back({{"name", c.name}, {"points", pts}});
  }
  return {{"probe_mse", per_factor(report.probe_mse)},
          {"alpha_recovery",
           {{"loss", report.alpha.loss},
            {"reference", report.alpha.reference},
            {"per_coordinate", report.alpha.per_coordinate}}},
          {"condvar", estimate_json(report.condvar)},
          {"feature_averaging", fa},
          {"robustness", rob}};
}

Json artifact(const std::string& kind, const ExperimentConfig& cfg, Json payload) {
  Json out = {{"kind", kind},
              {"version", kFormatVersion},
              {"code_version", code_version()},
              {"seed", cfg.seed},
              {"config", config_to_json(cfg)}};
  out[kind] = std::move(payload);
  return out;
}

Json report_artifact(const ExperimentConfig& cfg, const eval::EvalReport& report,
                     const spiro::SpiroDataset& train_set, const spiro::SpiroDataset& test_set) {
  Json out = artifact("report", cfg, report_to_json(report));
  out["data_seeds"] = {{"train", train_set.seed}, {"test", test_set.seed}};
  return out;
}

Json compare_reports(const eval::EvalReport& base, const eval::EvalReport& reg) {
  Json probe = Json::object();
  for (std::size_t i = 0; i < base.probe_mse.size() && i < reg.probe_mse.size(); ++i) {
    const std::string name(spiro::kFactorNames[i]);
    probe[name] = {{"lambda0", base.probe_mse[i]},
                   {"lambda", reg.probe_mse[i]},
                   {"delta", reg.probe_mse[i] - base.probe_mse[i]}};
  }
  // Degradation of a curve point is the task-averaged relative MSE increase
  // over the curve's S = 0 point (the first point if S = 0 is absent).
  auto degradation = [](const eval::SweepCurve& c) {
    std::vector<double> out;
    auto origin = std::find_if(c.points.begin(), c.points.end(),
                               [](const eval::SweepPoint& p) { return p.strength == 0.0; });
    const auto& ref = (origin == c.points.end() ? c.points.front() : *origin).mse;
    for (const auto& p : c.points) {
      std::vector<double> rel;
      for (std::size_t i = 0; i < ref.size(); ++i) rel.push_back(p.mse[i] / ref[i] - 1.0);
      out.push_back(mean_of(rel));
    }
    return out;
  };
  Json rob = Json::array();
  for (std::size_t c = 0; c < base.robustness.size() && c < reg.robustness.size(); ++c) {
    const auto& bc = base.robustness[c];
    const auto& rc = reg.robustness[c];
    if (bc.points.empty() || bc.name != rc.name || bc.points.size() != rc.points.size()) continue;
    std::vector<double> strengths;
    for (const auto& p : bc.points) strengths.push_back(p.strength);
    rob.push_back({{"name", bc.name},
                   {"strengths", strengths},
                   {"degradation_lambda0", degradation(bc)},
                   {"degradation_lambda", degradation(rc)}});
  }
  return {{"condvar",
           {{"lambda0", estimate_json(base.condvar)},
            {"lambda", estimate_json(reg.condvar)},
            {"ratio", reg.condvar.value / base.condvar.value}}},
          {"alpha_recovery",
           {{"lambda0", base.alpha.loss},
            {"lambda", reg.alpha.loss},
            {"reference", reg.alpha.reference},
            {"delta", reg.alpha.loss - base.alpha.loss}}},
          {"probe_mse", probe},
          {"robustness", rob}};
}

// ---------------------------------------------------------------------------
// Orchestration

RunPaths run_paths(const fs::path& dir) {
  return {dir / "train.data", dir / "test.data", dir / "model.ckpt", dir / "metrics.jsonl",
          dir / "report.json"};
}

spiro::SpiroDataset ensure_dataset(const fs::path& path, std::size_t n, std::uint64_t seed,
                                   const spiro::SpecTable& specs, const spiro::RenderGrid& grid) {
  if (fs::exists(path)) {
    try {
      spiro::SpiroDataset ds = read_dataset(path);
      if (ds.seed == seed && ds.size() == n && ds.specs == specs &&
          ds.grid.resolution == grid.resolution && ds.grid.extent == grid.extent) {
        return ds;
      }
    } catch (const FormatError&) {
    }
  }
  spiro::SpiroDataset ds = spiro::generate_dataset(n, seed, specs, grid);
  write_dataset(path, ds);
  return ds;
}

eval::EvalReport run_experiment(const ExperimentConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const Json resolved = config_to_json(cfg);
  spiro::SpiroDataset train_set, test_set;
  try {
    train_set = ensure_dataset(paths.train_data, cfg.data.n_train, cfg.train_data_seed(),
                               cfg.data.specs, cfg.grid());
    test_set = ensure_dataset(paths.test_data, cfg.data.n_test, cfg.test_data_seed(),
                              cfg.data.specs, cfg.grid());
  } catch (const std::exception& e) {
    throw StageError("generate", e.what());
  }

  ad::ParamStore params;
  {
    MetricsWriter metrics(paths.metrics, resolved);
    train::TrainHooks hooks;
    hooks.on_metrics = [&](const train::MetricsRecord& r) { metrics.write(r); };
    std::uint64_t steps = 0;
    try {
      train::TrainResult res = train::train(train_set, cfg.encoder, cfg.head, cfg.train, hooks);
      params = std::move(res.params);
      steps = res.metrics.empty() ? 0 : res.metrics.back().step;
    } catch (const std::exception& e) {
      metrics.close();
      throw StageError("train", e.what());
    }
    try {
      metrics.close();
      write_checkpoint(paths.checkpoint, {resolved, steps, params});
    } catch (const std::exception& e) {
      throw StageError("train", e.what());
    }
  }

  try {
    eval::EvalReport report = eval::evaluate(train_set, test_set, params, cfg.encoder, cfg.eval);
    write_atomic(paths.report, report_artifact(cfg, report, train_set, test_set).dump(2) + "\n");
    return report;
  } catch (const std::exception& e) {
    throw StageError("evaluate", e.what());
  }
}

Json run_paired(const ExperimentConfig& cfg, const fs::path& dir) {
  if (!(cfg.train.reg.lambda > 0.0)) {
    throw ConfigError("pair: reg.lambda must be positive to compare against lambda = 0");
  }
  ExperimentConfig base = cfg;
  base.train.reg.lambda = 0.0;
  RunPaths p0 = run_paths(dir / "lambda0");
  RunPaths p1 = run_paths(dir / "lambda");
  p0.train_data = p1.train_data = dir / "train.data";
  p0.test_data = p1.test_data = dir / "test.data";
  const eval::EvalReport r0 = run_experiment(base, p0);
  const eval::EvalReport r1 = run_experiment(cfg, p1);
  Json out = artifact("comparison", cfg, compare_reports(r0, r1));
  write_atomic(dir / "comparison.json", out.dump(2) + "\n");
  return out;
}

}  // namespace invclr::io
