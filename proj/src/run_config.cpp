#include "ravit/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ravit {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("field " + field + ": " + what);
}

class Section {
 public:
  Section(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
    for (const auto& [key, _] : j_.items()) {
      if (!allowed.count(key)) fail(field(key), "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key) const { return j_.at(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  std::size_t size(const std::string& key, std::size_t fallback) const {
    return has(key) ? to_size(at(key), field(key)) : fallback;
  }
  double number(const std::string& key, double fallback) const {
    return has(key) ? to_number(at(key), field(key)) : fallback;
  }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_boolean()) fail(field(key), "expected true or false");
    return at(key).get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_string()) fail(field(key), "expected a string");
    return at(key).get<std::string>();
  }
  std::vector<std::size_t> sizes(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(field(key), "expected an array of non-negative integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(to_size(v[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<double> numbers(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(to_number(v[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  static std::size_t to_size(const json& v, const std::string& f) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
    fail(f, "expected a non-negative integer");
  }
  static double to_number(const json& v, const std::string& f) {
    if (!v.is_number()) fail(f, "expected a number");
    return v.get<double>();
  }

 private:
  const json& j_;
  std::string path_;
};

std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  // nlohmann reports the byte after the offending character.
  if (column > 1) --column;
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

RavitConfig parse_model(const json& j, std::vector<double>& sweep, const json* exit) {
  const Section s(j, "model",
                  {"branches", "layers", "image_side", "dims", "patch", "embed", "hidden", "heads", "classes",
                   "channels", "resize", "loss_weights"});
  if (!s.has("layers")) fail("model.layers", "required");
  RavitConfig c;
  c.layers = s.sizes("layers");
  const std::size_t b = c.layers.size();
  if (b == 0) fail("model.layers", "at least one branch is required");
  if (s.has("branches") && s.size("branches", 0) != b) fail("model.branches", "does not match len(layers)");
  const std::size_t side = s.size("image_side", 32);
  if (s.has("dims")) {
    c.dims = s.sizes("dims");
    if (c.dims.size() != b) fail("model.dims", "expected " + std::to_string(b) + " entries");
    if (s.has("image_side") && c.dims.back() != side) fail("model.dims", "last entry must equal image_side");
  } else {
    try {
      c.dims = default_dims(side, b);
    } catch (const std::exception& e) {
      fail("model.image_side", e.what());
    }
  }
  c.patch_size = s.size("patch", c.patch_size);
  c.embed_dim = s.size("embed", c.embed_dim);
  c.hidden_dim = s.size("hidden", c.hidden_dim);
  c.heads = s.size("heads", c.heads);
  c.num_classes = s.size("classes", c.num_classes);
  c.channels = s.size("channels", c.channels);
  try {
    c.resize = parse_resize_mode(s.string("resize", "box"));
  } catch (const std::exception& e) {
    fail("model.resize", e.what());
  }
  if (s.has("loss_weights")) {
    c.loss_weights = s.numbers("loss_weights");
    if (c.loss_weights.size() != b) fail("model.loss_weights", "expected " + std::to_string(b) + " entries");
  } else {
    c.loss_weights.assign(b, 1.0 / static_cast<double>(b));
  }

  c.thresholds.assign(b - 1, 0.0);
  sweep = default_sweep(c.num_classes);
  if (exit != nullptr) {
    const Section e(*exit, "exit", {"thresholds", "sweep"});
    if (e.has("thresholds")) {
      if (e.at("thresholds").is_number()) {
        c.thresholds.assign(b - 1, e.number("thresholds", 0.0));
      } else {
        c.thresholds = e.numbers("thresholds");
        if (c.thresholds.size() != b - 1) fail("exit.thresholds", "expected " + std::to_string(b - 1) + " entries");
      }
    }
    if (e.has("sweep")) {
      sweep = e.numbers("sweep");
      if (sweep.empty()) fail("exit.sweep", "must not be empty");
    }
  }
  try {
    c.validate();
  } catch (const std::exception& e) {
    fail("model", e.what());
  }
  return c;
}

TrainConfig parse_train(const json& j) {
  const Section s(j, "train",
                  {"epochs", "batch", "lr", "lr_min", "betas", "eps", "wd", "seed", "schedule", "augment",
                   "checkpoint_every"});
  TrainConfig t;
  t.epochs = s.size("epochs", t.epochs);
  t.batch_size = s.size("batch", t.batch_size);
  if (t.epochs == 0) fail("train.epochs", "must be >= 1");
  if (t.batch_size == 0) fail("train.batch", "must be >= 1");
  t.lr = s.number("lr", t.lr);
  t.lr_min = s.number("lr_min", t.lr_min);
  if (s.has("betas")) {
    const auto betas = s.numbers("betas");
    if (betas.size() != 2) fail("train.betas", "expected [beta1, beta2]");
    t.adamw.beta1 = betas[0];
    t.adamw.beta2 = betas[1];
  }
  t.adamw.eps = s.number("eps", t.adamw.eps);
  t.adamw.weight_decay = s.number("wd", t.adamw.weight_decay);
  if (s.has("seed")) {
    if (!s.at("seed").is_number_integer() || (s.at("seed").is_number_integer() && !s.at("seed").is_number_unsigned() &&
                                               s.at("seed").get<std::int64_t>() < 0)) {
      fail("train.seed", "expected a non-negative integer");
    }
    t.seed = s.at("seed").get<std::uint64_t>();
  }
  const std::string schedule = s.string("schedule", "cosine");
  if (schedule == "cosine") {
    t.schedule = Schedule::Cosine;
  } else if (schedule == "constant") {
    t.schedule = Schedule::Constant;
  } else {
    fail("train.schedule", "expected cosine or constant");
  }
  t.augment = s.boolean("augment", t.augment);
  t.checkpoint_every = s.size("checkpoint_every", t.checkpoint_every);
  return t;
}

DataConfig parse_data(const json& j) {
  const Section s(j, "data", {"source", "path", "limit_train", "limit_test", "synth"});
  DataConfig d;
  d.source = s.string("source", d.source);
  if (d.source != "synth" && d.source != "cifar10") fail("data.source", "expected synth or cifar10");
  d.path = s.string("path", d.path);
  if (d.source == "cifar10" && d.path.empty()) fail("data.path", "required for cifar10");
  d.limit_train = s.size("limit_train", d.limit_train);
  d.limit_test = s.size("limit_test", d.limit_test);
  if (s.has("synth")) {
    const Section y(s.at("synth"), "data.synth",
                    {"train_samples", "test_samples", "easy_fraction", "amplitude", "noise"});
    d.train_samples = y.size("train_samples", d.train_samples);
    d.test_samples = y.size("test_samples", d.test_samples);
    d.easy_fraction = y.number("easy_fraction", d.easy_fraction);
    if (d.easy_fraction < 0.0 || d.easy_fraction > 1.0) fail("data.synth.easy_fraction", "must lie in [0, 1]");
    d.amplitude = y.number("amplitude", d.amplitude);
    d.noise = y.number("noise", d.noise);
    if (d.noise < 0.0) fail("data.synth.noise", "must be >= 0");
  }
  return d;
}

}  // namespace

std::vector<double> default_sweep(std::size_t num_classes, std::size_t points) {
  std::vector<double> out;
  const double top = std::log(static_cast<double>(num_classes));
  for (std::size_t i = 0; i < points; ++i) {
    out.push_back(points == 1 ? 0.0 : top * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("syntax error at " + position(text, e.byte) + ": " + e.what());
  }
  const Section root(doc, "", {"model", "train", "exit", "data"});
  if (!root.has("model")) fail("model", "required");
  RunConfig c;
  c.model = parse_model(root.at("model"), c.sweep, root.has("exit") ? &root.at("exit") : nullptr);
  if (root.has("train")) c.train = parse_train(root.at("train"));
  if (root.has("data")) c.data = parse_data(root.at("data"));
  if (c.data.source == "cifar10" && (c.model.image_side() != kCifarSide || c.model.channels != kCifarChannels)) {
    fail("data.source", "cifar10 requires image_side 32 and 3 channels");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

json to_json(const RunConfig& c) {
  const RavitConfig& m = c.model;
  const TrainConfig& t = c.train;
  const DataConfig& d = c.data;
  return json{
      {"model",
       {{"branches", m.branches()},
        {"layers", m.layers},
        {"image_side", m.image_side()},
        {"dims", m.dims},
        {"patch", m.patch_size},
        {"embed", m.embed_dim},
        {"hidden", m.hidden_dim},
        {"heads", m.heads},
        {"classes", m.num_classes},
        {"channels", m.channels},
        {"resize", to_string(m.resize)},
        {"loss_weights", m.loss_weights}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch", t.batch_size},
        {"lr", t.lr},
        {"lr_min", t.lr_min},
        {"betas", {t.adamw.beta1, t.adamw.beta2}},
        {"eps", t.adamw.eps},
        {"wd", t.adamw.weight_decay},
        {"seed", t.seed},
        {"schedule", t.schedule == Schedule::Cosine ? "cosine" : "constant"},
        {"augment", t.augment},
        {"checkpoint_every", t.checkpoint_every}}},
      {"exit", {{"thresholds", m.thresholds}, {"sweep", c.sweep}}},
      {"data",
       {{"source", d.source},
        {"path", d.path},
        {"limit_train", d.limit_train},
        {"limit_test", d.limit_test},
        {"synth",
         {{"train_samples", d.train_samples},
          {"test_samples", d.test_samples},
          {"easy_fraction", d.easy_fraction},
          {"amplitude", d.amplitude},
          {"noise", d.noise}}}}},
  };
}

SynthOptions synth_options(const RunConfig& c, bool train_split) {
  SynthOptions o;
  o.num_classes = c.model.num_classes;
  o.samples = train_split ? c.data.train_samples : c.data.test_samples;
  o.side = c.model.image_side();
  o.channels = c.model.channels;
  o.easy_fraction = c.data.easy_fraction;
  o.amplitude = c.data.amplitude;
  o.noise = c.data.noise;
  o.seed = derive_seed(c.train.seed, train_split ? seed_stream::kSynthTrain : seed_stream::kSynthTest);
  return o;
}

Dataset load_split(const RunConfig& c, bool train_split) {
  if (c.data.source == "synth") return synth_dataset(synth_options(c, train_split));
  return load_cifar10_split(c.data.path, train_split, train_split ? c.data.limit_train : c.data.limit_test);
}

}  // namespace ravit
