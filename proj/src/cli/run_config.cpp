#include "erfseg/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "erfseg/error.hpp"

namespace erfseg::cli {

std::string_view precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

namespace {

const std::set<std::string, std::less<>> kModelKeys{"variant",  "base_channels", "stages",    "convs_per_block",
                                                    "dilation", "depthwise",     "expansion", "ratio",
                                                    "in_channels"};
const std::set<std::string, std::less<>> kTrainKeys{"preset", "epochs", "batch", "lr",   "weight_decay",
                                                    "beta1",  "beta2",  "eps",   "seed", "hflip"};
const std::set<std::string, std::less<>> kDataKeys{"kind",    "path",    "height",    "width",     "channels",
                                                   "n_train", "n_val",   "n_test",    "fg_budget", "min_blobs",
                                                   "max_blobs", "contrast", "noise_sigma", "seed"};

/// Typed view of one [section] that remembers which keys were read.
class Section {
 public:
  Section(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  bool has(std::string_view key) const { return t_ && t_->contains(key); }

  template <typename T>
  std::optional<T> get(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    const toml::node& n = *t_->get(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n.value_exact<bool>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n.value_exact<std::string>()) return *v;
    } else if constexpr (std::is_floating_point_v<T>) {
      if (n.is_number()) return n.value<T>();
    } else {
      if (auto v = n.value_exact<std::int64_t>()) {
        if (*v < 0) throw ConfigError(where(key) + " must be non-negative");
        return static_cast<T>(*v);
      }
    }
    throw ConfigError(where(key) + " has the wrong type");
  }

  template <typename T>
  void read(std::string_view key, T& out) const {
    if (auto v = get<T>(key)) out = *v;
  }

  void check_keys(const std::set<std::string, std::less<>>& allowed) const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      if (!allowed.count(k.str())) throw ConfigError("unknown key " + where(k.str()));
    }
  }

 private:
  std::string where(std::string_view key) const { return "'" + name_ + "." + std::string(key) + "'"; }
  const toml::table* t_;
  std::string name_;
};

toml::table parse_table(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(os.str());
  }
}

void apply_override(toml::table& root, const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
    throw ConfigError("override '" + key + "' must be section.key");
  }
  const std::string section = key.substr(0, dot), leaf = key.substr(dot + 1);
  if (!root.contains(section)) root.insert(section, toml::table{});
  toml::table* sec = root.get_as<toml::table>(section);
  if (!sec) throw ConfigError("override '" + key + "': '" + section + "' is not a table");
  // Prefer the TOML reading of the value (numbers, booleans, quoted strings);
  // anything else is taken verbatim as a string.
  try {
    toml::table tmp = toml::parse("v = " + value);
    sec->insert_or_assign(leaf, *tmp.get("v"));
  } catch (const toml::parse_error&) {
    sec->insert_or_assign(leaf, value);
  }
}

NetworkSpec parse_model(const Section& m, std::size_t data_channels) {
  m.check_keys(kModelKeys);
  const Variant v = parse_variant(m.get<std::string>("variant").value_or("unet"));
  NetworkSpec s = NetworkSpec::make(v, m.get<std::size_t>("in_channels").value_or(data_channels));
  m.read("base_channels", s.base_channels);
  m.read("stages", s.stages);
  m.read("convs_per_block", s.convs_per_block);
  if (auto d = m.get<std::size_t>("dilation")) {
    if (s.fpa) {
      s.fpa->dilation = *d;
    } else if (v == Variant::D6Unet || v == Variant::D9Unet) {
      if (*d != s.encoder_dilation()) {
        throw ConfigError("model.dilation = " + std::to_string(*d) + " contradicts variant " +
                          std::string(variant_name(v)));
      }
    } else {
      throw ConfigError("model.dilation applies to fpa, d6unet and d9unet only");
    }
  }
  for (const char* key : {"depthwise", "expansion"}) {
    if (m.has(key) && !s.fpa && !s.rfna) throw ConfigError(std::string("model.") + key + " applies to fpa and rfna only");
  }
  if (s.fpa) {
    m.read("depthwise", s.fpa->depthwise);
    m.read("expansion", s.fpa->expansion);
  }
  if (s.rfna) {
    m.read("depthwise", s.rfna->depthwise);
    m.read("expansion", s.rfna->expansion);
    m.read("ratio", s.rfna->ratio);
  } else if (m.has("ratio")) {
    throw ConfigError("model.ratio applies to rfna only");
  }
  s.validate();
  return s;
}

TrainConfig parse_train(const Section& t) {
  t.check_keys(kTrainKeys);
  TrainConfig c = TrainConfig::preset(t.get<std::string>("preset").value_or("desk"));
  t.read("epochs", c.epochs);
  t.read("batch", c.batch_size);
  t.read("lr", c.learning_rate);
  t.read("weight_decay", c.weight_decay);
  t.read("beta1", c.beta1);
  t.read("beta2", c.beta2);
  t.read("eps", c.eps);
  t.read("seed", c.seed);
  t.read("hflip", c.augment_hflip_prob);
  c.validate();
  return c;
}

DataConfig parse_data(const Section& d) {
  d.check_keys(kDataKeys);
  DataConfig c;
  const std::string kind = d.get<std::string>("kind").value_or("synthetic");
  if (kind == "synthetic") {
    c.kind = DataKind::Synthetic;
  } else if (kind == "tsr_dir") {
    c.kind = DataKind::TsrDir;
  } else {
    throw ConfigError("data.kind must be 'synthetic' or 'tsr_dir', got '" + kind + "'");
  }
  if (auto p = d.get<std::string>("path")) c.path = *p;
  auto& s = c.synthetic;
  d.read("height", s.height);
  d.read("width", s.width);
  d.read("channels", s.channels);
  d.read("n_train", s.n_train);
  d.read("n_val", s.n_val);
  d.read("n_test", s.n_test);
  d.read("fg_budget", s.fg_budget);
  d.read("min_blobs", s.min_blobs);
  d.read("max_blobs", s.max_blobs);
  d.read("contrast", s.contrast);
  d.read("noise_sigma", s.noise_sigma);
  d.read("seed", s.seed);
  s.validate();
  return c;
}

}  // namespace

RunConfig parse_run_config(std::string_view toml_text, const Overrides& overrides) {
  toml::table root = parse_table(toml_text);
  for (const auto& [k, v] : overrides) apply_override(root, k, v);
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (key == "precision") continue;
    if (key != "model" && key != "train" && key != "data") throw ConfigError("unknown config section '" + key + "'");
    if (!v.is_table()) throw ConfigError("config entry '" + key + "' must be a table");
  }
  RunConfig cfg;
  cfg.data = parse_data(Section(root.get_as<toml::table>("data"), "data"));
  cfg.model = parse_model(Section(root.get_as<toml::table>("model"), "model"), cfg.data.synthetic.channels);
  cfg.train = parse_train(Section(root.get_as<toml::table>("train"), "train"));
  if (const auto* p = root.get("precision")) {
    const auto s = p->value_exact<std::string>();
    if (!s) throw ConfigError("'precision' must be a string");
    cfg.precision = parse_precision(*s);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string RunConfig::to_toml() const {
  toml::table m;
  m.insert("variant", std::string(variant_name(model.variant)));
  m.insert("in_channels", static_cast<std::int64_t>(model.in_channels));
  m.insert("base_channels", static_cast<std::int64_t>(model.base_channels));
  m.insert("stages", static_cast<std::int64_t>(model.stages));
  m.insert("convs_per_block", static_cast<std::int64_t>(model.convs_per_block));
  if (model.fpa) {
    m.insert("dilation", static_cast<std::int64_t>(model.fpa->dilation));
    m.insert("depthwise", model.fpa->depthwise);
    m.insert("expansion", static_cast<std::int64_t>(model.fpa->expansion));
  }
  if (model.rfna) {
    m.insert("ratio", static_cast<std::int64_t>(model.rfna->ratio));
    m.insert("depthwise", model.rfna->depthwise);
    m.insert("expansion", static_cast<std::int64_t>(model.rfna->expansion));
  }

  toml::table t;
  t.insert("epochs", static_cast<std::int64_t>(train.epochs));
  t.insert("batch", static_cast<std::int64_t>(train.batch_size));
  t.insert("lr", train.learning_rate);
  t.insert("weight_decay", train.weight_decay);
  t.insert("beta1", train.beta1);
  t.insert("beta2", train.beta2);
  t.insert("eps", train.eps);
  t.insert("seed", static_cast<std::int64_t>(train.seed));
  t.insert("hflip", train.augment_hflip_prob);

  toml::table d;
  const auto& s = data.synthetic;
  d.insert("kind", data.kind == DataKind::Synthetic ? "synthetic" : "tsr_dir");
  if (!data.path.empty()) d.insert("path", data.path.string());
  d.insert("height", static_cast<std::int64_t>(s.height));
  d.insert("width", static_cast<std::int64_t>(s.width));
  d.insert("channels", static_cast<std::int64_t>(s.channels));
  d.insert("n_train", static_cast<std::int64_t>(s.n_train));
  d.insert("n_val", static_cast<std::int64_t>(s.n_val));
  d.insert("n_test", static_cast<std::int64_t>(s.n_test));
  d.insert("fg_budget", s.fg_budget);
  d.insert("min_blobs", static_cast<std::int64_t>(s.min_blobs));
  d.insert("max_blobs", static_cast<std::int64_t>(s.max_blobs));
  d.insert("contrast", s.contrast);
  d.insert("noise_sigma", s.noise_sigma);
  d.insert("seed", static_cast<std::int64_t>(s.seed));

  toml::table root;
  root.insert("precision", std::string(precision_name(precision)));
  root.insert("model", std::move(m));
  root.insert("train", std::move(t));
  root.insert("data", std::move(d));
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

}  // namespace erfseg::cli
