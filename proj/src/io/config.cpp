#include "ttfs/io/config.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <set>

#include "ttfs/error.hpp"
#include "ttfs/io/files.hpp"

namespace ttfs::io {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and rejects the keys it never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <typename F>
  void field(const char* key, F&& read) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) read(*it, name(key));
  }

  void number(const char* key, double& out) {
    field(key, [&](const json& v, const std::string& n) {
      if (!v.is_number()) throw ConfigError(n + " must be a number");
      out = v.get<double>();
    });
  }

  template <typename U>
  void unsigned_int(const char* key, U& out) {
    field(key, [&](const json& v, const std::string& n) {
      if (!v.is_number_unsigned())
        throw ConfigError(n + " must be a non-negative integer");
      const auto x = v.get<std::uint64_t>();
      if (x > std::numeric_limits<U>::max()) throw ConfigError(n + " is too large");
      out = static_cast<U>(x);
    });
  }

  void boolean(const char* key, bool& out) {
    field(key, [&](const json& v, const std::string& n) {
      if (!v.is_boolean()) throw ConfigError(n + " must be true or false");
      out = v.get<bool>();
    });
  }

  void string(const char* key, std::string& out) {
    field(key, [&](const json& v, const std::string& n) {
      if (!v.is_string()) throw ConfigError(n + " must be a string");
      out = v.get<std::string>();
    });
  }

  template <typename F>
  void object(const char* key, F&& read) {
    field(key, [&](const json& v, const std::string& n) {
      ObjectReader sub(v, n);
      read(sub);
      sub.finish();
    });
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + name(it.key().c_str()) + "'");
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

LayerSpec parse_layer(const json& v, const std::string& n, bool default_bn) {
  LayerSpec s;
  s.batch_norm = default_bn;
  if (v.is_number_unsigned()) {
    s.units = v.get<std::size_t>();
    return s;
  }
  ObjectReader r(v, n);
  std::string kind = "dense";
  r.string("kind", kind);
  try {
    s.kind = nn::layer_kind_from_string(kind);
  } catch (const Error&) {
    throw ConfigError(n + ".kind must be 'dense', 'conv2d' or 'maxpool', got '" + kind + "'");
  }
  r.unsigned_int("units", s.units);
  r.boolean("batch_norm", s.batch_norm);
  r.finish();
  if (s.kind == nn::LayerKind::MaxPool) s.batch_norm = false;
  return s;
}

template <typename E, typename F>
void enum_field(ObjectReader& r, const char* key, E& out, F&& from_string) {
  r.field(key, [&](const json& v, const std::string& n) {
    if (!v.is_string()) throw ConfigError(n + " must be a string");
    const std::string s = v.get<std::string>();
    try {
      out = from_string(s);
    } catch (const ConfigError& e) {
      throw ConfigError(n + ": " + e.what());
    }
  });
}

}  // namespace

void RunConfig::validate() const {
  if (data.empty()) throw ConfigError("data must not be empty");
  if (!(split.val >= 0.0) || !(split.test >= 0.0) || !(split.val + split.test < 1.0))
    throw ConfigError("split.val and split.test must be >= 0 and sum to less than 1");
  for (std::size_t i = 0; i < hidden.size(); ++i)
    if (hidden[i].kind != nn::LayerKind::MaxPool && hidden[i].units == 0)
      throw ConfigError("model.hidden[" + std::to_string(i) + "] must have units > 0");
  try {
    train.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    // Kernel fields live under "kernel", the rest under "train".
    const bool kernel = msg.rfind("T ", 0) == 0 || msg.rfind("tau0", 0) == 0 || msg.rfind("theta0", 0) == 0;
    throw ConfigError((kernel ? "kernel." : "train.") + msg);
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  if (std::all_of(text.begin(), text.end(), [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); }))
    return c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("config line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) +
                     ": " + e.what());
  }
  ObjectReader r(j, "");
  r.unsigned_int("seed", c.seed);
  r.string("data", c.data);
  r.string("out", c.out);
  r.object("split", [&](ObjectReader& s) {
    s.number("val", c.split.val);
    s.number("test", c.split.test);
  });
  r.object("model", [&](ObjectReader& m) {
    bool bn = true;
    m.boolean("batch_norm", bn);
    bool explicit_hidden = false;
    m.field("hidden", [&](const json& v, const std::string& n) {
      if (!v.is_array()) throw ConfigError(n + " must be an array");
      explicit_hidden = true;
      c.hidden.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        c.hidden.push_back(parse_layer(v[i], n + "[" + std::to_string(i) + "]", bn));
    });
    if (!explicit_hidden)
      for (auto& l : c.hidden) l.batch_norm = bn;
  });
  r.object("kernel", [&](ObjectReader& k) {
    k.unsigned_int("T", c.train.kernel.window);
    k.number("tau0", c.train.kernel.tau0);
    k.number("t_d0", c.train.kernel.t_d0);
    k.number("theta0", c.train.kernel.theta0);
  });
  r.object("train", [&](ObjectReader& t) {
    t.unsigned_int("epochs", c.train.epochs);
    t.unsigned_int("batch_size", c.train.batch_size);
    t.number("lr", c.train.lr);
    t.number("lambda_tr", c.train.lambda_tr);
    t.number("lambda_tb", c.train.lambda_tb);
    t.unsigned_int("e_tar", c.train.e_tar);
    t.boolean("relaxation", c.train.relaxation);
    enum_field(t, "relax_draw", c.train.relax_draw, relax_draw_from_string);
    enum_field(t, "grad_mode", c.train.grad_mode, grad_mode_from_string);
    enum_field(t, "ste", c.train.ste, ste_mode_from_string);
  });
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json to_json(const RunConfig& c) {
  json hidden = json::array();
  for (const auto& l : c.hidden)
    hidden.push_back({{"kind", nn::to_string(l.kind)}, {"units", l.units}, {"batch_norm", l.batch_norm}});
  const TrainConfig& t = c.train;
  return {
      {"seed", c.seed},
      {"data", c.data},
      {"out", c.out},
      {"split", {{"val", c.split.val}, {"test", c.split.test}}},
      {"model", {{"hidden", hidden}}},
      {"kernel",
       {{"T", t.kernel.window}, {"tau0", t.kernel.tau0}, {"t_d0", t.kernel.t_d0}, {"theta0", t.kernel.theta0}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"lambda_tr", t.lambda_tr},
        {"lambda_tb", t.lambda_tb},
        {"e_tar", t.e_tar},
        {"relaxation", t.relaxation},
        {"relax_draw", to_string(t.relax_draw)},
        {"grad_mode", to_string(t.grad_mode)},
        {"ste", to_string(t.ste)}}},
  };
}

}  // namespace ttfs::io
