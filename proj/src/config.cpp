#include "lgcp/config.hpp"

#include <fstream>
#include <sstream>

#include "lgcp/error.hpp"

#define TOML_EXCEPTIONS 1
#include "tomlplusplus/toml.hpp"

namespace lgcp {

namespace {

constexpr std::pair<ModelTag, const char*> kTags[] = {
    {ModelTag::Univariate, "univariate"},     {ModelTag::SharedOnly, "shared-only"},
    {ModelTag::SharedSpecific, "shared+specific"}, {ModelTag::LinearDist, "+linear-dist"},
    {ModelTag::Spde1dDist, "+spde1d-dist"},   {ModelTag::Rw2Dist, "+rw2-dist"},
};

// Keys a section may hold; anything else is a typo worth reporting.
void check_keys(const toml::table& t, const std::string& section, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : t) {
    if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
      throw ConfigError("unknown key '" + (section.empty() ? "" : section + ".") + std::string(k.str()) + "'");
  }
}

const toml::table* section(const toml::table& root, const std::string& name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError("'" + name + "' must be a section");
  return node->as_table();
}

double get_number(const toml::table& t, const std::string& key, const std::string& where, double fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<double>()) return *v;
  throw ConfigError("'" + where + "." + key + "' must be a number");
}

std::int64_t get_int(const toml::table& t, const std::string& key, const std::string& where, std::int64_t fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (n->is_integer()) return n->as_integer()->get();
  throw ConfigError("'" + where + "." + key + "' must be an integer");
}

std::string get_string(const toml::table& t, const std::string& key, const std::string& where,
                       const std::string& fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<std::string>()) return *v;
  throw ConfigError("'" + where + "." + key + "' must be a string");
}

template <class T>
std::array<T, 2> get_pair(const toml::table& t, const std::string& key, const std::string& where,
                          std::array<T, 2> fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  const auto* arr = n->as_array();
  if (!arr || arr->size() != 2) throw ConfigError("'" + where + "." + key + "' must be a two-element array");
  std::array<T, 2> out{};
  for (int i = 0; i < 2; ++i) {
    if constexpr (std::is_integral_v<T>) {
      if (!(*arr)[i].is_integer()) throw ConfigError("'" + where + "." + key + "' must hold integers");
      out[i] = static_cast<T>((*arr)[i].as_integer()->get());
    } else {
      auto v = (*arr)[i].value<double>();
      if (!v) throw ConfigError("'" + where + "." + key + "' must hold numbers");
      out[i] = *v;
    }
  }
  return out;
}

PriorPair get_prior(const toml::table& t, const std::string& key, const std::string& where, PriorPair fallback) {
  const auto p = get_pair<double>(t, key, where, {fallback.value, fallback.prob});
  return {p[0], p[1]};
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

std::string quote(const std::string& s) {
  std::ostringstream os;
  os << toml::value<std::string>(s);
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << toml::value<double>(v);
  return os.str();
}

void check_prior(const PriorPair& p, const std::string& name) {
  if (!(p.value > 0) || !std::isfinite(p.value)) throw ConfigError("'" + name + "' threshold must be positive");
  if (!(p.prob > 0 && p.prob < 1)) throw ConfigError("'" + name + "' probability must lie in (0, 1)");
}

}  // namespace

std::string to_string(ModelTag t) {
  for (const auto& [tag, name] : kTags)
    if (tag == t) return name;
  return "?";
}

ModelTag model_tag_from_string(const std::string& s) {
  for (const auto& [tag, name] : kTags)
    if (s == name) return tag;
  throw ConfigError("'model.type' must be one of univariate, shared-only, shared+specific, +linear-dist, "
                    "+spde1d-dist, +rw2-dist (got '" + s + "')");
}

bool needs_source(ModelTag t) {
  return t == ModelTag::LinearDist || t == ModelTag::Spde1dDist || t == ModelTag::Rw2Dist;
}

void RunConfig::validate() const {
  for (const auto& [p, key] : {std::pair{&cases, "data.cases"}, std::pair{&controls, "data.controls"},
                               std::pair{&boundary, "data.boundary"}}) {
    if (p->empty()) throw ConfigError("'" + std::string(key) + "' is required");
    if (!std::filesystem::is_regular_file(*p)) throw ConfigError("'" + std::string(key) + "': no such file " + p->string());
  }
  mesh.validate();
  if (needs_source(model) && !source) throw ConfigError("'data.source' is required for model " + to_string(model));
  if (univariate_pattern != "cases" && univariate_pattern != "controls")
    throw ConfigError("'model.pattern' must be 'cases' or 'controls'");
  if (mesh1d.n_knots < 3) throw ConfigError("'mesh1d.n_knots' must be at least 3");
  if (mesh1d.degree != 1 && mesh1d.degree != 2) throw ConfigError("'mesh1d.degree' must be 1 or 2");
  if (!(mesh1d.upper >= 0)) throw ConfigError("'mesh1d.upper' must be non-negative");
  check_prior(field_prior.range, "prior.field.range");
  check_prior(field_prior.sigma, "prior.field.sigma");
  check_prior(smooth_prior.range, "prior.smooth.range");
  check_prior(smooth_prior.sigma, "prior.smooth.sigma");
  check_prior(rw2_sigma, "prior.rw2.sigma");
  if (!(rw2_range > 0)) throw ConfigError("'prior.rw2.range' must be positive");
  if (!(linear_precision > 0)) throw ConfigError("'prior.linear.precision' must be positive");
  if (seed > static_cast<std::uint64_t>(INT64_MAX)) throw ConfigError("'inference.seed' must fit in a signed 64-bit integer");
  if (n_samples < 2) throw ConfigError("'inference.n_samples' must be at least 2");
  if (threads < 1) throw ConfigError("'inference.threads' must be at least 1");
  if (grid_cells < 2 || grid_cells > 4096) throw ConfigError("'output.grid_cells' must lie in [2, 4096]");
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  check_keys(root, "", {"data", "mesh", "mesh1d", "model", "prior", "inference", "output"});
  RunConfig cfg;
  const toml::table empty;

  const toml::table& data = section(root, "data") ? *section(root, "data") : empty;
  check_keys(data, "data", {"cases", "controls", "boundary", "source"});
  for (auto [key, dst] : {std::pair{"cases", &cfg.cases}, std::pair{"controls", &cfg.controls},
                          std::pair{"boundary", &cfg.boundary}}) {
    const std::string s = get_string(data, key, "data", "");
    if (!s.empty()) *dst = resolve(s, base_dir);
  }
  if (data.contains("source")) {
    const auto s = get_pair<double>(data, "source", "data", {0, 0});
    cfg.source = Point2{s[0], s[1]};
  }

  const toml::table& mesh = section(root, "mesh") ? *section(root, "mesh") : empty;
  check_keys(mesh, "mesh", {"cutoff", "max_edge", "min_angle", "offset", "n_initial"});
  cfg.mesh.cutoff = get_number(mesh, "cutoff", "mesh", cfg.mesh.cutoff);
  cfg.mesh.max_edge = get_pair<double>(mesh, "max_edge", "mesh", cfg.mesh.max_edge);
  cfg.mesh.min_angle = get_number(mesh, "min_angle", "mesh", cfg.mesh.min_angle);
  cfg.mesh.offset = get_pair<double>(mesh, "offset", "mesh", cfg.mesh.offset);
  cfg.mesh.n_initial = get_pair<int>(mesh, "n_initial", "mesh", cfg.mesh.n_initial);

  const toml::table& m1 = section(root, "mesh1d") ? *section(root, "mesh1d") : empty;
  check_keys(m1, "mesh1d", {"n_knots", "degree", "upper"});
  cfg.mesh1d.n_knots = static_cast<int>(get_int(m1, "n_knots", "mesh1d", cfg.mesh1d.n_knots));
  cfg.mesh1d.degree = static_cast<int>(get_int(m1, "degree", "mesh1d", cfg.mesh1d.degree));
  cfg.mesh1d.upper = get_number(m1, "upper", "mesh1d", cfg.mesh1d.upper);

  const toml::table& model = section(root, "model") ? *section(root, "model") : empty;
  check_keys(model, "model", {"type", "pattern"});
  cfg.model = model_tag_from_string(get_string(model, "type", "model", to_string(cfg.model)));
  cfg.univariate_pattern = get_string(model, "pattern", "model", cfg.univariate_pattern);

  if (const toml::table* prior = section(root, "prior")) {
    check_keys(*prior, "prior", {"field", "smooth", "rw2", "linear"});
    if (const toml::table* f = section(*prior, "field")) {
      check_keys(*f, "prior.field", {"range", "sigma"});
      cfg.field_prior.range = get_prior(*f, "range", "prior.field", cfg.field_prior.range);
      cfg.field_prior.sigma = get_prior(*f, "sigma", "prior.field", cfg.field_prior.sigma);
    }
    if (const toml::table* f = section(*prior, "smooth")) {
      check_keys(*f, "prior.smooth", {"range", "sigma"});
      cfg.smooth_prior.range = get_prior(*f, "range", "prior.smooth", cfg.smooth_prior.range);
      cfg.smooth_prior.sigma = get_prior(*f, "sigma", "prior.smooth", cfg.smooth_prior.sigma);
    }
    if (const toml::table* f = section(*prior, "rw2")) {
      check_keys(*f, "prior.rw2", {"range", "sigma"});
      cfg.rw2_range = get_number(*f, "range", "prior.rw2", cfg.rw2_range);
      cfg.rw2_sigma = get_prior(*f, "sigma", "prior.rw2", cfg.rw2_sigma);
    }
    if (const toml::table* f = section(*prior, "linear")) {
      check_keys(*f, "prior.linear", {"precision"});
      cfg.linear_precision = get_number(*f, "precision", "prior.linear", cfg.linear_precision);
    }
  }

  const toml::table& inf = section(root, "inference") ? *section(root, "inference") : empty;
  check_keys(inf, "inference", {"strategy", "seed", "n_samples", "threads"});
  const std::string strategy = get_string(inf, "strategy", "inference", "empirical_bayes");
  if (strategy == "empirical_bayes") cfg.strategy = Strategy::EmpiricalBayes;
  else if (strategy == "grid") cfg.strategy = Strategy::Grid;
  else throw ConfigError("'inference.strategy' must be 'empirical_bayes' or 'grid'");
  const std::int64_t seed = get_int(inf, "seed", "inference", 1);
  if (seed < 0) throw ConfigError("'inference.seed' must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.n_samples = static_cast<int>(get_int(inf, "n_samples", "inference", cfg.n_samples));
  cfg.threads = static_cast<int>(get_int(inf, "threads", "inference", cfg.threads));

  const toml::table& out = section(root, "output") ? *section(root, "output") : empty;
  check_keys(out, "output", {"dir", "grid_cells"});
  cfg.output_dir = resolve(get_string(out, "dir", "output", cfg.output_dir.string()), base_dir);
  cfg.grid_cells = static_cast<int>(get_int(out, "grid_cells", "output", cfg.grid_cells));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

ScenarioConfig parse_scenario(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "scenario line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  check_keys(root, "", {"mode", "intercept", "seed", "field", "cluster"});
  ScenarioConfig sc;
  const std::string mode = get_string(root, "mode", "scenario", "inject");
  if (mode == "inject") sc.mode = ScenarioConfig::Mode::Inject;
  else if (mode == "lgcp") sc.mode = ScenarioConfig::Mode::Lgcp;
  else throw ConfigError("'scenario.mode' must be 'inject' or 'lgcp'");
  sc.intercept = get_number(root, "intercept", "scenario", 0.0);
  if (root.contains("seed")) {
    const auto seed = get_int(root, "seed", "scenario", 0);
    if (seed < 0) throw ConfigError("'scenario.seed' must be non-negative");
    sc.seed = static_cast<std::uint64_t>(seed);
  }
  if (const toml::table* f = section(root, "field")) {
    check_keys(*f, "field", {"range", "sigma"});
    FieldSpec fs;
    fs.range = get_number(*f, "range", "field", fs.range);
    fs.sigma = get_number(*f, "sigma", "field", fs.sigma);
    if (!(fs.range > 0)) throw ConfigError("'field.range' must be positive");
    if (!(fs.sigma > 0)) throw ConfigError("'field.sigma' must be positive");
    sc.field = fs;
  }
  if (const toml::table* c = section(root, "cluster")) {
    check_keys(*c, "cluster", {"source", "n", "sd"});
    if (c->contains("source")) {
      const auto s = get_pair<double>(*c, "source", "cluster", {0, 0});
      sc.cluster_source = Point2{s[0], s[1]};
    }
    sc.cluster_n = static_cast<int>(get_int(*c, "n", "cluster", 0));
    sc.cluster_sd = get_number(*c, "sd", "cluster", sc.cluster_sd);
    if (sc.cluster_n < 0) throw ConfigError("'cluster.n' must be non-negative");
    if (!(sc.cluster_sd > 0)) throw ConfigError("'cluster.sd' must be positive");
  }
  return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string echo_config(const RunConfig& c) {
  std::ostringstream os;
  auto pair = [](double a, double b) { return "[" + num(a) + ", " + num(b) + "]"; };
  os << "[data]\n"
     << "cases = " << quote(c.cases.string()) << "\n"
     << "controls = " << quote(c.controls.string()) << "\n"
     << "boundary = " << quote(c.boundary.string()) << "\n";
  if (c.source) os << "source = " << pair(c.source->x, c.source->y) << "\n";
  os << "\n[mesh]\n"
     << "cutoff = " << num(c.mesh.cutoff) << "\n"
     << "max_edge = " << pair(c.mesh.max_edge[0], c.mesh.max_edge[1]) << "\n"
     << "min_angle = " << num(c.mesh.min_angle) << "\n"
     << "offset = " << pair(c.mesh.offset[0], c.mesh.offset[1]) << "\n"
     << "n_initial = [" << c.mesh.n_initial[0] << ", " << c.mesh.n_initial[1] << "]\n"
     << "\n[mesh1d]\n"
     << "n_knots = " << c.mesh1d.n_knots << "\n"
     << "degree = " << c.mesh1d.degree << "\n"
     << "upper = " << num(c.mesh1d.upper) << "\n"
     << "\n[model]\n"
     << "type = " << quote(to_string(c.model)) << "\n"
     << "pattern = " << quote(c.univariate_pattern) << "\n"
     << "\n[prior.field]\n"
     << "range = " << pair(c.field_prior.range.value, c.field_prior.range.prob) << "\n"
     << "sigma = " << pair(c.field_prior.sigma.value, c.field_prior.sigma.prob) << "\n"
     << "\n[prior.smooth]\n"
     << "range = " << pair(c.smooth_prior.range.value, c.smooth_prior.range.prob) << "\n"
     << "sigma = " << pair(c.smooth_prior.sigma.value, c.smooth_prior.sigma.prob) << "\n"
     << "\n[prior.rw2]\n"
     << "range = " << num(c.rw2_range) << "\n"
     << "sigma = " << pair(c.rw2_sigma.value, c.rw2_sigma.prob) << "\n"
     << "\n[prior.linear]\n"
     << "precision = " << num(c.linear_precision) << "\n"
     << "\n[inference]\n"
     << "strategy = " << quote(c.strategy == Strategy::Grid ? "grid" : "empirical_bayes") << "\n"
     << "seed = " << static_cast<std::int64_t>(c.seed) << "\n"
     << "n_samples = " << c.n_samples << "\n"
     << "threads = " << c.threads << "\n"
     << "\n[output]\n"
     << "dir = " << quote(c.output_dir.string()) << "\n"
     << "grid_cells = " << c.grid_cells << "\n";
  return os.str();
}

}  // namespace lgcp
