#include "vsdm/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vsdm/errors.hpp"
#include "vsdm/hash.hpp"

namespace vsdm {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"name", "seed", "out", "checkpoint_every"}},
      {"data", {"kind", "stretch", "noise", "mean", "covariance"}},
      {"schedule", {"beta_min", "beta_max", "horizon", "alpha", "steps"}},
      {"drift",
       {"method", "mode", "parametrization", "lambda_min", "zeta", "sa_amplitude", "sa_offset",
        "sa_exponent", "averaging", "averaging_rate", "update_every", "stages",
        "a_iters_per_stage", "sa_batch"}},
      {"model", {"time_features", "hidden", "layers"}},
      {"train",
       {"batch_size", "rounds", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
        "ema_rate"}},
      {"sample", {"mode", "nfe", "count", "trajectories"}},
      {"eval", {"data_count", "permutations"}},
      {"kernel_check", {"instances", "corrupt_symmetrization"}},
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Line of `key` inside `[section]`, for error messages; 0 when not found.
int line_of(std::string_view text, const std::string& section, const std::string& key) {
  std::istringstream in{std::string(text)};
  std::string line, current;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      current = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (current == section && eq != std::string::npos && trim(t.substr(0, eq)) == key) return number;
  }
  return 0;
}

// Line of the `[section]` header; 0 when not found.
int section_line(std::string_view text, const std::string& section) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.size() >= 2 && t.front() == '[' && t.back() == ']' &&
        trim(std::string_view(t).substr(1, t.size() - 2)) == section)
      return number;
  }
  return 0;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string_view text) : tree_(tree), text_(text) {}

  template <class F>
  void with(const std::string& section, const std::string& key, F&& f) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto value = sec->get_optional<std::string>(key);
    if (!value) return;
    try {
      f(trim(*value));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(section + "." + key + ": " + e.what(), line_of(text_, section, key));
    }
  }

  void read(const std::string& sec, const std::string& key, double& out) const {
    with(sec, key, [&](const std::string& v) { out = to_double(v); });
  }
  void read(const std::string& sec, const std::string& key, int& out) const {
    with(sec, key, [&](const std::string& v) { out = static_cast<int>(to_integer<long long>(v)); });
  }
  void read(const std::string& sec, const std::string& key, std::uint64_t& out) const {
    with(sec, key, [&](const std::string& v) { out = to_integer<std::uint64_t>(v); });
  }
  void read(const std::string& sec, const std::string& key, bool& out) const {
    with(sec, key, [&](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes") out = true;
      else if (v == "false" || v == "0" || v == "no") out = false;
      else throw std::invalid_argument("expected a boolean, got '" + v + "'");
    });
  }
  void read(const std::string& sec, const std::string& key, std::string& out) const {
    with(sec, key, [&](const std::string& v) { out = v; });
  }
  void read(const std::string& sec, const std::string& key, Eigen::VectorXd& out) const {
    with(sec, key, [&](const std::string& v) {
      std::vector<double> vals;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) vals.push_back(to_double(trim(item)));
      out = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    });
  }

  static double to_double(const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument("expected a number, got '" + v + "'");
    return out;
  }

  template <class T>
  static T to_integer(const std::string& v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument("expected an integer, got '" + v + "'");
    return out;
  }

 private:
  const pt::ptree& tree_;
  std::string_view text_;
};

std::string join(const Eigen::VectorXd& v) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << v(i);
  return out.str();
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), static_cast<int>(e.line()));
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty())
      throw ParseError("key '" + section + "' outside any section", line_of(text, "", section));
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ParseError("unknown section [" + section + "]", section_line(text, section));
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key))
        throw ParseError("unknown key '" + key + "' in [" + section + "]", line_of(text, section, key));
    }
  }

  RunConfig c;
  const Reader r(tree, text);
  r.read("run", "name", c.name);
  r.read("run", "seed", c.seed);
  r.read("run", "out", c.out);
  r.read("run", "checkpoint_every", c.checkpoint_every);

  r.with("data", "kind", [&](const std::string& v) { c.data.kind = parse_dataset_kind(v); });
  r.read("data", "noise", c.data.noise);
  r.read("data", "mean", c.data.mean);
  Eigen::VectorXd cov;
  r.read("data", "covariance", cov);
  if (c.data.kind == DatasetKind::gaussian) {
    const auto d = c.data.mean.size();
    if (cov.size() == 0) {
      c.data.covariance = Eigen::MatrixXd::Identity(d, d);
    } else if (cov.size() == d * d) {
      c.data.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                         Eigen::RowMajor>>(cov.data(), d, d);
    } else {
      throw ParseError("data.covariance must have mean.size()^2 entries",
                       line_of(text, "data", "covariance"));
    }
  }
  c.data.stretch = Eigen::VectorXd::Ones(c.data.dim());
  r.read("data", "stretch", c.data.stretch);

  r.read("schedule", "beta_min", c.schedule.beta_min);
  r.read("schedule", "beta_max", c.schedule.beta_max);
  r.read("schedule", "horizon", c.schedule.horizon);
  r.read("schedule", "alpha", c.schedule.alpha);
  r.read("schedule", "steps", c.schedule.steps);

  r.with("drift", "method", [&](const std::string& v) {
    if (v == "vsdm") c.adaptive = true;
    else if (v == "sgm") c.adaptive = false;
    else throw std::invalid_argument("expected vsdm or sgm, got '" + v + "'");
  });
  auto& vc = c.variational;
  r.with("drift", "mode", [&](const std::string& v) { vc.mode = parse_drift_mode(v); });
  vc.parametrization = is_diagonal(vc.mode) ? Parametrization::diagonal_direct : Parametrization::svd;
  r.with("drift", "parametrization",
         [&](const std::string& v) { vc.parametrization = parse_parametrization(v); });
  r.read("drift", "lambda_min", vc.lambda_min);
  r.read("drift", "zeta", vc.zeta);
  r.read("drift", "sa_amplitude", vc.step_size.amplitude);
  r.read("drift", "sa_offset", vc.step_size.offset);
  r.read("drift", "sa_exponent", vc.step_size.exponent);
  r.with("drift", "averaging", [&](const std::string& v) { vc.averaging = parse_averaging(v); });
  r.read("drift", "averaging_rate", vc.averaging_rate);
  r.read("drift", "update_every", c.update_every);
  r.read("drift", "stages", c.stages);
  r.read("drift", "a_iters_per_stage", c.sa_iters);
  r.read("drift", "sa_batch", c.sa_batch);

  r.read("model", "time_features", c.layout.time_features);
  r.read("model", "hidden", c.layout.hidden);
  r.read("model", "layers", c.layout.layers);
  c.layout.dim = c.data.dim();

  r.read("train", "batch_size", c.train.batch_size);
  r.read("train", "rounds", c.train.rounds);
  r.read("train", "learning_rate", c.train.learning_rate);
  r.read("train", "adam_beta1", c.train.adam_beta1);
  r.read("train", "adam_beta2", c.train.adam_beta2);
  r.read("train", "adam_eps", c.train.adam_eps);
  r.read("train", "ema_rate", c.train.ema_rate);

  r.with("sample", "mode", [&](const std::string& v) { c.sampler.mode = parse_sampler_mode(v); });
  r.read("sample", "nfe", c.sampler.nfe);
  r.read("sample", "count", c.sample_count);
  r.read("sample", "trajectories", c.sampler.keep_trajectories);
  c.set_seed(c.seed);

  r.read("eval", "data_count", c.eval_data_count);
  r.read("eval", "permutations", c.eval_permutations);

  r.read("kernel_check", "instances", c.check_instances);
  r.read("kernel_check", "corrupt_symmetrization", c.corrupt_symmetrization);

  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("invalid configuration: ") + e.what(), 0);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config '" + path.string() + "'", 0);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void RunConfig::validate() const {
  data.validate();
  schedule.validate();
  variational.validate();
  layout.validate();
  train.validate();
  if (layout.dim != data.dim()) throw DomainError("model dimension must match the data");
  if (stages < 1) throw DomainError("stages must be positive");
  if (update_every < 1) throw DomainError("update_every must be positive");
  if (sa_iters < 0) throw DomainError("a_iters_per_stage must be nonnegative");
  if (sa_batch < 1) throw DomainError("sa_batch must be positive");
  if (checkpoint_every < 0) throw DomainError("checkpoint_every must be nonnegative");
  if (sampler.nfe < 0) throw DomainError("nfe must be nonnegative");
  if (sample_count < 0) throw DomainError("sample count must be nonnegative");
  if (eval_data_count < 1 || eval_permutations < 1)
    throw DomainError("eval data_count and permutations must be positive");
  if (check_instances < 1) throw DomainError("kernel_check instances must be positive");
}

std::string RunConfig::canonical() const {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "[run]\nname=" << name << "\nseed=" << seed << "\ncheckpoint_every=" << checkpoint_every
    << "\n[data]\nkind=" << to_string(data.kind) << "\nstretch=" << join(data.stretch)
    << "\nnoise=" << data.noise;
  if (data.kind == DatasetKind::gaussian) {
    const Eigen::MatrixXd row_major = data.covariance.transpose();
    o << "\nmean=" << join(data.mean)
      << "\ncovariance=" << join(Eigen::Map<const Eigen::VectorXd>(row_major.data(), row_major.size()));
  }
  o << "\n[schedule]\nbeta_min=" << schedule.beta_min << "\nbeta_max=" << schedule.beta_max
    << "\nhorizon=" << schedule.horizon << "\nalpha=" << schedule.alpha << "\nsteps=" << schedule.steps
    << "\n[drift]\nmethod=" << (adaptive ? "vsdm" : "sgm") << "\nmode=" << to_string(variational.mode)
    << "\nparametrization=" << to_string(variational.parametrization)
    << "\nlambda_min=" << variational.lambda_min << "\nzeta=" << variational.zeta
    << "\nsa_amplitude=" << variational.step_size.amplitude << "\nsa_offset=" << variational.step_size.offset
    << "\nsa_exponent=" << variational.step_size.exponent << "\naveraging=" << to_string(variational.averaging)
    << "\naveraging_rate=" << variational.averaging_rate << "\nupdate_every=" << update_every
    << "\nstages=" << stages << "\na_iters_per_stage=" << sa_iters << "\nsa_batch=" << sa_batch
    << "\n[model]\ntime_features=" << layout.time_features << "\nhidden=" << layout.hidden
    << "\nlayers=" << layout.layers << "\n[train]\nbatch_size=" << train.batch_size
    << "\nrounds=" << train.rounds << "\nlearning_rate=" << train.learning_rate
    << "\nadam_beta1=" << train.adam_beta1 << "\nadam_beta2=" << train.adam_beta2
    << "\nadam_eps=" << train.adam_eps << "\nema_rate=" << train.ema_rate
    << "\n[sample]\nmode=" << to_string(sampler.mode) << "\nnfe=" << sampler.nfe
    << "\ncount=" << sample_count << "\ntrajectories=" << (sampler.keep_trajectories ? "true" : "false")
    << "\n[eval]\ndata_count=" << eval_data_count << "\npermutations=" << eval_permutations
    << "\n[kernel_check]\ninstances=" << check_instances
    << "\ncorrupt_symmetrization=" << (corrupt_symmetrization ? "true" : "false") << "\n";
  return o.str();
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  sampler.seed = value;
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

std::string RunConfig::hash_hex() const {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << hash();
  return o.str();
}

}  // namespace vsdm
