#include "hsmoe/io.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "hsmoe/error.hpp"

namespace hsmoe {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void parse_fail(std::size_t line, std::size_t column, std::string_view name,
                             const std::string& what) {
  std::ostringstream msg;
  msg << "row " << line << ", column " << column;
  if (!name.empty()) msg << " (" << name << ")";
  msg << ": " << what;
  throw ParseError(msg.str());
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

double json_double(const json& j) {
  if (j.is_null()) return -std::numeric_limits<double>::infinity();
  return j.get<double>();
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw ParseError("filter state: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Dataset parse_dataset_csv(const std::string& text) {
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("row 1: missing header");

  const auto header = split(trim(lines[0]), ',');
  std::vector<std::string> names;
  for (const auto h : header) names.emplace_back(trim(h));
  const bool has_z = names.size() >= 3 && names.back() == "z_true";
  const std::size_t n_x = names.size() - (has_z ? 2 : 1);
  if (names.size() < 2 || n_x < 1) {
    throw ParseError("row 1: header must be x_1,...,x_d,y[,z_true]");
  }
  for (std::size_t j = 0; j < n_x; ++j) {
    if (names[j] != "x_" + std::to_string(j + 1)) {
      parse_fail(1, j + 1, names[j], "expected header x_" + std::to_string(j + 1));
    }
  }
  if (names[n_x] != "y") parse_fail(1, n_x + 1, names[n_x], "expected header y");

  Dataset data;
  data.dim = n_x;
  if (has_z) data.z_true.emplace();
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li + 1;
    const auto line = trim(lines[li]);
    if (line.empty()) parse_fail(row, 1, "", "empty row");
    const auto fields = split(line, ',');
    if (fields.size() != names.size()) {
      parse_fail(row, std::min(fields.size(), names.size()) + 1, "",
                 "expected " + std::to_string(names.size()) + " fields, found " +
                     std::to_string(fields.size()));
    }
    Observation obs;
    obs.x.resize(static_cast<Eigen::Index>(n_x));
    for (std::size_t c = 0; c < n_x + 1; ++c) {
      const auto f = trim(fields[c]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        parse_fail(row, c + 1, names[c], "not a number: '" + std::string(f) + "'");
      }
      if (!std::isfinite(v)) parse_fail(row, c + 1, names[c], "value is not finite");
      if (c < n_x) {
        obs.x[static_cast<Eigen::Index>(c)] = v;
      } else {
        obs.y = v;
      }
    }
    if (has_z) {
      const auto f = trim(fields.back());
      std::size_t z = 0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), z);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || z < 1) {
        parse_fail(row, names.size(), "z_true", "expected a positive integer: '" + std::string(f) + "'");
      }
      data.z_true->push_back(z - 1);
    }
    data.observations.push_back(std::move(obs));
  }
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset_csv(ss.str());
}

std::string format_dataset_csv(const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < data.dim; ++j) out += "x_" + std::to_string(j + 1) + ",";
  out += "y";
  if (data.z_true) out += ",z_true";
  out += "\n";
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    const auto& obs = data.observations[i];
    for (Eigen::Index j = 0; j < obs.x.size(); ++j) out += format_double(obs.x[j]) + ",";
    out += format_double(obs.y);
    if (data.z_true) out += "," + std::to_string((*data.z_true)[i] + 1);
    out += "\n";
  }
  return out;
}

std::string to_string(ResampleScheme s) {
  return s == ResampleScheme::systematic ? "systematic" : "multinomial";
}

std::string to_string(PhiRefresh p) { return p == PhiRefresh::sample ? "sample" : "mean"; }

ResampleScheme parse_resample_scheme(const std::string& s) {
  if (s == "systematic") return ResampleScheme::systematic;
  if (s == "multinomial") return ResampleScheme::multinomial;
  throw ConfigError("unknown resampling scheme '" + s + "'");
}

PhiRefresh parse_phi_refresh(const std::string& s) {
  if (s == "sample") return PhiRefresh::sample;
  if (s == "mean") return PhiRefresh::mean;
  throw ConfigError("unknown phi refresh policy '" + s + "'");
}

ordered_json to_json(const GroundTruth& truth) {
  ordered_json j;
  j["betas"] = matrix_json(truth.betas);
  j["sigma2s"] = vector_json(truth.sigma2s);
  j["gate_coeffs"] = matrix_json(truth.gate_coeffs);
  j["gate_bias"] = vector_json(truth.gate_bias);
  j["temperature"] = truth.temperature;
  return j;
}

ordered_json to_json(const SynthConfig& cfg) {
  ordered_json j;
  j["K"] = cfg.n_experts;
  j["s"] = cfg.n_active;
  j["n"] = cfg.n;
  j["d"] = cfg.dim;
  j["b_inactive"] = cfg.b_inactive;
  j["temperature"] = cfg.temperature;
  j["sigma2"] = cfg.sigma2;
  j["gate_scale"] = cfg.gate_scale;
  j["seed"] = cfg.seed;
  return j;
}

ordered_json to_json(const FilterConfig& cfg) {
  ordered_json j;
  j["n_particles"] = cfg.n_particles;
  j["n_experts"] = cfg.n_experts;
  j["prior_mean"] = cfg.prior_mean;
  j["prior_v_scale"] = cfg.prior_v_scale;
  j["a0"] = cfg.a0;
  j["b0"] = cfg.b0;
  j["resample"] = to_string(cfg.resample);
  j["resample_threshold"] = cfg.resample_threshold;
  j["phi_refresh"] = to_string(cfg.phi_refresh);
  j["rejuvenate_every"] = cfg.rejuvenate_every;
  j["store_paths"] = cfg.store_paths;
  j["seed"] = cfg.seed;
  return j;
}

FilterConfig filter_config_from_json(const json& j) {
  FilterConfig cfg;
  cfg.n_particles = j.at("n_particles").get<std::size_t>();
  cfg.n_experts = j.at("n_experts").get<std::size_t>();
  cfg.prior_mean = j.at("prior_mean").get<double>();
  cfg.prior_v_scale = j.at("prior_v_scale").get<double>();
  cfg.a0 = j.at("a0").get<double>();
  cfg.b0 = j.at("b0").get<double>();
  cfg.resample = parse_resample_scheme(j.at("resample").get<std::string>());
  cfg.resample_threshold = j.at("resample_threshold").get<double>();
  cfg.phi_refresh = parse_phi_refresh(j.at("phi_refresh").get<std::string>());
  cfg.rejuvenate_every = j.at("rejuvenate_every").get<std::size_t>();
  cfg.store_paths = j.at("store_paths").get<bool>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

ordered_json filter_state_to_json(const FilterState& fs) {
  ordered_json j;
  j["format"] = "hsmoe-filter-state";
  j["version"] = 1;
  j["config"] = to_json(fs.config);
  j["dim"] = fs.dim;
  j["t"] = fs.t;
  j["log_ml"] = fs.log_ml;
  j["ess_history"] = fs.ess_history;
  j["log_weights"] = fs.log_weights;
  ordered_json particles = ordered_json::array();
  for (const auto& p : fs.particles) {
    ordered_json pj;
    ordered_json experts = ordered_json::array();
    for (const auto& e : p.experts) {
      ordered_json ej;
      ej["mean"] = vector_json(e.mean);
      ej["precision"] = matrix_json(e.precision);
      ej["shape"] = e.shape;
      ej["scale"] = e.scale;
      experts.push_back(std::move(ej));
    }
    pj["experts"] = std::move(experts);
    ordered_json gate;
    gate["tau2"] = p.gate.hs.tau2;
    gate["xi"] = p.gate.hs.xi;
    gate["lambda2"] = matrix_json(p.gate.hs.lambda2);
    gate["nu"] = matrix_json(p.gate.hs.nu);
    ordered_json sticks = ordered_json::array();
    for (const auto& s : p.gate.sticks) {
      ordered_json sj;
      sj["data_precision"] = matrix_json(s.data_precision);
      sj["h"] = vector_json(s.h);
      sj["phi"] = vector_json(s.phi);
      sticks.push_back(std::move(sj));
    }
    gate["sticks"] = std::move(sticks);
    pj["gate"] = std::move(gate);
    pj["alloc_counts"] = p.alloc_counts;
    pj["last_z"] = p.last_z ? ordered_json(*p.last_z) : ordered_json(nullptr);
    pj["path"] = p.path;
    pj["scale_clamps"] = p.scale_clamps;
    particles.push_back(std::move(pj));
  }
  j["particles"] = std::move(particles);
  return j;
}

FilterState filter_state_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "hsmoe-filter-state") {
      throw ParseError("filter state: unexpected format tag");
    }
    if (j.at("version").get<int>() != 1) throw ParseError("filter state: unsupported version");
    FilterState fs;
    fs.config = filter_config_from_json(j.at("config"));
    fs.dim = j.at("dim").get<std::size_t>();
    fs.t = j.at("t").get<std::size_t>();
    fs.log_ml = j.at("log_ml").get<double>();
    fs.ess_history = j.at("ess_history").get<std::vector<double>>();
    for (const auto& lw : j.at("log_weights")) fs.log_weights.push_back(json_double(lw));
    const auto d = static_cast<Eigen::Index>(fs.dim);
    for (const auto& pj : j.at("particles")) {
      Particle p;
      for (const auto& ej : pj.at("experts")) {
        NIGStats e;
        e.mean = vector_from_json(ej.at("mean"));
        e.precision = matrix_from_json(ej.at("precision"), d);
        e.shape = ej.at("shape").get<double>();
        e.scale = ej.at("scale").get<double>();
        if (e.mean.size() != d || e.precision.rows() != d) {
          throw ParseError("filter state: expert dimension mismatch");
        }
        p.experts.push_back(std::move(e));
      }
      const auto& gj = pj.at("gate");
      p.gate.hs.tau2 = gj.at("tau2").get<double>();
      p.gate.hs.xi = gj.at("xi").get<double>();
      p.gate.hs.lambda2 = matrix_from_json(gj.at("lambda2"), d);
      p.gate.hs.nu = matrix_from_json(gj.at("nu"), d);
      for (const auto& sj : gj.at("sticks")) {
        StickState s;
        s.data_precision = matrix_from_json(sj.at("data_precision"), d);
        s.h = vector_from_json(sj.at("h"));
        s.phi = vector_from_json(sj.at("phi"));
        if (s.h.size() != d || s.phi.size() != d || s.data_precision.rows() != d) {
          throw ParseError("filter state: stick dimension mismatch");
        }
        p.gate.sticks.push_back(std::move(s));
      }
      p.alloc_counts = pj.at("alloc_counts").get<std::vector<std::uint64_t>>();
      if (!pj.at("last_z").is_null()) p.last_z = pj.at("last_z").get<std::size_t>();
      p.path = pj.at("path").get<std::vector<std::uint32_t>>();
      p.scale_clamps = pj.at("scale_clamps").get<std::uint64_t>();
      if (p.experts.size() != fs.config.n_experts ||
          p.gate.sticks.size() + 1 != fs.config.n_experts ||
          p.alloc_counts.size() != fs.config.n_experts ||
          static_cast<std::size_t>(p.gate.hs.lambda2.rows()) != p.gate.sticks.size()) {
        throw ParseError("filter state: particle does not match n_experts");
      }
      fs.particles.push_back(std::move(p));
    }
    if (fs.particles.size() != fs.config.n_particles ||
        fs.log_weights.size() != fs.particles.size()) {
      throw ParseError("filter state: particle count mismatch");
    }
    return fs;
  } catch (const json::exception& e) {
    throw ParseError(std::string("filter state: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("filter state: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) {
    throw std::runtime_error("output directory does not exist: " + parent.string());
  }
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move output into place: " + path.string());
  }
}

}  // namespace hsmoe
