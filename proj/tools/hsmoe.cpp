// hsmoe: command-line front end for the horseshoe mixture-of-experts filter.
//
//   hsmoe simulate        synthetic data + ground truth
//   hsmoe fit             particle-learning fit, JSON report
//   hsmoe select          log evidence across expert counts
//   hsmoe score           uncertainty-aware expert scores from a saved state
//   hsmoe exact-evidence  closed-form single-expert log evidence
//
// Exit codes: 0 success, 2 usage or I/O error, 3 numerical degeneracy.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsmoe/engine.hpp"
#include "hsmoe/error.hpp"
#include "hsmoe/io.hpp"
#include "hsmoe/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;
constexpr int kReportVersion = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FilterFlags {
  std::size_t n_experts = 1;
  std::vector<std::size_t> candidates{1, 2, 3};
  std::size_t particles = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string resample = "systematic";
  double resample_threshold = 1.0;
  std::size_t rejuvenate_every = 1;
  std::string phi_refresh = "sample";
  double prior_mean = 0.0;
  double prior_v_scale = 1.0;
  double a0 = 1.0;
  double b0 = 1.0;
  bool store_paths = false;
};

void add_prior_options(CLI::App* cmd, FilterFlags& f) {
  cmd->add_option("--prior-mean", f.prior_mean, "Expert prior mean (every coefficient)");
  cmd->add_option("--prior-v-scale", f.prior_v_scale, "Expert prior covariance scale, V0 = c I")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--a0", f.a0, "Inverse-gamma shape")->check(CLI::PositiveNumber);
  cmd->add_option("--b0", f.b0, "Inverse-gamma scale")->check(CLI::PositiveNumber);
}

void add_filter_options(CLI::App* cmd, FilterFlags& f) {
  cmd->add_option("--particles,-N", f.particles, "Number of particles")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--threads", f.threads, "Worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--resample", f.resample, "Resampling scheme")
      ->check(CLI::IsMember({"systematic", "multinomial"}));
  cmd->add_option("--resample-threshold", f.resample_threshold,
                  "Resample when ESS < threshold * N; >= 1 resamples every step")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--rejuvenate-every", f.rejuvenate_every,
                  "Horseshoe Gibbs sweep every r observations, 0 = never");
  cmd->add_option("--phi-refresh", f.phi_refresh, "Stick coefficient refresh")
      ->check(CLI::IsMember({"sample", "mean"}));
  add_prior_options(cmd, f);
}

hsmoe::FilterConfig filter_config(const FilterFlags& f) {
  hsmoe::FilterConfig c;
  c.n_particles = f.particles;
  c.n_experts = f.n_experts;
  c.prior_mean = f.prior_mean;
  c.prior_v_scale = f.prior_v_scale;
  c.a0 = f.a0;
  c.b0 = f.b0;
  c.resample = hsmoe::parse_resample_scheme(f.resample);
  c.resample_threshold = f.resample_threshold;
  c.phi_refresh = hsmoe::parse_phi_refresh(f.phi_refresh);
  c.rejuvenate_every = f.rejuvenate_every;
  c.store_paths = f.store_paths;
  c.seed = f.seed;
  c.threads = f.threads;
  return c;
}

hsmoe::Dataset load_dataset(const std::string& path) {
  try {
    return hsmoe::read_dataset_csv(path);
  } catch (const hsmoe::ParseError& e) {
    throw hsmoe::ParseError(path + ": " + e.what());
  }
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// Report to a file when a path is given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text << std::flush;
  } else {
    hsmoe::write_file_atomic(path, text);
  }
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ordered_json data_json(const std::string& path, const hsmoe::Dataset& data) {
  ordered_json j;
  j["path"] = fs::path(path).filename().string();
  j["n"] = data.observations.size();
  j["dim"] = data.dim;
  return j;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
  std::string preset;
  hsmoe::SynthConfig cfg;
  std::string output = ".";
};

void setup_simulate(CLI::App& app, SimulateFlags& f) {
  auto* cmd = app.add_subcommand("simulate", "Generate a synthetic dataset and its ground truth");
  cmd->add_option("--preset", f.preset, "Named configuration; explicit flags override it")
      ->check(CLI::IsMember({"table1"}));
  cmd->add_option("--K", f.cfg.n_experts, "Number of experts")->check(CLI::PositiveNumber);
  cmd->add_option("--s", f.cfg.n_active, "Active experts (default min(3, K))")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--n", f.cfg.n, "Number of observations");
  cmd->add_option("--d", f.cfg.dim, "Covariate dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--b-inactive", f.cfg.b_inactive, "Logit bias of inactive experts");
  cmd->add_option("--temperature", f.cfg.temperature, "Softmax temperature")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--sigma2", f.cfg.sigma2, "Noise variance of every expert")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--gate-scale", f.cfg.gate_scale, "Sd of active gate coefficients")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", f.cfg.seed, "Random seed");
  cmd->add_option("--output,-o", f.output, "Output directory (must exist)");
}

int run_simulate(CLI::App& cmd, SimulateFlags& f) {
  hsmoe::SynthConfig& cfg = f.cfg;
  // The table1 values are the SynthConfig defaults; the preset only pins them
  // against future default changes.
  if (f.preset == "table1") {
    const hsmoe::SynthConfig table1;
    if (cmd.count("--K") == 0) cfg.n_experts = table1.n_experts;
    if (cmd.count("--s") == 0) cfg.n_active = table1.n_active;
    if (cmd.count("--n") == 0) cfg.n = table1.n;
    if (cmd.count("--d") == 0) cfg.dim = table1.dim;
  }
  if (cmd.count("--s") == 0) cfg.n_active = std::min<std::size_t>(cfg.n_active, cfg.n_experts);
  if (!fs::is_directory(f.output)) throw UsageError("output directory does not exist: " + f.output);

  const hsmoe::SyntheticData sim = hsmoe::generate(cfg);
  hsmoe::Dataset data{cfg.dim, sim.observations, sim.z};

  ordered_json truth;
  truth["format"] = "hsmoe-truth";
  truth["version"] = kReportVersion;
  truth["config"] = hsmoe::to_json(cfg);
  truth["truth"] = hsmoe::to_json(sim.truth);
  truth["active_experts"] = ordered_json::array();
  for (std::size_t k = 1; k <= cfg.n_active; ++k) truth["active_experts"].push_back(k);
  if (cfg.n > 0) {
    truth["empirical_allocation_frequencies"] =
        vector_json(hsmoe::empirical_allocation_frequencies(sim.z, cfg.n_experts));
  }

  const fs::path dir(f.output);
  hsmoe::write_file_atomic(dir / "data.csv", hsmoe::format_dataset_csv(data));
  hsmoe::write_file_atomic(dir / "truth.json", dump(truth));

  std::cout << "wrote " << cfg.n << " rows (d=" << cfg.dim << ", K=" << cfg.n_experts
            << ", s=" << cfg.n_active << ") to " << (dir / "data.csv").string() << " and "
            << (dir / "truth.json").string() << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitFlags {
  std::string preset;
  std::string data;
  FilterFlags filter;
  std::string output;
  std::string freq_csv;
  std::string save_state;
  bool timing = false;
};

void setup_fit(CLI::App& app, FitFlags& f) {
  auto* cmd = app.add_subcommand("fit", "Run the particle filter and report evidence and allocations");
  cmd->add_option("--preset", f.preset, "table1: K=10, N=1000; explicit flags override it")
      ->check(CLI::IsMember({"table1"}));
  cmd->add_option("--data", f.data, "Dataset CSV (x_1..x_d,y[,z_true])")->required();
  cmd->add_option("--K", f.filter.n_experts, "Number of experts")->check(CLI::PositiveNumber);
  add_filter_options(cmd, f.filter);
  cmd->add_flag("--store-paths", f.filter.store_paths, "Keep each particle's allocation path");
  cmd->add_option("--output,-o", f.output, "Report JSON path (default stdout)");
  cmd->add_option("--freq-csv", f.freq_csv, "Allocation-frequency CSV for plotting");
  cmd->add_option("--save-state", f.save_state, "Write the final filter state (JSON)");
  cmd->add_flag("--timing", f.timing, "Include wall time in the report");
}

std::string frequency_csv(const Eigen::VectorXd& fitted, const Eigen::VectorXd* truth) {
  std::string out = truth ? "expert,frequency,true_frequency\n" : "expert,frequency\n";
  for (Eigen::Index k = 0; k < fitted.size(); ++k) {
    out += std::to_string(k + 1) + "," + hsmoe::format_double(fitted[k]);
    if (truth) {
      out += "," + hsmoe::format_double(k < truth->size() ? (*truth)[k] : 0.0);
    }
    out += "\n";
  }
  return out;
}

int run_fit(CLI::App& cmd, FitFlags& f) {
  if (f.preset == "table1") {
    if (cmd.count("--K") == 0) f.filter.n_experts = 10;
    if (cmd.count("--particles") == 0) f.filter.particles = 1000;
  }
  const hsmoe::Dataset data = load_dataset(f.data);
  const hsmoe::FilterConfig config = filter_config(f.filter);

  const auto start = std::chrono::steady_clock::now();
  const hsmoe::FilterState state = hsmoe::run(config, data.observations, data.dim);
  const double wall = seconds_since(start);

  ordered_json report;
  report["report"] = "fit";
  report["version"] = kReportVersion;
  report["config"] = hsmoe::to_json(config);
  report["data"] = data_json(f.data, data);
  report["log_ml"] = state.log_ml;

  Eigen::VectorXd freq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.n_experts));
  if (state.t > 0) freq = hsmoe::allocation_frequencies(state);
  report["allocation_frequencies"] = vector_json(freq);
  Eigen::VectorXd truth_freq;
  if (data.z_true && !data.z_true->empty()) {
    std::size_t k_true = 0;
    for (auto z : *data.z_true) k_true = std::max(k_true, z + 1);
    truth_freq = hsmoe::empirical_allocation_frequencies(*data.z_true, k_true);
    report["true_allocation_frequencies"] = vector_json(truth_freq);
  }

  ordered_json ess;
  double ess_min = static_cast<double>(config.n_particles), ess_sum = 0.0;
  for (double e : state.ess_history) {
    ess_min = std::min(ess_min, e);
    ess_sum += e;
  }
  ess["min"] = state.ess_history.empty() ? ordered_json() : ordered_json(ess_min);
  ess["mean"] = state.ess_history.empty()
                    ? ordered_json()
                    : ordered_json(ess_sum / static_cast<double>(state.ess_history.size()));
  ess["trace"] = state.ess_history;
  report["ess"] = std::move(ess);

  report["warnings"] = ordered_json::array();
  if (const auto clamps = state.scale_clamps(); clamps > 0) {
    ordered_json w;
    w["code"] = "scale_clamp";
    w["count"] = clamps;
    w["message"] = "expert scale statistic rounded to a nonpositive value and was clamped";
    report["warnings"].push_back(std::move(w));
    std::cerr << "hsmoe fit: warning: " << clamps << " expert scale clamp(s)\n";
  }
  if (f.timing) report["wall_time_seconds"] = wall;

  emit(f.output, dump(report));
  if (!f.freq_csv.empty()) {
    hsmoe::write_file_atomic(f.freq_csv,
                             frequency_csv(freq, truth_freq.size() > 0 ? &truth_freq : nullptr));
  }
  if (!f.save_state.empty()) {
    hsmoe::write_file_atomic(f.save_state, hsmoe::filter_state_to_json(state).dump() + "\n");
  }
  std::cerr << "hsmoe fit: n=" << data.observations.size() << " K=" << config.n_experts
            << " N=" << config.n_particles << " log_ml=" << state.log_ml << " wall=" << wall
            << "s\n";
  return 0;
}

// ------------------------------------------------------------------ select

struct SelectFlags {
  std::string data;
  FilterFlags filter;
  std::string output;
  std::string table_csv;
  bool timing = false;
};

void setup_select(CLI::App& app, SelectFlags& f) {
  auto* cmd = app.add_subcommand("select", "Compare log evidence across numbers of experts");
  cmd->add_option("--data", f.data, "Dataset CSV")->required();
  cmd->add_option("--K", f.filter.candidates, "Candidate expert counts, e.g. 1,2,4")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  add_filter_options(cmd, f.filter);
  cmd->add_option("--output,-o", f.output, "Report JSON path (default stdout)");
  cmd->add_option("--table-csv", f.table_csv, "Write the (K, log_ml, winner) table as CSV");
  cmd->add_flag("--timing", f.timing, "Include wall time in the report");
}

int run_select(SelectFlags& f) {
  const hsmoe::Dataset data = load_dataset(f.data);
  const hsmoe::FilterConfig base = filter_config(f.filter);
  const auto start = std::chrono::steady_clock::now();
  const hsmoe::Selection sel =
      hsmoe::select_n_experts(base, f.filter.candidates, data.observations, data.dim);
  const double wall = seconds_since(start);

  ordered_json report;
  report["report"] = "select";
  report["version"] = kReportVersion;
  ordered_json config = hsmoe::to_json(base);
  config.erase("n_experts");
  report["config"] = std::move(config);
  report["data"] = data_json(f.data, data);
  report["rows"] = ordered_json::array();
  std::string csv = "K,log_ml,winner\n";
  for (const auto& row : sel.rows) {
    ordered_json r;
    r["K"] = row.n_experts;
    r["log_ml"] = row.log_ml;
    r["winner"] = row.n_experts == sel.winner;
    report["rows"].push_back(std::move(r));
    csv += std::to_string(row.n_experts) + "," + hsmoe::format_double(row.log_ml) + "," +
           (row.n_experts == sel.winner ? "1" : "0") + "\n";
  }
  report["winner"] = sel.winner;
  if (f.timing) report["wall_time_seconds"] = wall;

  emit(f.output, dump(report));
  if (!f.table_csv.empty()) hsmoe::write_file_atomic(f.table_csv, csv);
  std::cerr << "hsmoe select: winner K=" << sel.winner << " wall=" << wall << "s\n";
  return 0;
}

// ------------------------------------------------------------------- score

struct ScoreFlags {
  std::string state;
  std::vector<double> x;
  double alpha = 0.0;
  std::size_t top_k = 1;
  bool within = false;
  std::string output;
};

void setup_score(CLI::App& app, ScoreFlags& f) {
  auto* cmd = app.add_subcommand("score", "Score experts for a query input from a saved state");
  cmd->add_option("--state", f.state, "Filter state written by fit --save-state")->required();
  cmd->add_option("--x", f.x, "Query covariates, comma separated")->delimiter(',')->required();
  cmd->add_option("--alpha", f.alpha, "Uncertainty penalty, score = mean - alpha * sd")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--top-k", f.top_k, "Number of experts to route to")->check(CLI::PositiveNumber);
  cmd->add_flag("--within-variance", f.within,
                "Add the within-particle posterior variance of each logit");
  cmd->add_option("--output,-o", f.output, "Report JSON path (default stdout)");
}

int run_score(ScoreFlags& f) {
  std::ifstream in(f.state, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open state file " + f.state);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw hsmoe::ParseError(f.state + ": " + e.what());
  }
  const hsmoe::FilterState state = hsmoe::filter_state_from_json(j);
  const Eigen::VectorXd x =
      Eigen::Map<const Eigen::VectorXd>(f.x.data(), static_cast<Eigen::Index>(f.x.size()));
  if (f.top_k > state.config.n_experts) {
    throw UsageError("--top-k must not exceed K = " + std::to_string(state.config.n_experts));
  }
  const Eigen::VectorXd scores = hsmoe::expert_scores(state, x, {f.alpha, f.within});

  ordered_json report;
  report["report"] = "score";
  report["version"] = kReportVersion;
  report["n_experts"] = state.config.n_experts;
  report["x"] = f.x;
  report["alpha"] = f.alpha;
  report["within_particle_variance"] = f.within;
  report["scores"] = vector_json(scores);
  report["top_k"] = ordered_json::array();
  for (const std::size_t k : hsmoe::top_k(scores, f.top_k)) report["top_k"].push_back(k + 1);
  emit(f.output, dump(report));
  return 0;
}

// ---------------------------------------------------------- exact-evidence

struct ExactFlags {
  std::string data;
  FilterFlags prior;
  std::string output;
};

void setup_exact(CLI::App& app, ExactFlags& f) {
  auto* cmd = app.add_subcommand("exact-evidence",
                                 "Closed-form log evidence of the single-expert model");
  cmd->add_option("--data", f.data, "Dataset CSV")->required();
  add_prior_options(cmd, f.prior);
  cmd->add_option("--output,-o", f.output, "Report JSON path (default stdout)");
}

int run_exact(ExactFlags& f) {
  const hsmoe::Dataset data = load_dataset(f.data);
  const auto d = static_cast<Eigen::Index>(data.dim);
  const hsmoe::NIGStats prior =
      hsmoe::nig_prior(Eigen::VectorXd::Constant(d, f.prior.prior_mean),
                       f.prior.prior_v_scale * Eigen::MatrixXd::Identity(d, d), f.prior.a0,
                       f.prior.b0);
  ordered_json report;
  report["report"] = "exact-evidence";
  report["version"] = kReportVersion;
  report["data"] = data_json(f.data, data);
  report["log_ml"] = hsmoe::prequential_log_evidence(prior, data.observations);
  emit(f.output, dump(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Horseshoe mixture-of-experts with particle learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hsmoe 0.1.0");

  SimulateFlags simulate;
  FitFlags fit;
  SelectFlags select;
  ScoreFlags score;
  ExactFlags exact;
  setup_simulate(app, simulate);
  setup_fit(app, fit);
  setup_select(app, select);
  setup_score(app, score);
  setup_exact(app, exact);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "simulate") return run_simulate(*cmd, simulate);
    if (name == "fit") return run_fit(*cmd, fit);
    if (name == "select") return run_select(select);
    if (name == "score") return run_score(score);
    return run_exact(exact);
  } catch (const hsmoe::DegeneracyError& e) {
    std::cerr << "hsmoe " << name << ": degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const hsmoe::NumericalError& e) {
    std::cerr << "hsmoe " << name << ": numerical failure: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "hsmoe " << name << ": error: " << e.what() << "\n";
    return kExitUsage;
  }
}
