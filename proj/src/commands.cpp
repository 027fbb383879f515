#include "vsdm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "vsdm/csv.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/kernel_check.hpp"
#include "vsdm/metrics.hpp"
#include "vsdm/pipeline.hpp"

namespace vsdm {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1ULL;

std::string number(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

std::ofstream open_csv(const fs::path& path, const RunConfig& cfg, const std::string& header) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "# config_hash=" << cfg.hash_hex() << "\n" << header << "\n";
  return out;
}

std::string axis_columns(const std::string& prefix, int d) {
  std::string s;
  for (int i = 0; i < d; ++i) s += "," + prefix + std::to_string(i);
  return s;
}

void write_logs(const TrainingRun& run, const fs::path& dir) {
  const RunConfig& cfg = run.config();
  const int d = cfg.data.dim();
  auto train = open_csv(dir / "train_log.csv", cfg, "stage,dsm_loss" + axis_columns("d_scale_", d));
  for (const auto& r : run.stage_log()) {
    train << r.stage << ',' << number(r.dsm_loss);
    for (int i = 0; i < d; ++i) train << ',' << number(r.d_scale(i));
    train << '\n';
  }
  auto sa = open_csv(dir / "sa_log.csv", cfg, "stage,iteration,change" + axis_columns("d_scale_", d));
  for (const auto& r : run.sa_log()) {
    sa << r.stage << ',' << r.iteration << ',' << number(r.change);
    for (int i = 0; i < d; ++i) sa << ',' << number(r.d_scale(i));
    sa << '\n';
  }
  // Wall time lives apart from the deterministic logs.
  auto timing = open_csv(dir / "timing.csv", cfg, "stage,seconds");
  for (const auto& r : run.stage_log()) timing << r.stage << ',' << number(r.seconds) << '\n';
}

fs::path checkpoint_path(const CommandOptions& opts, const RunConfig& cfg) {
  return opts.resume ? *opts.resume : fs::path(cfg.out) / "checkpoint.vsdm";
}

void check_compatible(const RunConfig& sampling, const RunConfig& trained) {
  if (sampling.data.dim() != trained.data.dim() || !(sampling.layout == trained.layout) ||
      sampling.schedule.steps != trained.schedule.steps)
    throw CheckpointError("checkpoint was trained with an incompatible configuration");
}

// Axis-aligned scatter/polyline SVG of 2-D points (first two coordinates).
class SvgCanvas {
 public:
  SvgCanvas(const Eigen::MatrixXd& extent_points, int size = 600) : size_(size) {
    lo_ = extent_points.topRows(std::min<Eigen::Index>(2, extent_points.rows())).rowwise().minCoeff();
    hi_ = extent_points.topRows(std::min<Eigen::Index>(2, extent_points.rows())).rowwise().maxCoeff();
    if (lo_.size() == 1) {
      lo_.conservativeResize(2);
      hi_.conservativeResize(2);
      lo_(1) = -1.0;
      hi_(1) = 1.0;
    }
    const double span = std::max((hi_ - lo_).maxCoeff(), 1e-12);
    const Eigen::VectorXd mid = 0.5 * (lo_ + hi_);
    lo_ = mid.array() - 0.55 * span;
    hi_ = mid.array() + 0.55 * span;
    body_ << std::setprecision(5);
  }
  void point(double x, double y, const char* colour) {
    body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"1.2\" fill=\"" << colour
          << "\" fill-opacity=\"0.5\"/>\n";
  }
  void path(const Eigen::MatrixXd& xy, const char* colour) {
    body_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"0.6\" points=\"";
    for (Eigen::Index k = 0; k < xy.cols(); ++k)
      body_ << px(xy(0, k)) << ',' << py(xy.rows() > 1 ? xy(1, k) : 0.0) << ' ';
    body_ << "\"/>\n";
  }
  void save(const fs::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + file.string() + "'");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_ << "\" height=\"" << size_
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
  }

 private:
  double px(double x) const { return (x - lo_(0)) / (hi_(0) - lo_(0)) * size_; }
  double py(double y) const { return size_ - (y - lo_(1)) / (hi_(1) - lo_(1)) * size_; }
  int size_;
  Eigen::VectorXd lo_, hi_;
  std::ostringstream body_;
};

}  // namespace

RunConfig resolve_config(const CommandOptions& opts) {
  RunConfig cfg = RunConfig::load(opts.config);
  if (opts.out) cfg.out = opts.out->string();
  if (opts.seed) cfg.set_seed(*opts.seed);
  return cfg;
}

int cmd_train(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = resolve_config(opts);
  const fs::path dir(cfg.out);
  TrainingRun run = opts.resume ? TrainingRun::load(*opts.resume) : TrainingRun(cfg);
  if (opts.resume && run.config().hash() != cfg.hash())
    throw CheckpointError("checkpoint configuration differs from '" + opts.config.string() + "'");
  log << "train " << cfg.name << " (" << (cfg.adaptive ? "vsdm" : "sgm") << ", config "
      << cfg.hash_hex() << ") from stage " << run.stages_done() << "/" << cfg.stages << "\n";
  while (!run.finished()) {
    run.run_stage();
    const StageRecord& r = run.stage_log().back();
    log << "stage " << r.stage << " dsm_loss=" << r.dsm_loss << " d_scale=" << r.d_scale.transpose()
        << " (" << std::fixed << std::setprecision(1) << r.seconds << std::defaultfloat
        << std::setprecision(6) << " s)\n";
    if (cfg.checkpoint_every > 0 && run.stages_done() % cfg.checkpoint_every == 0 && !run.finished())
      run.save(dir / ("checkpoint_stage_" + std::to_string(run.stages_done()) + ".vsdm"));
  }
  run.save(dir / "checkpoint.vsdm");
  write_logs(run, dir);
  log << "model checksum " << std::hex << run.sampling_model().checksum() << std::dec << "\n";
  return 0;
}

int cmd_sample(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = resolve_config(opts);
  const fs::path dir(cfg.out);
  const TrainingRun run = TrainingRun::load(checkpoint_path(opts, cfg));
  check_compatible(cfg, run.config());
  const SampleBatch batch = run.sample(cfg.sample_count, cfg.sampler);
  write_samples_csv(dir / "samples.csv", batch, cfg.hash_hex());
  if (cfg.sampler.keep_trajectories) write_trajectories_csv(dir / "trajectories.csv", batch, cfg.hash_hex());
  log << "sampled " << batch.count() << " points (" << to_string(cfg.sampler.mode) << ", "
      << batch.times.size() - 1 << " steps, " << batch.score_evaluations
      << " score evaluations per sample), checksum " << std::hex << batch.checksum() << std::dec << "\n";
  return 0;
}

int cmd_eval(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = resolve_config(opts);
  const fs::path dir(cfg.out);
  const CsvTable table = read_csv(dir / "samples.csv");
  const Eigen::MatrixXd samples = points_from_csv(table);
  const int d = cfg.data.dim();
  if (samples.rows() != d)
    throw DomainError("samples have dimension " + std::to_string(samples.rows()) +
                      " but the data has dimension " + std::to_string(d));
  if (samples.cols() == 0) throw DomainError("samples file is empty");
  if (!table.config_hash.empty() && table.config_hash != cfg.hash_hex())
    log << "note: samples were written under config " << table.config_hash << "\n";

  struct Row {
    std::string metric, axis;
    double value;
  };
  std::vector<Row> rows;
  const fs::path traj_path = dir / "trajectories.csv";
  if (fs::exists(traj_path)) {
    const TrajectorySet traj = trajectories_from_csv(read_csv(traj_path));
    if (traj.states.front().rows() != d) throw DomainError("trajectory dimension does not match the data");
    if (traj.times.size() < 3) throw DomainError("trajectories need at least 3 time points");
    const double h = std::abs(traj.times(0) - traj.times(1));
    for (Eigen::Index k = 1; k + 1 < traj.times.size(); ++k)
      if (std::abs(std::abs(traj.times(k) - traj.times(k + 1)) - h) > 1e-9 * std::max(1.0, h))
        throw DomainError("trajectory times are not uniform");
    const Eigen::VectorXd s = straightness(traj.states, h);
    for (int i = 0; i < d; ++i) rows.push_back({"straightness", std::to_string(i), s(i)});
  }

  Rng rng = make_stream(cfg.seed, kEvalStream);
  const Eigen::MatrixXd data = generate(cfg.data, cfg.eval_data_count, rng);
  const Eigen::MatrixXd compared = samples.leftCols(std::min<Eigen::Index>(samples.cols(), data.cols()));
  const PermutationTest test = energy_permutation_test(compared, data, cfg.eval_permutations, rng);
  rows.push_back({"energy_distance", "all", test.statistic});
  rows.push_back({"energy_threshold_95", "all", test.threshold});
  rows.push_back({"energy_p_value", "all", test.p_value});
  for (int i = 0; i < d; ++i) {
    const double lo = data.row(i).minCoeff(), hi = data.row(i).maxCoeff();
    rows.push_back({"outer_fraction_samples", std::to_string(i), outer_fraction(samples, i, lo, hi)});
    rows.push_back({"outer_fraction_data", std::to_string(i), outer_fraction(data, i, lo, hi)});
  }

  const fs::path results = dir / "results.csv";
  const bool fresh = !fs::exists(results);
  std::ofstream out(results, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write '" + results.string() + "'");
  if (fresh) out << "# config_hash=" << cfg.hash_hex() << "\nrun_id,metric,axis,value\n";
  for (const auto& r : rows) {
    out << cfg.name << ',' << r.metric << ',' << r.axis << ',' << number(r.value) << '\n';
    log << r.metric << "[" << r.axis << "] = " << r.value << "\n";
  }
  return 0;
}

int cmd_kernel_check(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = resolve_config(opts);
  const KernelCheckReport report =
      run_kernel_check(cfg.check_instances, cfg.seed, cfg.corrupt_symmetrization);
  log << report.format();
  log << (report.passed() ? "all kernel checks passed\n" : "kernel checks FAILED\n");
  return report.passed() ? 0 : 1;
}

int cmd_plot(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = resolve_config(opts);
  const fs::path dir(cfg.out);
  const Eigen::MatrixXd samples = points_from_csv(read_csv(dir / "samples.csv"));
  Rng rng = make_stream(cfg.seed, kEvalStream);
  const Eigen::MatrixXd data = generate(cfg.data, std::max(1, static_cast<int>(samples.cols())), rng);
  Eigen::MatrixXd both(samples.rows(), samples.cols() + data.cols());
  both << samples, data;
  SvgCanvas scatter(both);
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    scatter.point(data(0, j), data.rows() > 1 ? data(1, j) : 0.0, "#999999");
  for (Eigen::Index j = 0; j < samples.cols(); ++j)
    scatter.point(samples(0, j), samples.rows() > 1 ? samples(1, j) : 0.0, "#1f4e9c");
  scatter.save(dir / "samples.svg");
  log << "wrote " << (dir / "samples.svg").string() << "\n";

  const fs::path traj_path = dir / "trajectories.csv";
  if (fs::exists(traj_path)) {
    const TrajectorySet traj = trajectories_from_csv(read_csv(traj_path));
    const Eigen::Index chains = std::min<Eigen::Index>(100, traj.states.front().cols());
    Eigen::MatrixXd all(traj.states.front().rows(), chains * static_cast<Eigen::Index>(traj.states.size()));
    for (std::size_t k = 0; k < traj.states.size(); ++k)
      all.middleCols(static_cast<Eigen::Index>(k) * chains, chains) = traj.states[k].leftCols(chains);
    SvgCanvas lines(all);
    for (Eigen::Index c = 0; c < chains; ++c) {
      Eigen::MatrixXd path(all.rows(), static_cast<Eigen::Index>(traj.states.size()));
      for (std::size_t k = 0; k < traj.states.size(); ++k)
        path.col(static_cast<Eigen::Index>(k)) = traj.states[k].col(c);
      lines.path(path, "#c0392b");
    }
    lines.save(dir / "trajectories.svg");
    log << "wrote " << (dir / "trajectories.svg").string() << "\n";
  }
  return 0;
}

}  // namespace vsdm
