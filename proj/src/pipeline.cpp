#include "vsdm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vsdm/checkpoint.hpp"
#include "vsdm/datasets.hpp"
#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

constexpr std::uint64_t kInitStream = 0x5eedULL;

std::uint64_t train_stream(int stage) { return 2 * static_cast<std::uint64_t>(stage); }
std::uint64_t sa_stream(int stage) { return 2 * static_cast<std::uint64_t>(stage) + 1; }

ScoreTrainer fresh_trainer(const RunConfig& cfg) {
  Rng rng = make_stream(cfg.seed, kInitStream);
  return ScoreTrainer(ScoreModel::initialize(cfg.layout, cfg.schedule.horizon, rng), cfg.train);
}

Eigen::MatrixXd stacked_a(const DriftMatrixGrid& grid) {
  Eigen::MatrixXd out(grid.dim(), grid.dim() * grid.slots());
  for (int s = 0; s < grid.slots(); ++s) out.middleCols(s * grid.dim(), grid.dim()) = grid.a_slot(s);
  return out;
}

}  // namespace

Eigen::VectorXd drift_scale(const DriftMatrixGrid& drift, double beta_max) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(drift.dim());
  for (int n = 0; n < drift.steps(); ++n) acc += drift.d_at(n).diagonal();
  return beta_max * acc / static_cast<double>(drift.steps());
}

TrainingRun::TrainingRun(RunConfig cfg)
    : cfg_(std::move(cfg)),
      trainer_(fresh_trainer(cfg_)),
      variational_(cfg_.data.dim(), cfg_.schedule.steps, cfg_.variational) {
  cfg_.validate();
}

void TrainingRun::run() {
  while (!finished()) run_stage();
}

void TrainingRun::run_stage() {
  if (finished()) throw DomainError("all stages are already done");
  const int stage = stages_done_;
  const auto start = std::chrono::steady_clock::now();

  const DriftMatrixGrid grid = variational_.effective_drift_grid();
  const KernelTable table = KernelTable::build(cfg_.schedule, grid);
  Rng rng = make_stream(cfg_.seed, train_stream(stage));
  const Dataset data = cfg_.data;
  const std::vector<double> trace = [&] {
    try {
      return trainer_.train_round(cfg_.schedule, table,
                                  [&data](int count, Rng& r) { return generate(data, count, r); }, rng);
    } catch (const std::exception& e) {
      throw TrainingError("stage " + std::to_string(stage) + ": " + e.what());
    }
  }();

  const bool last = stage + 1 == cfg_.stages;
  if (cfg_.adaptive && !last && (stage + 1) % cfg_.update_every == 0) {
    const ScoreModel model = trainer_.ema_model();
    const std::uint64_t base = derive_seed(cfg_.seed, sa_stream(stage));
    for (int it = 0; it < cfg_.sa_iters; ++it) {
      try {
        sa_iteration(stage, it, derive_seed(base, static_cast<std::uint64_t>(it)), model);
      } catch (const std::exception& e) {
        throw TrainingError("stage " + std::to_string(stage) + ", SA iteration " +
                            std::to_string(it) + ": " + e.what());
      }
    }
  }

  StageRecord rec;
  rec.stage = stage;
  rec.dsm_loss = trace.empty() ? 0.0
                               : std::accumulate(trace.begin(), trace.end(), 0.0) /
                                     static_cast<double>(trace.size());
  rec.d_scale = drift_scale(variational_.effective_drift_grid(), cfg_.schedule.beta_max);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  stage_log_.push_back(std::move(rec));
  ++stages_done_;
}

void TrainingRun::sa_iteration(int stage, int iteration, std::uint64_t seed,
                               const ScoreModel& model) {
  const BetaSchedule& s = cfg_.schedule;
  const int n_grid = s.steps;
  std::vector<Eigen::MatrixXd> states(static_cast<std::size_t>(n_grid));
  std::vector<Eigen::MatrixXd> z_bwd(static_cast<std::size_t>(n_grid));
  // The sampler visits every grid time n = N-1..1 exactly once; keep (x, sqrt(beta) s).
  const ScoreFn recording = [&](const Eigen::MatrixXd& x, double t) {
    Eigen::MatrixXd out = model.evaluate_batch(x, t);
    const int n = s.grid_index(t);
    if (n >= 1) {
      states[static_cast<std::size_t>(n)] = x;
      z_bwd[static_cast<std::size_t>(n)] = std::sqrt(beta_at(s, t)) * out;
    }
    return out;
  };
  SamplerConfig sc;
  sc.mode = SamplerMode::sde;
  sc.seed = seed;
  sample_batch(cfg_.sa_batch, sc, s, variational_.raw_grid(), recording);

  const Eigen::MatrixXd before = stacked_a(variational_.raw_grid());
  if (is_time_varying(cfg_.variational.mode)) {
    std::vector<std::vector<double>> grads(static_cast<std::size_t>(n_grid));
    for (int n = 1; n < n_grid; ++n)
      grads[static_cast<std::size_t>(n)] = variational_.loss_grad(
          n, states[static_cast<std::size_t>(n)], z_bwd[static_cast<std::size_t>(n)], s);
    // The first cell has no backward state of its own; it follows the second.
    variational_.sa_update(0, grads[1]);
    for (int n = 1; n < n_grid; ++n) variational_.sa_update(n, grads[static_cast<std::size_t>(n)]);
  } else {
    std::vector<double> mean(variational_.parameter_count(), 0.0);
    for (int n = 1; n < n_grid; ++n) {
      const auto g = variational_.loss_grad(n, states[static_cast<std::size_t>(n)],
                                            z_bwd[static_cast<std::size_t>(n)], s);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i] / (n_grid - 1);
    }
    variational_.sa_update(0, mean);
  }
  const Eigen::MatrixXd after = stacked_a(variational_.raw_grid());

  SaRecord rec;
  rec.stage = stage;
  rec.iteration = iteration;
  rec.change = (after - before).norm();
  rec.d_scale = drift_scale(variational_.raw_grid(), s.beta_max);
  sa_log_.push_back(std::move(rec));
}

SampleBatch TrainingRun::sample(int count, const SamplerConfig& sampler) const {
  const ScoreModel model = sampling_model();
  return sample_batch(count, sampler, cfg_.schedule, drift_grid(), model_score(model));
}

std::string TrainingRun::serialize() const {
  ByteWriter out;
  out.put_raw(std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()));
  out.put<std::uint32_t>(kCheckpointVersion);

  ByteWriter conf;
  conf.put_string(cfg_.canonical());
  out.put_section("CONF", conf);

  ByteWriter stat;
  stat.put<std::uint32_t>(static_cast<std::uint32_t>(stages_done_));
  out.put_section("STAT", stat);

  // Every stage's streams are derived from (seed, stage); this is the whole RNG state.
  ByteWriter rngs;
  rngs.put<std::uint64_t>(cfg_.seed);
  rngs.put<std::uint64_t>(train_stream(stages_done_));
  out.put_section("RNGS", rngs);

  const ScoreModel& model = trainer_.model();
  ByteWriter modl;
  modl.put<std::int32_t>(model.layout().dim);
  modl.put<std::int32_t>(model.layout().time_features);
  modl.put<std::int32_t>(model.layout().hidden);
  modl.put<std::int32_t>(model.layout().layers);
  modl.put<double>(model.horizon());
  modl.put_doubles(model.parameters());
  out.put_section("MODL", modl);

  ByteWriter optm;
  optm.put<std::uint64_t>(trainer_.step_count());
  optm.put_doubles(trainer_.adam_m());
  optm.put_doubles(trainer_.adam_v());
  optm.put_doubles(trainer_.ema_parameters());
  out.put_section("OPTM", optm);

  ByteWriter agrd;
  agrd.put<std::int32_t>(variational_.dim());
  agrd.put<std::int32_t>(cfg_.schedule.steps);
  agrd.put<std::int32_t>(static_cast<std::int32_t>(cfg_.variational.mode));
  agrd.put<std::int32_t>(static_cast<std::int32_t>(cfg_.variational.parametrization));
  agrd.put<std::int32_t>(variational_.slots());
  for (int s = 0; s < variational_.slots(); ++s) {
    agrd.put_doubles(variational_.parameters(s));
    agrd.put<std::uint64_t>(variational_.step_count(s));
    agrd.put<std::uint64_t>(variational_.averager(s).count());
    agrd.put_matrix(variational_.averager(s).value());
  }
  out.put_section("AGRD", agrd);

  const KernelTable table = KernelTable::build(cfg_.schedule, drift_grid());
  ByteWriter ktab;
  ktab.put<std::int32_t>(table.size());
  for (int n = 0; n < table.size(); ++n) {
    ktab.put_matrix(table.at(n).mean_map);
    ktab.put_matrix(table.at(n).cholesky);
  }
  out.put_section("KTAB", ktab);
  return out.bytes();
}

TrainingRun TrainingRun::deserialize(const std::string& bytes) {
  ByteReader in(bytes);
  if (in.remaining() < 8 ||
      in.take(4) != std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()))
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::map<std::string, std::string_view> sections;
  while (!in.done()) {
    const std::string tag(in.take(4));
    const auto len = in.get<std::uint64_t>();
    sections[tag] = in.take(len);
  }
  auto section = [&](const char* tag) {
    const auto it = sections.find(tag);
    if (it == sections.end()) throw CheckpointError(std::string("checkpoint lacks section ") + tag);
    return ByteReader(it->second);
  };

  ByteReader conf = section("CONF");
  RunConfig cfg = RunConfig::parse(conf.get_string());
  ByteReader rngs = section("RNGS");
  cfg.set_seed(rngs.get<std::uint64_t>());
  TrainingRun run(std::move(cfg));

  ByteReader stat = section("STAT");
  run.stages_done_ = static_cast<int>(stat.get<std::uint32_t>());
  if (run.stages_done_ > run.cfg_.stages) throw CheckpointError("checkpoint stage count out of range");

  ByteReader modl = section("MODL");
  ModelLayout layout;
  layout.dim = modl.get<std::int32_t>();
  layout.time_features = modl.get<std::int32_t>();
  layout.hidden = modl.get<std::int32_t>();
  layout.layers = modl.get<std::int32_t>();
  const double horizon = modl.get<double>();
  if (!(layout == run.cfg_.layout) || horizon != run.cfg_.schedule.horizon)
    throw CheckpointError("checkpoint model layout does not match its configuration");
  const std::vector<double> theta = modl.get_doubles();
  if (theta.size() != layout.parameter_count()) throw CheckpointError("checkpoint model size mismatch");
  run.trainer_.model().set_parameters(theta);

  ByteReader optm = section("OPTM");
  const auto step = optm.get<std::uint64_t>();
  auto m = optm.get_doubles();
  auto v = optm.get_doubles();
  auto ema = optm.get_doubles();
  try {
    run.trainer_.restore(step, std::move(m), std::move(v), std::move(ema));
  } catch (const DomainError& e) {
    throw CheckpointError(e.what());
  }

  ByteReader agrd = section("AGRD");
  const auto dim = agrd.get<std::int32_t>();
  const auto steps = agrd.get<std::int32_t>();
  const auto mode = agrd.get<std::int32_t>();
  const auto param = agrd.get<std::int32_t>();
  const auto slots = agrd.get<std::int32_t>();
  if (dim != run.variational_.dim() || steps != run.cfg_.schedule.steps ||
      mode != static_cast<std::int32_t>(run.cfg_.variational.mode) ||
      param != static_cast<std::int32_t>(run.cfg_.variational.parametrization) ||
      slots != run.variational_.slots())
    throw CheckpointError("checkpoint drift grid does not match its configuration");
  for (int s = 0; s < slots; ++s) {
    auto params = agrd.get_doubles();
    const auto k = agrd.get<std::uint64_t>();
    const auto avg_count = agrd.get<std::uint64_t>();
    Eigen::MatrixXd avg = agrd.get_matrix();
    run.variational_.restore_slot(s, std::move(params), k, avg_count, std::move(avg));
  }
  return run;
}

void TrainingRun::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

TrainingRun TrainingRun::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return deserialize(bytes.str());
}

}  // namespace vsdm
