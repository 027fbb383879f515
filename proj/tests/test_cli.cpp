#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vsdm/checkpoint.hpp"
#include "vsdm/commands.hpp"
#include "vsdm/csv.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/pipeline.hpp"

using namespace vsdm;
namespace fs = std::filesystem;

namespace {

std::string tiny_config(const std::string& method = "vsdm", const std::string& extra = "") {
  return "[run]\nname = tiny\nseed = 11\n"
         "[data]\nkind = spiral\nstretch = 1, 4\n"
         "[schedule]\nsteps = 10\n"
         "[drift]\nmethod = " + method + "\nstages = 3\na_iters_per_stage = 2\nsa_batch = 16\n"
         "[model]\nhidden = 8\nlayers = 1\ntime_features = 4\n"
         "[train]\nrounds = 5\nbatch_size = 16\n"
         "[sample]\nmode = ode-euler\ncount = 50\ntrajectories = true\n"
         "[eval]\ndata_count = 200\npermutations = 20\n"
         "[kernel_check]\ninstances = 5\n" + extra;
}

// Fresh scratch directory, removed on scope exit.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) : dir(fs::temp_directory_path() / ("vsdm_cli_" + tag)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name, std::ios::binary) << text;
    return dir / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int parse_line(const std::string& text) {
  try {
    RunConfig::parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("config parsing and defaults") {
  const RunConfig c = RunConfig::parse(tiny_config());
  CHECK(c.adaptive);
  CHECK(c.schedule.steps == 10);
  CHECK(c.data.dim() == 2);
  CHECK(c.data.stretch(1) == 4.0);
  CHECK(c.train.seed == 11);
  CHECK(c.sampler.seed == 11);
  CHECK(c.sampler.mode == SamplerMode::ode_euler);
  CHECK(c.variational.zeta == 0.75);
  CHECK(c.schedule.beta_min == 0.1);
  CHECK(c.schedule.horizon == 1.0);

  const RunConfig d = RunConfig::parse("[run]\nseed = 3\n");
  CHECK(d.schedule.steps == 100);
  CHECK(d.stages == 20);
  CHECK(d.sa_iters == 100);

  const RunConfig g = RunConfig::parse("[data]\nkind = gaussian\nmean = 0, 0\ncovariance = 4, 0.5, 0.5, 1\n");
  CHECK(g.data.covariance(0, 1) == 0.5);
  CHECK(g.data.covariance(0, 0) == 4.0);

  // the canonical dump parses back to the same configuration
  for (const RunConfig& x : {c, d, g}) CHECK(RunConfig::parse(x.canonical()).canonical() == x.canonical());

  // the hash tracks content, not the output directory
  RunConfig e = c;
  e.out = "elsewhere";
  CHECK(e.hash() == c.hash());
  e.set_seed(12);
  CHECK(e.hash() != c.hash());
}

TEST_CASE("config errors carry line numbers") {
  CHECK(parse_line("[run]\nseed = 1\n\n[model]\nwidth = 3\n") == 5);
  CHECK(parse_line("[run]\nseed = 1\n[mystery]\nx = 1\n") == 3);
  CHECK(parse_line("[schedule]\nbeta_min = fast\n") == 2);
  CHECK(parse_line("[run]\nseed = -\n") == 2);
  CHECK(parse_line("[drift]\n\nmethod = ddpm\n") == 3);
  CHECK(parse_line("[data]\nkind = gaussian\nmean = 0, 0\ncovariance = 1, 2, 3\n") == 4);
  CHECK(parse_line("[run]\nseed 1\n") == 2);
  // semantic validation is not tied to a line
  CHECK(parse_line("[schedule]\nbeta_min = 5\nbeta_max = 1\n") == 0);
  CHECK_THROWS_AS(RunConfig::parse("[drift]\nlambda_min = 2\n"), ParseError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.ini"), ParseError);
}

TEST_CASE("CSV parse errors carry line numbers") {
  const auto line = [](const std::string& text) {
    try {
      parse_csv(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line("# config_hash=ab\nn,t,x_0,chain\n0,0,1.5,0\n0,0,abc,1\n") == 4);
  CHECK(line("n,t,x_0,chain\n0,0,1.5\n") == 2);
  CHECK(line("a,,b\n") == 1);
  CHECK(line("# only a comment\n") > 0);
  const CsvTable ok = parse_csv("# config_hash=ab12\nn,t,x_0,x_1,chain\n0,0,1,2,0\n0,0,3,4,1\n");
  CHECK(ok.config_hash == "ab12");
  CHECK(ok.column("x_1") == 3);
  CHECK(ok.column("y") == -1);
  const Eigen::MatrixXd pts = points_from_csv(ok);
  CHECK(pts.rows() == 2);
  CHECK(pts(1, 1) == 4.0);
}

TEST_CASE("checkpoint round trip and version check") {
  TrainingRun run(RunConfig::parse(tiny_config()));
  run.run_stage();
  const std::string bytes = run.serialize();
  CHECK(bytes.substr(0, 4) == "VSDM");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == kCheckpointVersion);

  const TrainingRun back = TrainingRun::deserialize(bytes);
  CHECK(back.config().hash() == run.config().hash());
  CHECK(back.serialize() == bytes);
  CHECK(back.stages_done() == 1);
  CHECK(back.sampling_model().checksum() == run.sampling_model().checksum());

  std::string bumped = bytes;
  const std::uint32_t next = kCheckpointVersion + 1;
  std::memcpy(bumped.data() + 4, &next, 4);
  CHECK_THROWS_AS(TrainingRun::deserialize(bumped), CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(TrainingRun::deserialize(bad_magic), CheckpointError);
  CHECK_THROWS_AS(TrainingRun::deserialize(bytes.substr(0, bytes.size() / 2)), CheckpointError);
}

TEST_CASE("resume reproduces the uninterrupted run") {
  RunConfig cfg = RunConfig::parse(tiny_config());
  cfg.variational.zeta = 0.5;  // set in code, so it must travel inside the checkpoint
  TrainingRun full(cfg);
  full.run();

  TrainingRun first(cfg);
  first.run_stage();
  first.run_stage();
  TrainingRun resumed = TrainingRun::deserialize(first.serialize());
  resumed.run();
  CHECK(resumed.finished());
  CHECK(resumed.sampling_model().checksum() == full.sampling_model().checksum());
  CHECK(resumed.serialize() == full.serialize());
  const SamplerConfig sampler{SamplerMode::sde, 0, 4, false};
  CHECK(resumed.sample(20, sampler).checksum() == full.sample(20, sampler).checksum());
}

TEST_CASE("SGM baseline keeps the drift at A = 0") {
  TrainingRun run(RunConfig::parse(tiny_config("sgm")));
  run.run();
  const DriftMatrixGrid g = run.drift_grid();
  for (int n = 0; n < g.steps(); ++n) CHECK(g.a_at(n).isZero(0.0));
  CHECK(run.sa_log().empty());
  const TrainingRun back = TrainingRun::deserialize(run.serialize());
  for (int n = 0; n < g.steps(); ++n) CHECK(back.drift_grid().a_at(n).isZero(0.0));

  TrainingRun adaptive(RunConfig::parse(tiny_config()));
  adaptive.run();
  CHECK_FALSE(adaptive.drift_grid().a_at(0).isZero(0.0));
  CHECK(adaptive.sa_log().size() == 2u * 2u);
}

TEST_CASE("full pipeline is deterministic and stamps the config hash") {
  std::string outputs[2];
  for (int rep = 0; rep < 2; ++rep) {
    Scratch s("pipeline" + std::to_string(rep));
    const fs::path cfg_path = s.write("run.ini", tiny_config());
    CommandOptions opts{cfg_path, s.dir / "out", std::nullopt, std::nullopt};
    std::ostringstream log;
    CHECK(cmd_train(opts, log) == 0);
    CHECK(cmd_sample(opts, log) == 0);
    CHECK(cmd_eval(opts, log) == 0);
    CHECK(cmd_plot(opts, log) == 0);
    const std::string hash = resolve_config(opts).hash_hex();
    for (const char* f : {"train_log.csv", "sa_log.csv", "timing.csv", "samples.csv", "trajectories.csv",
                          "results.csv"}) {
      CAPTURE(f);
      CHECK(slurp(s.dir / "out" / f).rfind("# config_hash=" + hash + "\n", 0) == 0);
    }
    CHECK(fs::exists(s.dir / "out" / "samples.svg"));
    for (const char* f : {"train_log.csv", "sa_log.csv", "samples.csv", "trajectories.csv", "results.csv"})
      outputs[rep] += slurp(s.dir / "out" / f);
    outputs[rep] += slurp(s.dir / "out" / "checkpoint.vsdm");

    const CsvTable samples = read_csv(s.dir / "out" / "samples.csv");
    CHECK(samples.rows.size() == 50u);
    const TrajectorySet traj = trajectories_from_csv(read_csv(s.dir / "out" / "trajectories.csv"));
    CHECK(traj.states.size() == 10u);

    // a different seed changes the outputs
    CommandOptions other = opts;
    other.seed = 99;
    other.out = s.dir / "other";
    CHECK(cmd_train(other, log) == 0);
    CHECK(slurp(s.dir / "other" / "checkpoint.vsdm") != slurp(s.dir / "out" / "checkpoint.vsdm"));

    // resuming from an intermediate checkpoint through the command matches
    if (rep == 0) {
      std::string text = tiny_config();
      text.replace(text.find("seed = 11"), 9, "seed = 11\ncheckpoint_every = 1");
      const fs::path ck = s.write("ck.ini", text);
      CommandOptions staged{ck, s.dir / "staged", std::nullopt, std::nullopt};
      CHECK(cmd_train(staged, log) == 0);
      CHECK(fs::exists(s.dir / "staged" / "checkpoint_stage_1.vsdm"));
      CommandOptions resume = staged;
      resume.out = s.dir / "resumed";
      resume.resume = s.dir / "staged" / "checkpoint_stage_1.vsdm";
      CHECK(cmd_train(resume, log) == 0);
      CHECK(slurp(s.dir / "resumed" / "checkpoint.vsdm") == slurp(s.dir / "staged" / "checkpoint.vsdm"));
    }
  }
  CHECK(outputs[0] == outputs[1]);
}

TEST_CASE("eval contracts") {
  Scratch s("eval");
  const fs::path cfg_path = s.write("run.ini", tiny_config());
  CommandOptions opts{cfg_path, s.dir, std::nullopt, std::nullopt};
  const RunConfig cfg = resolve_config(opts);
  std::ostringstream log;

  // data against fresh data: below the permutation threshold
  Rng rng = make_stream(5, 1);
  write_points_csv(s.dir / "samples.csv", generate(cfg.data, 200, rng), cfg.hash_hex());
  // affine trajectories
  SampleBatch line;
  line.times = Eigen::VectorXd::LinSpaced(10, 0.9, 0.0);
  for (int k = 0; k < 10; ++k) {
    Eigen::MatrixXd m(2, 3);
    for (int c = 0; c < 3; ++c) m.col(c) << 1.0 + c * line.times(k), -2.0 * line.times(k);
    line.states.push_back(m);
  }
  line.samples = line.states.back();
  write_trajectories_csv(s.dir / "trajectories.csv", line, cfg.hash_hex());
  CHECK(cmd_eval(opts, log) == 0);

  const std::string text = slurp(s.dir / "results.csv");
  CHECK(text.find("\nrun_id,metric,axis,value\n") != std::string::npos);
  std::istringstream rows(text);
  std::string row;
  double energy = -1, threshold = -1, straight_max = -1;
  while (std::getline(rows, row)) {
    const auto value = [&]() { return std::stod(row.substr(row.rfind(',') + 1)); };
    if (row.find(",energy_distance,") != std::string::npos) energy = value();
    if (row.find(",energy_threshold_95,") != std::string::npos) threshold = value();
    if (row.find(",straightness,") != std::string::npos) straight_max = std::max(straight_max, value());
  }
  CHECK(energy >= 0.0);
  CHECK(energy < threshold);
  CHECK(straight_max >= 0.0);
  CHECK(straight_max <= 1e-9);

  // dimension mismatch is refused
  write_points_csv(s.dir / "samples.csv", Eigen::MatrixXd::Zero(3, 5), cfg.hash_hex());
  CHECK_THROWS_AS(cmd_eval(opts, log), DomainError);
  // malformed samples file
  s.write("samples.csv", "n,t,x_0,x_1,chain\n0,0,1,oops,0\n");
  try {
    cmd_eval(opts, log);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("kernel-check command exit codes") {
  Scratch s("kcheck");
  std::ostringstream log;
  CommandOptions good{s.write("good.ini", tiny_config()), std::nullopt, std::nullopt, std::nullopt};
  CHECK(cmd_kernel_check(good, log) == 0);
  CHECK(log.str().find("all kernel checks passed") != std::string::npos);
  CommandOptions bad{s.write("bad.ini", tiny_config("vsdm", "corrupt_symmetrization = true\n")),
                     std::nullopt, std::nullopt, std::nullopt};
  CHECK(cmd_kernel_check(bad, log) != 0);
}
