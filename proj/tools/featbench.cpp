// featbench: desk-scale benchmark and analysis harness for the feature-memory
// library. Every subcommand is deterministic in --seed except wall-clock
// latency columns; pass --timing to run-video to include real latencies.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "featmem/error.hpp"
#include "featmem/experiments.hpp"
#include "featmem/pipeline.hpp"
#include "featmem/stream_io.hpp"
#include "featmem/synthgen.hpp"

namespace {

using namespace featmem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for writing: " + path);
  f << text;
  if (!f) throw Error("failed writing file: " + path);
}

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

/// key=value lines for the given subcommand's long options, in file order with
/// later duplicates replacing earlier ones. Keys already set on the command
/// line are dropped, so flags override the file.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path,
                                                                  const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trimmed(line);
    if (text.empty() || text.front() == '#' || text.front() == ';') continue;
    if (text.front() == '[')
      throw Error("config file line " + std::to_string(line_no) + ": sections are not supported");
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw Error("config file line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trimmed(text.substr(0, eq));
    std::string value = trimmed(text.substr(eq + 1));
    if (key.empty())
      throw Error("config file line " + std::to_string(line_no) + ": expected key=value");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    const CLI::Option* op = sub.get_option_no_throw("--" + key);
    if (op == nullptr)
      throw Error("config file line " + std::to_string(line_no) + ": unknown option: " + key);
    if (op->count() > 0) continue;
    auto existing = std::find_if(entries.begin(), entries.end(),
                                 [&](const auto& e) { return e.first == key; });
    if (existing != entries.end())
      existing->second = value;
    else
      entries.emplace_back(key, value);
  }
  return entries;
}

struct StreamOpts {
  std::size_t frames = 40;
  std::size_t dim = 64;
  std::size_t classes = 10;
  std::size_t pix_per_frame = 100;
  std::size_t ins_per_frame = 75;
  double rho = 0.0;
  double noise_sigma = 0.1;
  double score_spread = 0.1;
  double centroid_scale = 1.0;
  std::string score_model = "uniform";
};

void add_stream_opts(CLI::App* cmd, StreamOpts& o) {
  cmd->add_option("--frames", o.frames, "Frames per video")->capture_default_str();
  cmd->add_option("--dim", o.dim, "Feature dimension")->capture_default_str();
  cmd->add_option("--classes", o.classes, "Number of classes")->capture_default_str();
  cmd->add_option("--pix-per-frame", o.pix_per_frame, "Pixel features per frame")
      ->capture_default_str();
  cmd->add_option("--ins-per-frame", o.ins_per_frame, "Instance features per frame")
      ->capture_default_str();
  cmd->add_option("--rho", o.rho, "Temporal redundancy in [0,1]")->capture_default_str();
  cmd->add_option("--noise-sigma", o.noise_sigma, "Per-coordinate noise std")
      ->capture_default_str();
  cmd->add_option("--score-spread", o.score_spread, "Frame-correlated score jitter")
      ->capture_default_str();
  cmd->add_option("--centroid-scale", o.centroid_scale, "Class centroid scale")
      ->capture_default_str();
  cmd->add_option("--score-model", o.score_model, "Score model")
      ->check(CLI::IsMember({"uniform", "frame"}))
      ->capture_default_str();
}

StreamSpec to_stream_spec(const StreamOpts& o, std::uint64_t seed) {
  StreamSpec s;
  s.n_frames = o.frames;
  s.d = o.dim;
  s.n_classes = o.classes;
  s.centroid_scale = o.centroid_scale;
  s.pixel_per_frame = o.pix_per_frame;
  s.instance_per_frame = o.ins_per_frame;
  s.noise_sigma = o.noise_sigma;
  s.redundancy_rho = o.rho;
  s.score_model = o.score_model == "frame" ? ScoreModel::FrameCorrelated
                                           : ScoreModel::UniformRandom;
  s.score_spread = o.score_spread;
  s.seed = seed;
  return s;
}

struct RuntimeOpts {
  std::uint64_t seed = 0;
  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t n_key = 256;
  std::vector<std::size_t> grid = {4000, 8000, 16000, 32000, 64000};
  std::size_t reps = 5;
  std::size_t queries = 16;
  std::string strategy = "random";
  unsigned threads = 1;
  std::size_t mem_budget_mb = 4096;
  std::string out = "runtime_vs_nm.csv";
};

struct NkSweepOpts {
  std::uint64_t seed = 0;
  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t n_mem = 24000;
  std::vector<std::size_t> grid = {32, 128, 512, 2048};
  std::size_t reps = 5;
  std::size_t queries = 200;
  std::size_t classes = 10;
  std::string strategy = "random";
  unsigned threads = 1;
  double alpha = 0.5;
  double qk_gain = 2.0;
  double query_sigma = 0.5;
  std::string out = "nk_sweep.csv";
};

struct DiversityOpts {
  std::uint64_t seed = 0;
  std::size_t n_key = 200;
  std::size_t reps = 30;
  StreamOpts stream;
  std::string out = "diversity.csv";
};

struct UpdatePolicyOpts {
  std::uint64_t seed = 0;
  std::size_t n_mem = 2000;
  StreamOpts stream;
  std::string out = "update_policy.csv";
};

struct QualityProxyOpts {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t heads = 1;
  std::size_t n_key = 256;
  std::size_t classes = 10;
  std::size_t exemplars = 100;
  std::size_t queries = 200;
  std::string strategy = "random";
  unsigned threads = 1;
  double alpha = 0.5;
  double qk_gain = 2.0;
  double query_sigma = 0.5;
  std::string out = "quality_proxy.csv";
};

struct RunVideoOpts {
  std::uint64_t seed = 0;
  std::size_t heads = 4;
  std::size_t n_mem = 24000;
  std::size_t n_key = 2000;
  std::size_t n_pix = 1;
  std::size_t n_ins = 2;
  std::size_t u_pix = 100;
  std::size_t u_ins = 75;
  std::string strategy = "random";
  std::string update = "feature";
  std::string scope = "video";
  bool offline = false;
  bool timing = false;
  unsigned threads = 1;
  std::string stream_path;
  std::string snapshot_out;
  StreamOpts stream;
  std::string out = "run_video.csv";
};

struct GenStreamOpts {
  std::uint64_t seed = 0;
  StreamOpts stream;
  std::string out = "stream.jsonl";
};

int cmd_runtime(const RuntimeOpts& o) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::RuntimeVsNm;
  spec.seed = o.seed;
  spec.dim = o.dim;
  spec.heads = o.heads;
  spec.n_key = o.n_key;
  spec.grid = o.grid;
  spec.repetitions = o.reps;
  spec.n_queries = o.queries;
  spec.strategy = parse_strategy(o.strategy);
  spec.threads = o.threads;
  spec.mem_budget_mb = o.mem_budget_mb;
  write_text(o.out, to_csv(run_runtime_vs_nm(spec)));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_nk_sweep(const NkSweepOpts& o) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::NkSweep;
  spec.seed = o.seed;
  spec.dim = o.dim;
  spec.heads = o.heads;
  spec.n_mem = o.n_mem;
  spec.grid = o.grid;
  spec.repetitions = o.reps;
  spec.n_queries = o.queries;
  spec.stream.n_classes = o.classes;
  spec.strategy = parse_strategy(o.strategy);
  spec.threads = o.threads;
  spec.alpha = o.alpha;
  spec.qk_gain = o.qk_gain;
  spec.query_sigma = o.query_sigma;
  write_text(o.out, to_csv(run_nk_sweep(spec)));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_diversity(const DiversityOpts& o) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::Diversity;
  spec.seed = o.seed;
  spec.n_key = o.n_key;
  spec.repetitions = o.reps;
  spec.stream = to_stream_spec(o.stream, o.seed);
  write_text(o.out, to_csv(run_diversity(spec)));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_update_policy(const UpdatePolicyOpts& o) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::UpdatePolicy;
  spec.seed = o.seed;
  spec.n_mem = o.n_mem;
  spec.stream = to_stream_spec(o.stream, o.seed);
  write_text(o.out, to_csv(run_update_policy(spec)));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_quality_proxy(const QualityProxyOpts& o) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::QualityProxy;
  spec.seed = o.seed;
  spec.dim = o.dim;
  spec.heads = o.heads;
  spec.n_key = o.n_key;
  spec.stream.n_classes = o.classes;
  spec.exemplars_per_class = o.exemplars;
  spec.n_queries = o.queries;
  spec.strategy = parse_strategy(o.strategy);
  spec.threads = o.threads;
  spec.alpha = o.alpha;
  spec.qk_gain = o.qk_gain;
  spec.query_sigma = o.query_sigma;
  write_text(o.out, to_csv(run_quality_proxy(spec)));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_run_video(const RunVideoOpts& o) {
  std::vector<FrameFeatures> frames;
  if (!o.stream_path.empty()) {
    frames = read_stream_jsonl(o.stream_path);
  } else {
    frames = generate_stream(to_stream_spec(o.stream, o.seed));
  }

  // The feature dimension comes from the stream itself when it has features.
  std::size_t d = o.stream.dim;
  for (const auto& frame : frames) {
    if (!frame.pixel_features.empty()) {
      d = frame.pixel_features.front().feature.dim();
      break;
    }
    if (!frame.instance_features.empty()) {
      d = frame.instance_features.front().feature.dim();
      break;
    }
  }

  PipelineConfig config{GeoParams::random(d, o.heads, derive_seed(o.seed, 20)),
                        GeoParams::random(d, o.heads, derive_seed(o.seed, 21))};
  config.pixel_bank.capacity = o.n_mem;
  config.pixel_bank.n_k = o.n_key;
  config.pixel_bank.strategy = parse_strategy(o.strategy);
  config.pixel_bank.scope = parse_scope(o.scope);
  config.pixel_bank.update_policy = o.update == "frame"
                                        ? UpdatePolicy::frame_wise()
                                        : UpdatePolicy::feature_wise(parse_strategy(o.strategy));
  config.pixel_bank.expected_level = FeatureLevel::Pixel;
  config.instance_bank = config.pixel_bank;
  config.instance_bank.expected_level = FeatureLevel::Instance;
  config.n_pix = o.n_pix;
  config.n_ins = o.n_ins;
  config.offline_test = o.offline;
  config.u_pix = o.u_pix;
  config.u_ins = o.u_ins;
  config.seed = o.seed;
  config.threads = o.threads;

  MemoryBank pixel_bank(config.pixel_bank);
  MemoryBank instance_bank(config.instance_bank);
  SeededRng rng(config.seed);
  const std::vector<FrameResult> results =
      run_video(frames, config, pixel_bank, instance_bank, rng);

  write_frame_results_csv(results, o.out, o.timing);
  std::cout << "wrote " << o.out << "\n";
  if (!o.snapshot_out.empty()) {
    instance_bank.save_snapshot(o.snapshot_out);
    std::cout << "wrote " << o.snapshot_out << "\n";
  }
  return 0;
}

int cmd_gen_stream(const GenStreamOpts& o) {
  const std::vector<FrameFeatures> frames = generate_stream(to_stream_spec(o.stream, o.seed));
  write_stream_jsonl(frames, o.out);
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-memory benchmarks: sampled key sets, eviction policies, enhancement"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_common = [&config_path](CLI::App* cmd, std::uint64_t& seed, std::string& out) {
    cmd->add_option("--config", config_path, "Config file (key=value); command-line flags win");
    cmd->add_option("--seed", seed, "Run seed")->capture_default_str();
    cmd->add_option("--out", out, "Output path")->capture_default_str();
  };
  auto add_strategy = [](CLI::App* cmd, std::string& strategy) {
    cmd->add_option("--strategy", strategy, "Sampling strategy")
        ->check(CLI::IsMember({"random", "score", "freq"}))
        ->capture_default_str();
  };
  auto add_threads = [](CLI::App* cmd, unsigned& threads) {
    cmd->add_option("--threads", threads, "Query-enhancement worker threads")
        ->capture_default_str();
  };

  RuntimeOpts runtime_opts;
  CLI::App* runtime = app.add_subcommand(
      "runtime-vs-nm", "Key-set construction cost across memory sizes, sampled vs. concatenated");
  add_common(runtime, runtime_opts.seed, runtime_opts.out);
  add_strategy(runtime, runtime_opts.strategy);
  add_threads(runtime, runtime_opts.threads);
  runtime->add_option("--dim", runtime_opts.dim, "Feature dimension")->capture_default_str();
  runtime->add_option("--heads", runtime_opts.heads, "Attention heads")->capture_default_str();
  runtime->add_option("--n-key", runtime_opts.n_key, "Key-set size")->capture_default_str();
  runtime->add_option("--grid", runtime_opts.grid, "Memory sizes to sweep")
      ->delimiter(',')
      ->capture_default_str();
  runtime->add_option("--reps", runtime_opts.reps, "Timed repetitions")->capture_default_str();
  runtime->add_option("--queries", runtime_opts.queries, "Queries per repetition")
      ->capture_default_str();
  runtime->add_option("--mem-budget-mb", runtime_opts.mem_budget_mb,
                      "Emulated memory budget; larger runs emit OOM rows")
      ->capture_default_str();

  NkSweepOpts nk_opts;
  CLI::App* nk = app.add_subcommand(
      "nk-sweep", "Latency and denoising quality across key-set sizes at fixed memory size");
  add_common(nk, nk_opts.seed, nk_opts.out);
  add_strategy(nk, nk_opts.strategy);
  add_threads(nk, nk_opts.threads);
  nk->add_option("--dim", nk_opts.dim, "Feature dimension")->capture_default_str();
  nk->add_option("--heads", nk_opts.heads, "Attention heads")->capture_default_str();
  nk->add_option("--n-mem", nk_opts.n_mem, "Memory capacity")->capture_default_str();
  nk->add_option("--grid", nk_opts.grid, "Key-set sizes to sweep")
      ->delimiter(',')
      ->capture_default_str();
  nk->add_option("--reps", nk_opts.reps, "Timed repetitions")->capture_default_str();
  nk->add_option("--queries", nk_opts.queries, "Evaluation queries")->capture_default_str();
  nk->add_option("--classes", nk_opts.classes, "Number of classes")->capture_default_str();
  nk->add_option("--alpha", nk_opts.alpha, "Residual mix weight")->capture_default_str();
  nk->add_option("--qk-gain", nk_opts.qk_gain, "Similarity gain")->capture_default_str();
  nk->add_option("--query-sigma", nk_opts.query_sigma, "Query noise std")->capture_default_str();

  DiversityOpts div_opts;
  div_opts.stream.dim = 32;
  div_opts.stream.pix_per_frame = 0;
  div_opts.stream.ins_per_frame = 50;
  div_opts.stream.rho = 0.95;
  div_opts.stream.score_model = "frame";
  CLI::App* div = app.add_subcommand(
      "diversity", "Frame entropy of key sets per sampling strategy on a redundant stream");
  add_common(div, div_opts.seed, div_opts.out);
  div->add_option("--n-key", div_opts.n_key, "Key-set size")->capture_default_str();
  div->add_option("--reps", div_opts.reps, "Trials")->capture_default_str();
  add_stream_opts(div, div_opts.stream);

  UpdatePolicyOpts up_opts;
  up_opts.stream.frames = 160;
  up_opts.stream.dim = 8;
  up_opts.stream.pix_per_frame = 0;
  up_opts.stream.ins_per_frame = 50;
  CLI::App* up = app.add_subcommand(
      "update-policy", "Distinct visible frames over time per eviction policy and scope");
  add_common(up, up_opts.seed, up_opts.out);
  up->add_option("--n-mem", up_opts.n_mem, "Memory capacity")->capture_default_str();
  add_stream_opts(up, up_opts.stream);

  QualityProxyOpts qp_opts;
  CLI::App* qp = app.add_subcommand(
      "quality-proxy", "Nearest-centroid metrics for raw vs. enhanced noisy queries");
  add_common(qp, qp_opts.seed, qp_opts.out);
  add_strategy(qp, qp_opts.strategy);
  add_threads(qp, qp_opts.threads);
  qp->add_option("--dim", qp_opts.dim, "Feature dimension")->capture_default_str();
  qp->add_option("--heads", qp_opts.heads, "Attention heads")->capture_default_str();
  qp->add_option("--n-key", qp_opts.n_key, "Key-set size")->capture_default_str();
  qp->add_option("--classes", qp_opts.classes, "Number of classes")->capture_default_str();
  qp->add_option("--exemplars", qp_opts.exemplars, "Exemplars per class")->capture_default_str();
  qp->add_option("--queries", qp_opts.queries, "Evaluation queries")->capture_default_str();
  qp->add_option("--alpha", qp_opts.alpha, "Residual mix weight")->capture_default_str();
  qp->add_option("--qk-gain", qp_opts.qk_gain, "Similarity gain")->capture_default_str();
  qp->add_option("--query-sigma", qp_opts.query_sigma, "Query noise std")->capture_default_str();

  RunVideoOpts rv_opts;
  CLI::App* rv = app.add_subcommand("run-video", "Per-frame enhancement loop over one stream");
  add_common(rv, rv_opts.seed, rv_opts.out);
  add_strategy(rv, rv_opts.strategy);
  add_threads(rv, rv_opts.threads);
  rv->add_option("--heads", rv_opts.heads, "Attention heads")->capture_default_str();
  rv->add_option("--n-mem", rv_opts.n_mem, "Memory capacity per bank")->capture_default_str();
  rv->add_option("--n-key", rv_opts.n_key, "Key-set size")->capture_default_str();
  rv->add_option("--n-pix", rv_opts.n_pix, "Pixel enhancement depth")->capture_default_str();
  rv->add_option("--n-ins", rv_opts.n_ins, "Instance enhancement depth")->capture_default_str();
  rv->add_option("--u-pix", rv_opts.u_pix, "Pixel features inserted per frame")
      ->capture_default_str();
  rv->add_option("--u-ins", rv_opts.u_ins, "Instance features inserted per frame")
      ->capture_default_str();
  rv->add_option("--update", rv_opts.update, "Eviction policy")
      ->check(CLI::IsMember({"feature", "frame"}))
      ->capture_default_str();
  rv->add_option("--scope", rv_opts.scope, "Memory scope")
      ->check(CLI::IsMember({"video", "class"}))
      ->capture_default_str();
  rv->add_flag("--offline", rv_opts.offline, "Process frames in seeded shuffled order");
  rv->add_flag("--timing", rv_opts.timing, "Write real latencies instead of zeros");
  rv->add_option("--stream", rv_opts.stream_path, "Input stream JSONL (generated when absent)");
  rv->add_option("--snapshot-out", rv_opts.snapshot_out, "Instance-bank snapshot path");
  add_stream_opts(rv, rv_opts.stream);

  GenStreamOpts gs_opts;
  gs_opts.out = "stream.jsonl";
  CLI::App* gs = app.add_subcommand("gen-stream", "Write a synthetic stream as JSONL");
  add_common(gs, gs_opts.seed, gs_opts.out);
  add_stream_opts(gs, gs_opts.stream);

  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      // Inject the file's unset keys as --key=value and parse again, so config
      // values pass through the same validators as command-line flags.
      const CLI::App* sub = app.get_subcommands().front();
      std::vector<std::pair<std::string, std::string>> entries;
      try {
        entries = read_config_file(config_path, *sub);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
      std::vector<std::string> args(argv + 1, argv + argc);
      for (const auto& [key, value] : entries) args.push_back("--" + key + "=" + value);
      std::reverse(args.begin(), args.end());
      app.parse(args);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const int code = e.get_exit_code();
    return code == 0 ? 2 : code;
  }

  try {
    if (runtime->parsed()) return cmd_runtime(runtime_opts);
    if (nk->parsed()) return cmd_nk_sweep(nk_opts);
    if (div->parsed()) return cmd_diversity(div_opts);
    if (up->parsed()) return cmd_update_policy(up_opts);
    if (qp->parsed()) return cmd_quality_proxy(qp_opts);
    if (rv->parsed()) return cmd_run_video(rv_opts);
    if (gs->parsed()) return cmd_gen_stream(gs_opts);
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
