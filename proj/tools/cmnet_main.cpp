// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Operator entry points: synthesize scenarios, train, enhance WAV pairs,
// evaluate, run the five-case ablation, run gradient checks, and inspect a
// checkpoint (attention maps, selection weights, shape trace).
//
// Exit codes: 0 success, 1 internal failure, 2 input-format error,
// 3 config/checkpoint mismatch.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "cmnet/gradsuite.hpp"
#include "cmnet/train.hpp"
#include "cmnet/wav.hpp"

using json = nlohmann::json;
using namespace cmnet;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::uint64_t seed = 0;  // 0: take the config's seed
  int case_id = 0;         // 0: take the config's case
  long steps = -1;
  double tol = 1e-6;
  int verbosity = 0;
};

std::string default_out_dir() {
  const char* env = std::getenv("CMNET_OUT");
  return env && *env ? std::string(env) : std::string("out");
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config file '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw io_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

NoiseKind parse_noise(const std::string& s) {
  if (s == "white") return NoiseKind::White;
  if (s == "lowpass") return NoiseKind::Lowpass;
  throw config_error("unknown noise kind '" + s + "'");
}

NonlinKind parse_nonlin(const std::string& s) {
  if (s == "none") return NonlinKind::None;
  if (s == "hardclip") return NonlinKind::HardClip;
  if (s == "arctan") return NonlinKind::Arctan;
  throw config_error("unknown nonlinearity '" + s + "'");
}

ScenarioKind parse_kind(const std::string& s) {
  if (s == "DT") return ScenarioKind::DT;
  if (s == "ST_NE") return ScenarioKind::ST_NE;
  if (s == "ST_FE") return ScenarioKind::ST_FE;
  throw config_error("unknown scenario kind '" + s + "'");
}

ModelConfig model_from_json(const json& root, const CliOptions& cli) {
  ModelConfig cfg;
  if (root.contains("model")) {
    const json& m = root.at("model");
    if (m.value("preset", "") == "toy") cfg = ModelConfig::toy();
    if (m.contains("case")) cfg.case_id = m.at("case").get<int>();
    if (m.contains("encoder_channels")) cfg.encoder_channels = m.at("encoder_channels").get<std::vector<std::size_t>>();
    if (m.contains("decoder_channels")) cfg.decoder_channels = m.at("decoder_channels").get<std::vector<std::size_t>>();
    if (m.contains("fc_dim")) cfg.fc_dim = m.at("fc_dim").get<std::size_t>();
    if (m.contains("freq_bins")) cfg.freq_bins = m.at("freq_bins").get<std::size_t>();
    if (m.contains("seed")) cfg.seed = m.at("seed").get<std::uint64_t>();
  }
  if (cli.case_id > 0) cfg.case_id = cli.case_id;
  if (cli.seed != 0) cfg.seed = cli.seed;
  cfg.validate();
  return cfg;
}

EchoPathSpec echo_from_json(const json& s) {
  EchoPathSpec echo;
  if (s.contains("rir_seconds")) echo.rir_seconds = s.at("rir_seconds").get<double>();
  if (s.contains("rir_decay_db")) echo.rir_decay_db = s.at("rir_decay_db").get<double>();
  if (s.contains("nonlinearity")) echo.nonlinearity = parse_nonlin(s.at("nonlinearity").get<std::string>());
  if (s.contains("delay_samples")) echo.delay_samples = s.at("delay_samples").get<std::size_t>();
  return echo;
}

TrainConfig train_from_json(const json& root, const CliOptions& cli) {
  TrainConfig t;
  if (root.contains("train")) {
    const json& j = root.at("train");
    if (j.contains("steps")) t.steps = j.at("steps").get<std::size_t>();
    if (j.contains("lr")) t.lr = j.at("lr").get<double>();
    if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("clip_norm")) t.clip_norm = j.at("clip_norm").get<double>();
    if (j.contains("checkpoint_every")) t.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      if (s.contains("kinds")) {
        t.dist.kinds.clear();
        for (const auto& k : s.at("kinds")) t.dist.kinds.push_back(parse_kind(k.get<std::string>()));
      }
      if (s.contains("ser_min")) t.dist.ser_min = s.at("ser_min").get<double>();
      if (s.contains("ser_max")) t.dist.ser_max = s.at("ser_max").get<double>();
      if (s.contains("snr_choices")) t.dist.snr_choices = s.at("snr_choices").get<std::vector<double>>();
      if (s.contains("duration_s")) t.dist.duration_s = s.at("duration_s").get<double>();
      if (s.contains("noise")) t.dist.noise = parse_noise(s.at("noise").get<std::string>());
      if (s.contains("max_delay_samples")) t.dist.max_delay_samples = s.at("max_delay_samples").get<std::size_t>();
      if (s.contains("fixed")) t.dist.fixed = s.at("fixed").get<bool>();
      t.dist.echo = echo_from_json(s);
    }
  }
  if (cli.steps >= 0) t.steps = static_cast<std::size_t>(cli.steps);
  if (cli.seed != 0) t.seed = cli.seed;
  return t;
}

ScenarioSpec scenario_from_json(const json& root, const CliOptions& cli) {
  ScenarioSpec spec;
  spec.duration_s = 4.0;
  spec.ser_db = 0.0;
  spec.echo.delay_samples = 640;
  if (root.contains("synth")) {
    const json& s = root.at("synth");
    if (s.contains("kind")) spec.kind = parse_kind(s.at("kind").get<std::string>());
    if (s.contains("duration_s")) spec.duration_s = s.at("duration_s").get<double>();
    if (s.contains("ser_db")) {
      if (s.at("ser_db").is_null()) spec.ser_db.reset();
      else spec.ser_db = s.at("ser_db").get<double>();
    }
    if (s.contains("snr_db") && !s.at("snr_db").is_null()) spec.snr_db = s.at("snr_db").get<double>();
    if (s.contains("noise")) spec.noise = parse_noise(s.at("noise").get<std::string>());
    spec.echo = echo_from_json(s);
  }
  if (spec.kind != ScenarioKind::DT) spec.ser_db.reset();
  if (cli.seed != 0) spec.seed = cli.seed;
  return spec;
}

std::vector<EvalSpec> eval_from_json(const json& root) {
  double duration = 4.0;
  std::size_t num_seeds = 3;
  std::size_t delay = 400;
  if (root.contains("eval")) {
    const json& e = root.at("eval");
    if (e.contains("duration_s")) duration = e.at("duration_s").get<double>();
    if (e.contains("num_seeds")) num_seeds = e.at("num_seeds").get<std::size_t>();
    if (e.contains("delay_samples")) delay = e.at("delay_samples").get<std::size_t>();
  }
  return default_eval_specs(duration, num_seeds, delay);
}

void write_run_manifest(const std::string& path, const std::string& subcommand, std::uint64_t seed,
                        const std::string& resolved_config) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot write run manifest '" + path + "'");
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(resolved_config)));
  os << "tool " << kVersion << "\n";
  os << "subcommand " << subcommand << "\n";
  os << "seed " << seed << "\n";
  os << "config_hash " << hash << "\n";
  os << "checkpoint_format cmnet-checkpoint-v1\n";
}

int run_synth(const CliOptions& cli, const json& cfg_json) {
  ScenarioSpec spec = scenario_from_json(cfg_json, cli);
  const std::string dir = cli.out_dir;
  std::filesystem::create_directories(dir);
  Scenario sc = mix_scenario(spec);
  write_wav(dir + "/mic.wav", sc.y);
  write_wav(dir + "/nearend.wav", sc.s);
  write_wav(dir + "/farend.wav", sc.x);
  write_wav(dir + "/echo.wav", sc.d);
  write_wav(dir + "/noise.wav", sc.v);
  std::ofstream meta(dir + "/scenario.txt");
  meta << "kind " << to_string(spec.kind) << "\n";
  meta << "duration_s " << spec.duration_s << "\n";
  if (spec.ser_db) meta << "ser_db " << *spec.ser_db << "\n";
  if (spec.snr_db) meta << "snr_db " << *spec.snr_db << "\n";
  meta << "noise " << to_string(spec.noise) << "\n";
  meta << "nonlinearity " << to_string(spec.echo.nonlinearity) << "\n";
  meta << "delay_samples " << spec.echo.delay_samples << "\n";
  meta << "seed " << spec.seed << "\n";
  write_run_manifest(dir + "/run_manifest.txt", "synth", spec.seed, cfg_json.dump());
  std::cout << "wrote scenario (" << to_string(spec.kind) << ", " << spec.duration_s << " s) to " << dir
            << "\n";
  return 0;
}

int run_train(const CliOptions& cli, const json& cfg_json) {
  ModelConfig mcfg = model_from_json(cfg_json, cli);
  TrainConfig tcfg = train_from_json(cfg_json, cli);
  const std::string dir = cli.out_dir;
  std::filesystem::create_directories(dir);
  write_run_manifest(dir + "/run_manifest.txt", "train", tcfg.seed,
                     cfg_json.dump() + config_serialize(mcfg));
  ParameterStore<float> ps(mcfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res = train(mcfg, ps, tcfg, dir, [&](std::size_t step, double loss) {
    if (cli.verbosity > 0 || (step % 20 == 0))
      std::cout << "step " << step << " loss " << loss << "\n";
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained " << tcfg.steps << " steps in " << secs << " s, final loss "
            << res.loss_curve.back() << ", checkpoint " << dir << "/checkpoint_final\n";
  return 0;
}

int run_enhance(const CliOptions& cli, const std::string& mic_path, const std::string& far_path,
                const std::string& out_path) {
  if (cli.checkpoint.empty()) throw config_error("enhance needs --checkpoint");
  Waveform mic = read_wav(mic_path);
  Waveform far = read_wav(far_path);
  if (mic.sample_rate != kSampleRate || far.sample_rate != kSampleRate)
    throw io_error("inputs must be 16 kHz mono (got " + std::to_string(mic.sample_rate) + " and " +
                   std::to_string(far.sample_rate) + " Hz)");
  auto [cfg, ps] = load_checkpoint(cli.checkpoint);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = enhance(cfg, ps, mic, far);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_wav(out_path, res.out);
  write_run_manifest(out_path + ".run.txt", "enhance", cfg.seed, config_serialize(cfg));
  std::cout << "delay " << res.align.delay << " samples";
  if (res.align.no_signal) std::cout << " (no-signal)";
  else if (res.align.low_confidence) std::cout << " (low-confidence)";
  std::cout << ", real-time factor " << secs / mic.duration_s() << "\n";
  return 0;
}

int run_eval(const CliOptions& cli, const json& cfg_json) {
  if (cli.checkpoint.empty()) throw config_error("eval needs --checkpoint");
  auto [cfg, ps] = load_checkpoint(cli.checkpoint);
  auto specs = eval_from_json(cfg_json);
  if (cli.seed != 0)
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].seed_base = mix_seed(cli.seed, 100 * (i + 1));
  EvalReport rep = evaluate(cfg, ps, specs);
  const std::string dir = cli.out_dir;
  std::filesystem::create_directories(dir);
  std::ofstream(dir + "/eval_report.txt") << rep.to_text();
  std::ofstream(dir + "/eval_report.csv") << rep.to_csv();
  write_run_manifest(dir + "/run_manifest.txt", "eval", cli.seed, cfg_json.dump() + config_serialize(cfg));
  std::cout << rep.to_text();
  return 0;
}

int run_ablate(const CliOptions& cli, const json& cfg_json) {
  ModelConfig base = model_from_json(cfg_json, cli);
  TrainConfig budget = train_from_json(cfg_json, cli);
  auto specs = eval_from_json(cfg_json);
  const std::string dir = cli.out_dir;
  std::filesystem::create_directories(dir);
  write_run_manifest(dir + "/run_manifest.txt", "ablate", budget.seed,
                     cfg_json.dump() + config_serialize(base));
  AblationReport rep = ablation_run(base, budget, specs, dir);
  std::cout << rep.to_text();
  return 0;
}

int run_gradcheck(const CliOptions& cli) {
  const double tol64 = cli.tol;
  const double tol32 = std::max(1e-4, cli.tol);
  const std::uint64_t seed = cli.seed ? cli.seed : 2024;
  GradCheckReport rep = run_gradient_suite(tol64, tol32, seed);
  char line[160];
  for (const auto& e : rep.entries) {
    std::snprintf(line, sizeof line, "%-26s max_rel_err %.3e  worst %-28s %s", e.block.c_str(),
                  e.max_rel_err, e.worst_param.c_str(), e.pass ? "ok" : "FAIL");
    std::cout << line << "\n";
  }
  if (!cli.out_dir.empty()) {
    std::filesystem::create_directories(cli.out_dir);
    std::ofstream os(cli.out_dir + "/gradcheck.txt");
    for (const auto& e : rep.entries)
      os << e.block << " " << e.max_rel_err << " " << e.worst_param << " " << (e.pass ? "ok" : "FAIL")
         << "\n";
    write_run_manifest(cli.out_dir + "/run_manifest.txt", "gradcheck", seed, "gradsuite");
  }
  std::cout << (rep.all_pass() ? "gradient checks passed" : "gradient checks FAILED") << "\n";
  return rep.all_pass() ? 0 : 1;
}

int run_inspect(const CliOptions& cli, const json& cfg_json) {
  if (cli.checkpoint.empty()) throw config_error("inspect needs --checkpoint");
  auto [cfg, ps] = load_checkpoint(cli.checkpoint);
  const std::string dir = cli.out_dir;
  std::filesystem::create_directories(dir);
  ScenarioSpec spec = scenario_from_json(cfg_json, cli);
  spec.duration_s = std::min(spec.duration_s, 2.0);
  Scenario sc = mix_scenario(spec);
  CmTrace<float> trace;
  std::vector<std::string> shapes;
  enhance(cfg, ps, sc.y, sc.x, &trace, &shapes);
  std::ofstream st(dir + "/shape_trace.txt");
  for (const auto& s : shapes) st << s << "\n";
  if (trace.has_masks) {
    write_channel_mean_grid(trace.m_tp, dir + "/m_tp.txt");
    write_channel_mean_grid(trace.m_tn, dir + "/m_tn.txt");
  }
  if (trace.has_weights) {
    std::ofstream ws(dir + "/w_tp.csv");
    ws << "frame,w_tp\n";
    for (std::size_t t = 0; t < trace.w_tp.size(); ++t)
      ws << t << "," << trace.w_tp.value()[t] << "\n";
  }
  write_run_manifest(dir + "/run_manifest.txt", "inspect", spec.seed, config_serialize(cfg));
  std::cout << "inspect artifacts in " << dir << " (case " << cfg.case_id
            << (trace.has_masks ? ", masks dumped" : ", no mask block in this case") << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmnet: causal acoustic echo cancellation with a collaboration module"};
  app.require_subcommand(1);
  CliOptions cli;
  cli.out_dir = default_out_dir();

  app.add_option("--config", cli.config_path, "JSON config file");
  app.add_option("--seed", cli.seed, "override the config seed");
  app.add_option("--out", cli.out_dir, "output directory (default $CMNET_OUT or ./out)");
  app.add_option("--case", cli.case_id, "ablation case 1..5")->check(CLI::Range(1, 5));
  app.add_option("--steps", cli.steps, "training step count override");
  app.add_option("--checkpoint", cli.checkpoint, "checkpoint base path (no extension)");
  app.add_option("--tol", cli.tol, "gradient check tolerance (64-bit)");
  app.add_flag("-v,--verbose", cli.verbosity, "more progress output");

  auto* synth = app.add_subcommand("synth", "synthesize a scenario as WAV files");
  auto* train_cmd = app.add_subcommand("train", "train a model on synthetic scenarios");
  auto* enh = app.add_subcommand("enhance", "run echo cancellation on a WAV pair");
  std::string mic_path, far_path, out_path;
  enh->add_option("mic", mic_path, "microphone WAV")->required();
  enh->add_option("farend", far_path, "far-end reference WAV")->required();
  enh->add_option("output", out_path, "output WAV")->required();
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the scenario grid");
  auto* ab = app.add_subcommand("ablate", "train and evaluate all five ablation cases");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every block");
  auto* insp = app.add_subcommand("inspect", "dump attention maps, weights, and shapes");
  for (CLI::App* sub : {synth, train_cmd, enh, ev, ab, gc, insp}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const json cfg_json = load_config(cli.config_path);
    if (synth->parsed()) return run_synth(cli, cfg_json);
    if (train_cmd->parsed()) return run_train(cli, cfg_json);
    if (enh->parsed()) return run_enhance(cli, mic_path, far_path, out_path);
    if (ev->parsed()) return run_eval(cli, cfg_json);
    if (ab->parsed()) return run_ablate(cli, cfg_json);
    if (gc->parsed()) return run_gradcheck(cli);
    if (insp->parsed()) return run_inspect(cli, cfg_json);
    return 1;
  } catch (const io_error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const config_error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
