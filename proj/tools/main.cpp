// gid command-line tool: data generation, training, evaluation, ablation,
// offline denoising, streaming replay and the gradient suite.

#include "gid/checkpoint.hpp"
#include "gid/dataset.hpp"
#include "gid/errors.hpp"
#include "gid/gidnet.hpp"
#include "gid/gradsuite.hpp"
#include "gid/metrics.hpp"
#include "gid/pipeline.hpp"
#include "gid/posenet.hpp"
#include "gid/seqfile.hpp"
#include "gid/textconfig.hpp"
#include "gid/trainer.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace gid;

namespace {

struct Global {
  std::uint64_t seed = 1;
  int threads = 1;
  int precision = 32;
};

std::string join_seeds(const std::vector<std::uint64_t>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

std::vector<std::uint64_t> split_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  return out;
}

KeyValueText load_config(const std::string& path) {
  return path.empty() ? KeyValueText{} : KeyValueText::parse(read_file(path));
}

struct Loaded {
  data::Dataset ds;
  kin::Skeleton skeleton;
  kin::SensorLayout layout;
};

Loaded load_data(const std::string& dir) {
  Loaded l;
  l.ds = data::load_dataset(dir);
  const fs::path local = fs::path(dir) / l.ds.manifest.skeleton;
  l.skeleton = kin::Skeleton::load(fs::exists(local) ? local.string() : data_path(l.ds.manifest.skeleton));
  l.layout = kin::SensorLayout::default_layout(l.skeleton);
  return l;
}

template <typename T>
train::Tagged<T> imu_windows(const Loaded& l, data::Split split, io::Provenance tag, std::size_t window) {
  std::vector<nn::Tensor<double>> seqs;
  for (const auto* c : l.ds.split(split)) {
    seqs.push_back(data::features(tag == io::Provenance::tight ? c->tight : c->loose, l.layout));
  }
  return {tag, data::make_windows<T>(seqs, window)};
}

template <typename T>
train::PoseWindows<T> pose_windows(const Loaded& l, data::Split split, std::size_t window) {
  std::vector<nn::Tensor<double>> rots, poss;
  for (const auto* c : l.ds.split(split)) {
    rots.push_back(data::pose_rotations(c->pose));
    poss.push_back(data::pose_positions(c->pose, l.skeleton));
  }
  return {data::make_windows<T>(rots, window), data::make_windows<T>(poss, window)};
}

train::TrainRun make_run(const KeyValueText& cfg, const Global& g, const Loaded& l, const std::string& log_path,
                         std::size_t epochs, bool verbose) {
  train::TrainRun run = train::TrainRun::from_text(cfg);
  if (!cfg.has("seed")) run.seed = g.seed;
  if (epochs > 0) run.epochs = epochs;
  run.train_seeds = l.ds.manifest.motion_seeds(data::Split::train);
  run.val_seeds = l.ds.manifest.motion_seeds(data::Split::val);
  run.log_path = log_path;
  run.verbose = verbose;
  return run;
}

std::map<std::string, std::string> run_meta(const train::TrainRun& run, const train::TrainResult& r,
                                            const Loaded& l, const Global& g, double seconds) {
  return {{"train_seeds", join_seeds(run.train_seeds)},
          {"val_seeds", join_seeds(run.val_seeds)},
          {"dataset_seed", std::to_string(l.ds.manifest.seed)},
          {"variant", train::to_string(run.variant)},
          {"run_seed", std::to_string(run.seed)},
          {"epochs_run", std::to_string(r.log.size())},
          {"best_epoch", std::to_string(r.best_epoch)},
          {"best_val", KeyValueText::format_double(r.best_val)},
          {"precision", std::to_string(g.precision)},
          {"train_seconds", KeyValueText::format_double(seconds)}};
}

std::string default_log(const std::string& out, const std::string& log) { return log.empty() ? out + ".log.csv" : log; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- training

struct TrainArgs {
  std::string config, data, out, log, variant = "full";
  std::size_t epochs = 0;
  bool quiet = false;
};

template <typename T>
void train_gid_cmd(const TrainArgs& a, const Global& g) {
  const KeyValueText cfg = load_config(a.config);
  const Loaded l = load_data(a.data);
  nn::GidConfig gc = nn::GidConfig::from_text(cfg);
  gc.variant = nn::parse_variant(a.variant);
  if (!cfg.has("init_seed")) gc.init_seed = g.seed;
  gc.sensors = l.layout.size();
  nn::GidNet<T> net(gc);
  train::TrainRun run = make_run(cfg, g, l, default_log(a.out, a.log), a.epochs, !a.quiet);
  run.variant = train::parse_variant_tag(a.variant);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train::train_gid(net, imu_windows<T>(l, data::Split::train, io::Provenance::loose, gc.window),
                                  imu_windows<T>(l, data::Split::train, io::Provenance::tight, gc.window),
                                  imu_windows<T>(l, data::Split::val, io::Provenance::loose, gc.window),
                                  imu_windows<T>(l, data::Split::val, io::Provenance::tight, gc.window), run);
  auto meta = run_meta(run, r, l, g, seconds_since(t0));
  meta["kind"] = "gid";
  io::save(a.out, nn::gid_checkpoint(net, meta));
  std::printf("train-gid variant=%s epochs=%zu best_epoch=%zu best_val=%.6f seconds=%.1f out=%s\n",
              a.variant.c_str(), r.log.size(), r.best_epoch, r.best_val, seconds_since(t0), a.out.c_str());
}

template <typename T>
void train_pose_cmd(const TrainArgs& a, const Global& g, bool direct) {
  const KeyValueText cfg = load_config(a.config);
  const Loaded l = load_data(a.data);
  nn::PoseNetConfig pc = nn::PoseNetConfig::from_text(cfg);
  if (!cfg.has("init_seed")) pc.init_seed = data::mix_seed(g.seed, 2);
  pc.sensors = l.layout.size();
  pc.joints = l.skeleton.size();
  nn::PoseNet<T> net(pc);
  train::TrainRun run = make_run(cfg, g, l, default_log(a.out, a.log), a.epochs, !a.quiet);
  run.variant = direct ? train::VariantTag::no_fps : train::VariantTag::full;
  const auto tag = direct ? io::Provenance::loose : io::Provenance::tight;
  const train::SkeletonArrays sk{l.skeleton.parents(), l.skeleton.offsets_flat()};
  const auto t0 = std::chrono::steady_clock::now();
  const auto in = imu_windows<T>(l, data::Split::train, tag, pc.window);
  const auto val = imu_windows<T>(l, data::Split::val, tag, pc.window);
  const auto tgt = pose_windows<T>(l, data::Split::train, pc.window);
  const auto vtgt = pose_windows<T>(l, data::Split::val, pc.window);
  const auto r = direct ? train::train_direct(net, in, tgt, val, vtgt, sk, run)
                        : train::train_predictor(net, in, tgt, val, vtgt, sk, run);
  auto meta = run_meta(run, r, l, g, seconds_since(t0));
  meta["kind"] = direct ? "direct" : "predictor";
  io::save(a.out, nn::pose_checkpoint(net, meta));
  std::printf("%s epochs=%zu best_epoch=%zu best_val=%.6f seconds=%.1f out=%s\n",
              direct ? "train-direct" : "train-pose", r.log.size(), r.best_epoch, r.best_val, seconds_since(t0),
              a.out.c_str());
}

// ---------------------------------------------------------------- evaluation

template <typename T>
std::unique_ptr<nn::GidNet<T>> load_gid(const std::string& path) {
  if (path == "passthrough") return nullptr;
  return nn::gid_from_checkpoint<T>(io::load(path, nn::kGidMagic));
}

template <typename T>
std::unique_ptr<nn::PoseNet<T>> load_pose(const std::string& path) {
  return nn::pose_from_checkpoint<T>(io::load(path, nn::kPoseMagic));
}

/// Refuses evaluation clips whose motion seeds were used for training.
void check_held_out(const std::string& ckpt_path, const std::string& magic, const std::vector<std::uint64_t>& eval) {
  if (ckpt_path == "passthrough") return;
  const auto ck = io::load(ckpt_path, magic);
  const auto used = split_seeds(io::get_meta(ck.config, "train_seeds"));
  const std::set<std::uint64_t> s(used.begin(), used.end());
  for (auto e : eval) {
    if (s.count(e) != 0) {
      throw ProvenanceError("evaluation clip seed " + std::to_string(e) + " was used to train " + ckpt_path);
    }
  }
}

struct EvalArgs {
  std::string data, gid = "passthrough", pose, report, split = "test", label = "gid";
  bool table = false;
};

template <typename T>
void eval_cmd(const EvalArgs& a) {
  const Loaded l = load_data(a.data);
  const auto split = data::parse_split(a.split);
  const auto clips = l.ds.split(split);
  const auto seeds = l.ds.manifest.motion_seeds(split);
  check_held_out(a.gid, nn::kGidMagic, seeds);
  check_held_out(a.pose, nn::kPoseMagic, seeds);
  const auto gid = load_gid<T>(a.gid);
  const auto pose = load_pose<T>(a.pose);
  const auto pair = pipeline::evaluate(clips, l.skeleton, l.layout, gid.get(), *pose, a.label);
  std::vector<metrics::EvalReport> rows{pair.with_gid, pair.without_gid};
  if (!a.report.empty()) write_file(a.report, metrics::report_csv(rows));
  std::vector<std::string> names;
  for (const auto& j : l.skeleton.joints()) names.push_back(j.name);
  if (a.table) std::fputs(metrics::report_table(rows, names).c_str(), stdout);
  std::fputs(metrics::report_csv(rows).c_str(), stdout);
}

struct AblateArgs {
  std::string data, out, config, full, pose, no_lsd, no_acf, direct;
  std::size_t epochs = 0;
  bool quiet = false;
};

template <typename T>
void ablate_cmd(const AblateArgs& a, const Global& g) {
  fs::create_directories(a.out);
  auto ensure = [&](const std::string& given, const std::string& name, auto trainer) {
    if (!given.empty()) return given;
    const std::string path = (fs::path(a.out) / name).string();
    trainer(path);
    return path;
  };
  TrainArgs base{a.config, a.data, "", "", "full", a.epochs, a.quiet};
  auto gid_trainer = [&](const std::string& variant) {
    return [&, variant](const std::string& path) {
      TrainArgs t = base;
      t.out = path;
      t.variant = variant;
      train_gid_cmd<T>(t, g);
    };
  };
  auto pose_trainer = [&](bool direct) {
    return [&, direct](const std::string& path) {
      TrainArgs t = base;
      t.out = path;
      train_pose_cmd<T>(t, g, direct);
    };
  };
  const std::string full = ensure(a.full, "gid_full.ckpt", gid_trainer("full"));
  const std::string no_lsd = ensure(a.no_lsd, "gid_no_lsd.ckpt", gid_trainer("no_lsd"));
  const std::string no_acf = ensure(a.no_acf, "gid_no_acf.ckpt", gid_trainer("no_acf"));
  const std::string pose = ensure(a.pose, "pose.ckpt", pose_trainer(false));
  const std::string direct = ensure(a.direct, "direct.ckpt", pose_trainer(true));

  const Loaded l = load_data(a.data);
  const auto clips = l.ds.split(data::Split::test);
  const auto seeds = l.ds.manifest.motion_seeds(data::Split::test);
  for (const auto& [p, m] : std::vector<std::pair<std::string, std::string>>{
           {full, nn::kGidMagic}, {no_lsd, nn::kGidMagic}, {no_acf, nn::kGidMagic},
           {pose, nn::kPoseMagic}, {direct, nn::kPoseMagic}}) {
    check_held_out(p, m, seeds);
  }
  const auto predictor = load_pose<T>(pose);
  std::vector<metrics::EvalReport> rows;
  for (const auto& [label, path] : std::vector<std::pair<std::string, std::string>>{
           {"full", full}, {"no_lsd", no_lsd}, {"no_acf", no_acf}}) {
    const auto gid = load_gid<T>(path);
    rows.push_back(pipeline::evaluate(clips, l.skeleton, l.layout, gid.get(), *predictor, label).with_gid);
  }
  rows.push_back(pipeline::evaluate_direct(clips, l.skeleton, l.layout, *load_pose<T>(direct), "no_fps"));
  write_file((fs::path(a.out) / "report.csv").string(), metrics::report_csv(rows));
  std::vector<std::string> names;
  for (const auto& j : l.skeleton.joints()) names.push_back(j.name);
  write_file((fs::path(a.out) / "report.txt").string(), metrics::report_table(rows, names));
  std::fputs(metrics::report_csv(rows).c_str(), stdout);
}

// ---------------------------------------------------------------- denoise / stream

template <typename T>
void denoise_cmd(const std::string& in, const std::string& gid_path, const std::string& out) {
  const io::ImuSequence seq = io::load_imu(in);
  if (seq.provenance == io::Provenance::denoised) {
    throw ProvenanceError(in + " is already denoised");
  }
  const auto gid = load_gid<T>(gid_path);
  const kin::SensorLayout layout = kin::SensorLayout::default_layout(kin::Skeleton::default_body());
  const nn::Tensor<double> den = pipeline::denoise_sequence(gid.get(), data::features(seq, layout));
  std::vector<double> ts;
  for (const auto& f : seq.frames) ts.push_back(f.t);
  io::ImuSequence res;
  res.rate_hz = seq.rate_hz;
  res.sensor_names = layout.names();
  res.provenance = io::Provenance::denoised;
  res.frames = kin::denormalize_root_relative(den, layout, ts);
  io::save_imu(out, res);
  std::printf("denoise frames=%zu out=%s\n", res.frames.size(), out.c_str());
}

struct StreamArgs {
  std::string in, gid = "passthrough", pose, out, latency_log;
  double rate = 40.0;
  double calibrate_seconds = 0.0;
  bool no_pace = false, check_offline = false, non_causal = false;
};

template <typename T>
void stream_cmd(const StreamArgs& a) {
  const io::ImuSequence seq = io::load_imu(a.in);
  const auto gid = load_gid<T>(a.gid);
  const auto pose = load_pose<T>(a.pose);
  const kin::Skeleton skeleton = kin::Skeleton::default_body();
  const kin::SensorLayout layout = kin::SensorLayout::default_layout(skeleton);
  std::vector<kin::ImuFrame> frames = seq.frames;
  if (a.calibrate_seconds > 0.0) {
    const auto n = static_cast<std::size_t>(a.calibrate_seconds * seq.rate_hz);
    const std::vector<kin::ImuFrame> head(frames.begin(), frames.begin() + std::min(n, frames.size()));
    const auto cal = pipeline::calibrate_tpose(head, skeleton, layout, seq.rate_hz);
    frames = pipeline::apply_calibration(frames, cal);
  }
  io::ImuSequence cal_seq = seq;
  cal_seq.frames = frames;
  const nn::Tensor<double> feats =
      frames.empty() ? nn::Tensor<double>(nn::Shape{0, layout.size(), kin::kChannels}) : data::features(cal_seq, layout);
  pipeline::StreamOptions o;
  o.rate_hz = a.rate;
  o.pace = !a.no_pace;
  o.causal = !a.non_causal;
  const auto r = pipeline::stream_replay(feats, gid.get(), *pose, o);
  const std::size_t F = r.latency_ms.size();
  if (!a.latency_log.empty()) {
    std::string log = "frame,latency_ms\n";
    char buf[64];
    for (std::size_t f = 0; f < F; ++f) {
      std::snprintf(buf, sizeof buf, "%zu,%.4f\n", f, r.latency_ms[f]);
      log += buf;
    }
    write_file(a.latency_log, log);
  }
  if (!a.out.empty()) {
    io::PoseSequence ps;
    ps.rate_hz = seq.rate_hz;
    ps.joints = pose->config().joints;
    std::vector<double> ts;
    for (const auto& f : frames) ts.push_back(f.t);
    ps.frames = pipeline::to_pose_frames(r.poses, ts);
    io::save_pose(a.out, ps);
  }
  double max_dev = 0.0;
  if (a.check_offline && F > 0) {
    const auto off = pipeline::offline_sliding(feats, gid.get(), *pose, o.causal);
    const std::size_t per = off.size() / F;
    for (std::size_t i = r.warmup * per; i < off.size(); ++i) max_dev = std::max(max_dev, std::abs(off[i] - r.poses[i]));
  }
  std::printf("stream frames=%zu rate_hz=%.1f p50_ms=%.3f p99_ms=%.3f max_ms=%.3f overruns=%zu overrun_flag=%d",
              F, a.rate, r.percentile_ms(50), r.percentile_ms(99), r.percentile_ms(100), r.overruns,
              r.overrun_flag ? 1 : 0);
  if (a.check_offline) std::printf(" max_offline_dev=%.3g", max_dev);
  std::printf("\n");
  if (r.overrun_flag) {
    std::fprintf(stderr, "warning: %zu of %zu frames exceeded the %.1f ms frame period\n", r.overruns, F,
                 1000.0 / a.rate);
  }
}

int grad_check_cmd(const Global& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = nn::gradient_suite(g.seed);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::printf("%-26s probes=%zu max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.probes, r.max_rel_error,
                r.tolerance, r.passed ? "ok" : "FAIL");
    if (!r.passed || r.probes < 20) ++failed;
  }
  std::printf("grad-check checks=%zu failed=%zu seconds=%.2f\n", results.size(), failed, seconds_since(t0));
  if (failed > 0) throw TrainingError(std::to_string(failed) + " gradient checks failed");
  return 0;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  double minutes = 10.0, test_minutes = 2.0, clip_seconds = 30.0, perturb = 0.0;
  std::string profile, out;
};

void gen_data_cmd(const GenArgs& a, const Global& g) {
  const kin::Skeleton sk = kin::Skeleton::default_body();
  const kin::SensorLayout layout = kin::SensorLayout::default_layout(sk);
  noise::NoiseProfiles profiles =
      a.profile.empty() ? noise::NoiseProfiles::defaults() : noise::NoiseProfiles::load(a.profile);
  data::GenOptions o;
  o.seed = g.seed;
  o.minutes = a.minutes;
  o.test_minutes = a.test_minutes;
  o.clip_seconds = a.clip_seconds;
  o.profile_name = "noise_profile.txt";
  if (a.perturb > 0.0) profiles = profiles.perturbed(data::mix_seed(g.seed, 0x7065727475ULL), a.perturb);
  const data::Dataset ds = data::generate(sk, layout, profiles, o);
  data::write_dataset(a.out, ds);
  write_file((fs::path(a.out) / "noise_profile.txt").string(), profiles.serialize());
  write_file((fs::path(a.out) / "skeleton_default.txt").string(), sk.serialize());
  std::printf("gen-data clips=%zu train=%zu val=%zu test=%zu out=%s\n", ds.clips.size(),
              ds.split(data::Split::train).size(), ds.split(data::Split::val).size(),
              ds.split(data::Split::test).size(), a.out.c_str());
}

template <typename Fn>
void dispatch(const Global& g, Fn&& fn) {
  if (g.precision == 64) {
    fn(double{});
  } else {
    fn(float{});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Garment IMU denoising and pose estimation"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for all randomness");
  app.add_option("--threads", g.threads, "Worker threads for linear algebra")->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "Floating-point width")->check(CLI::IsMember({32, 64}));

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate paired tight/loose IMU data with poses");
  c_gen->add_option("--minutes", gen.minutes, "Train + validation minutes");
  c_gen->add_option("--test-minutes", gen.test_minutes, "Held-out test minutes");
  c_gen->add_option("--clip-seconds", gen.clip_seconds, "Clip length");
  c_gen->add_option("--profile", gen.profile, "Noise profile file")->check(CLI::ExistingFile);
  c_gen->add_option("--perturb", gen.perturb, "Scale every noise parameter by a random factor in [1-f, 1+f]")
      ->check(CLI::Range(0.0, 0.9));
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tg;
  auto* c_tg = app.add_subcommand("train-gid", "Train the denoiser");
  TrainArgs tp;
  auto* c_tp = app.add_subcommand("train-pose", "Train the pose predictor on tight data");
  TrainArgs td;
  auto* c_td = app.add_subcommand("train-direct", "Train the pose predictor directly on loose data");
  for (auto [cmd, args] : {std::pair{c_tg, &tg}, std::pair{c_tp, &tp}, std::pair{c_td, &td}}) {
    cmd->add_option("--config", args->config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--data", args->data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--out", args->out, "Checkpoint path")->required();
    cmd->add_option("--log", args->log, "Training log CSV (default <out>.log.csv)");
    cmd->add_option("--epochs", args->epochs, "Override the configured epoch count");
    cmd->add_flag("--quiet", args->quiet, "No per-epoch progress");
  }
  c_tg->add_option("--variant", tg.variant, "Model variant")->check(CLI::IsMember({"full", "no_lsd", "no_acf"}));

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate with and without the denoiser");
  c_ev->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_ev->add_option("--gid", ev.gid, "Denoiser checkpoint or 'passthrough'")->required();
  c_ev->add_option("--pose", ev.pose, "Pose predictor checkpoint")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--report", ev.report, "Report CSV path");
  c_ev->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  c_ev->add_option("--label", ev.label, "Row label");
  c_ev->add_flag("--table", ev.table, "Print the text table with per-joint errors");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Train and evaluate full, no_lsd, no_acf and no_fps");
  c_ab->add_option("--data", ab.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_ab->add_option("--out", ab.out, "Output directory")->required();
  c_ab->add_option("--config", ab.config, "key=value config file")->check(CLI::ExistingFile);
  c_ab->add_option("--epochs", ab.epochs, "Override the configured epoch count");
  c_ab->add_option("--full", ab.full, "Reuse a trained full denoiser")->check(CLI::ExistingFile);
  c_ab->add_option("--no-lsd", ab.no_lsd, "Reuse a trained no_lsd denoiser")->check(CLI::ExistingFile);
  c_ab->add_option("--no-acf", ab.no_acf, "Reuse a trained no_acf denoiser")->check(CLI::ExistingFile);
  c_ab->add_option("--pose", ab.pose, "Reuse a trained pose predictor")->check(CLI::ExistingFile);
  c_ab->add_option("--direct", ab.direct, "Reuse a trained direct predictor")->check(CLI::ExistingFile);
  c_ab->add_flag("--quiet", ab.quiet, "No per-epoch progress");

  std::string dn_in, dn_gid, dn_out;
  auto* c_dn = app.add_subcommand("denoise", "Denoise a loose IMU sequence file");
  c_dn->add_option("--in", dn_in, "Input sequence")->required()->check(CLI::ExistingFile);
  c_dn->add_option("--gid", dn_gid, "Denoiser checkpoint or 'passthrough'")->required();
  c_dn->add_option("--out", dn_out, "Output sequence")->required();

  StreamArgs st;
  auto* c_st = app.add_subcommand("stream", "Replay a sequence file as a live stream");
  c_st->add_option("--in", st.in, "Input sequence")->required()->check(CLI::ExistingFile);
  c_st->add_option("--gid", st.gid, "Denoiser checkpoint or 'passthrough'");
  c_st->add_option("--pose", st.pose, "Pose predictor checkpoint")->required()->check(CLI::ExistingFile);
  c_st->add_option("--rate", st.rate, "Frame rate in Hz")->check(CLI::PositiveNumber);
  c_st->add_option("--out", st.out, "Write per-frame poses");
  c_st->add_option("--latency-log", st.latency_log, "Write per-frame latency CSV");
  c_st->add_option("--calibrate-seconds", st.calibrate_seconds, "T-pose calibration from the first N seconds");
  c_st->add_flag("--no-pace", st.no_pace, "Feed frames as fast as possible");
  c_st->add_flag("--check-offline", st.check_offline, "Compare against batch processing after warm-up");
  c_st->add_flag("--non-causal", st.non_causal, "Disable attention masks");

  auto* c_gc = app.add_subcommand("grad-check", "Run the finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Eigen::setNbThreads(g.threads);
  try {
    if (c_gen->parsed()) gen_data_cmd(gen, g);
    if (c_tg->parsed()) dispatch(g, [&](auto t) { train_gid_cmd<decltype(t)>(tg, g); });
    if (c_tp->parsed()) dispatch(g, [&](auto t) { train_pose_cmd<decltype(t)>(tp, g, false); });
    if (c_td->parsed()) dispatch(g, [&](auto t) { train_pose_cmd<decltype(t)>(td, g, true); });
    if (c_ev->parsed()) dispatch(g, [&](auto t) { eval_cmd<decltype(t)>(ev); });
    if (c_ab->parsed()) dispatch(g, [&](auto t) { ablate_cmd<decltype(t)>(ab, g); });
    if (c_dn->parsed()) dispatch(g, [&](auto t) { denoise_cmd<decltype(t)>(dn_in, dn_gid, dn_out); });
    if (c_st->parsed()) dispatch(g, [&](auto t) { stream_cmd<decltype(t)>(st); });
    if (c_gc->parsed()) return grad_check_cmd(g);
  } catch (const gid::Error& e) {
    std::fprintf(stderr, "error: kind=%s msg=%s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: kind=internal msg=%s\n", e.what());
    return 1;
  }
  return 0;
}
