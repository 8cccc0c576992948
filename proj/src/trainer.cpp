#include "gid/trainer.hpp"

#include "gid/errors.hpp"
#include "gid/ops.hpp"
#include "gid/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <functional>
#include <numeric>
#include <random>
#include <set>

namespace gid::train {

using nn::Parameter;
using nn::Tape;
using nn::Var;

template <typename T>
double mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mae_loss: " + nn::to_string(pred.shape()) + " vs " + nn::to_string(target.shape()));
  }
  if (pred.size() == 0) return 0.0;
  Tape<T> tape;
  tape.set_grad_enabled(false);
  const Var<T> l = nn::mae(tape.constant(pred), tape.constant(target));
  return static_cast<double>(l.value()[0]);
}

template double mae_loss(const Tensor<float>&, const Tensor<float>&);
template double mae_loss(const Tensor<double>&, const Tensor<double>&);

std::string to_string(VariantTag v) {
  switch (v) {
    case VariantTag::full:
      return "full";
    case VariantTag::no_lsd:
      return "no_lsd";
    case VariantTag::no_acf:
      return "no_acf";
    case VariantTag::no_fps:
      return "no_fps";
  }
  return "?";
}

VariantTag parse_variant_tag(const std::string& s) {
  if (s == "full") return VariantTag::full;
  if (s == "no_lsd") return VariantTag::no_lsd;
  if (s == "no_acf") return VariantTag::no_acf;
  if (s == "no_fps") return VariantTag::no_fps;
  throw ConfigError("unknown variant '" + s + "' (expected full, no_lsd, no_acf or no_fps)");
}

void TrainRun::validate() const {
  if (epochs == 0 || batch == 0) throw ConfigError("epochs and batch size must be positive");
  if (!(lr > 0.0) || !(clip > 0.0)) throw ConfigError("learning rate and clip norm must be positive");
  const std::set<std::uint64_t> tr(train_seeds.begin(), train_seeds.end());
  for (auto s : val_seeds) {
    if (tr.count(s) != 0) throw ConfigError("clip seed " + std::to_string(s) + " is in both train and val sets");
  }
}

KeyValueText TrainRun::to_text() const {
  KeyValueText kv;
  kv.set("seed", std::to_string(seed));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch", std::to_string(batch));
  kv.set("lr", lr);
  kv.set("clip", clip);
  kv.set("patience", std::to_string(patience));
  kv.set("variant", to_string(variant));
  return kv;
}

TrainRun TrainRun::from_text(const KeyValueText& kv) {
  TrainRun r;
  if (kv.has("seed")) r.seed = std::stoull(kv.get("seed"));
  r.epochs = static_cast<std::size_t>(kv.get_int("epochs", static_cast<std::int64_t>(r.epochs)));
  r.batch = static_cast<std::size_t>(kv.get_int("batch", static_cast<std::int64_t>(r.batch)));
  r.lr = kv.get_double("lr", r.lr);
  r.clip = kv.get_double("clip", r.clip);
  r.patience = static_cast<std::size_t>(kv.get_int("patience", static_cast<std::int64_t>(r.patience)));
  if (kv.has("variant")) r.variant = parse_variant_tag(kv.get("variant"));
  return r;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_mae,val_mae,lr,wallclock_s\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_mae, e.val_mae, e.lr,
                  e.wallclock_s);
    out += buf;
  }
  return out;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& t, const std::vector<std::size_t>& index) {
  if (t.shape().empty()) throw ShapeError("gather: scalar tensor");
  nn::Shape shape = t.shape();
  const std::size_t n = shape[0];
  const std::size_t per = n == 0 ? 0 : t.size() / n;
  shape[0] = index.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw InvalidInput("gather: index out of range");
    std::copy_n(t.data() + index[i] * per, per, out.data() + i * per);
  }
  return out;
}

template Tensor<float> gather(const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> gather(const Tensor<double>&, const std::vector<std::size_t>&);

namespace {

using Clock = std::chrono::steady_clock;

/// Batch loss on a fresh tape; returns the loss value after backward.
using BatchFn = std::function<double(const std::vector<std::size_t>& idx, bool train)>;

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch, std::vector<std::size_t> order) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  }
  return out;
}

template <typename T>
std::string worst_gradient(const std::vector<Parameter<T>*>& params) {
  std::string name = "(none)";
  double worst = -1.0;
  for (auto* p : params) {
    double acc = 0.0;
    for (T g : p->grad.values()) {
      const double d = static_cast<double>(g);
      if (!std::isfinite(d)) return p->name + " (non-finite)";
      acc += d * d;
    }
    if (acc > worst) {
      worst = acc;
      name = p->name;
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " (norm %.3g)", std::sqrt(worst));
  return name + buf;
}

template <typename T>
TrainResult run_loop(nn::ParameterStore<T>& store, std::size_t n_train, std::size_t n_val, const TrainRun& run,
                     const BatchFn& loss_fn, const char* what) {
  run.validate();
  if (n_train == 0) throw InsufficientData(std::string(what) + ": no training windows");
  const auto params = store.all();
  nn::Adam<T> adam(params);
  std::mt19937_64 rng(run.seed);
  const std::size_t steps_per_epoch = (n_train + run.batch - 1) / run.batch;
  const std::size_t total = steps_per_epoch * run.epochs;

  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.emplace_back(p->value.values().begin(), p->value.values().end());
  };

  std::vector<std::size_t> val_order(n_val);
  std::iota(val_order.begin(), val_order.end(), 0);
  const auto val_batches = batches(n_val, run.batch, val_order);

  TrainResult res;
  res.best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const auto t0 = Clock::now();
  std::size_t step = 0;
  std::ofstream log_file;
  if (!run.log_path.empty()) {
    log_file.open(run.log_path);
    if (!log_file) throw InvalidInput("cannot write training log " + run.log_path);
    log_file << "epoch,train_mae,val_mae,lr,wallclock_s\n";
  }

  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double epoch_lr = nn::cosine_lr(run.lr, step, total);
    double train_sum = 0.0;
    std::size_t train_count = 0;
    std::size_t b = 0;
    for (const auto& idx : batches(n_train, run.batch, order)) {
      ++b;
      adam.zero_grad();
      const double l = loss_fn(idx, true);
      if (!std::isfinite(l)) {
        throw TrainingError(std::string(what) + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + "; largest gradient in " + worst_gradient(params));
      }
      nn::clip_grad_norm(params, run.clip);
      try {
        adam.step(nn::cosine_lr(run.lr, step, total));
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(what) + ": epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                            ": " + e.what());
      }
      ++step;
      train_sum += l * static_cast<double>(idx.size());
      train_count += idx.size();
    }
    double val_sum = 0.0;
    for (const auto& idx : val_batches) val_sum += loss_fn(idx, false) * static_cast<double>(idx.size());
    const double train_mean = train_sum / static_cast<double>(train_count);
    const double val_mean = n_val == 0 ? train_mean : val_sum / static_cast<double>(n_val);

    EpochLog e;
    e.epoch = epoch;
    e.train_mae = train_mean;
    e.val_mae = val_mean;
    e.lr = epoch_lr;
    e.wallclock_s = std::chrono::duration<double>(Clock::now() - t0).count();
    res.log.push_back(e);
    if (log_file) {
      log_file << log_csv({e}).substr(std::string("epoch,train_mae,val_mae,lr,wallclock_s\n").size());
      log_file.flush();
    }
    if (run.verbose) {
      std::fprintf(stderr, "%s epoch %zu/%zu train %.5f val %.5f lr %.2e %.1fs\n", what, epoch, run.epochs,
                   train_mean, val_mean, epoch_lr, e.wallclock_s);
    }
    if (val_mean < res.best_val) {
      res.best_val = val_mean;
      res.best_epoch = epoch;
      since_best = 0;
      snapshot();
    } else if (++since_best >= run.patience) {
      res.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size() && !best.empty(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i]->value.data());
  }
  return res;
}

template <typename T>
void check_windows(const char* what, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": input " + nn::to_string(a.shape()) + " and target " +
                     nn::to_string(b.shape()) + " differ");
  }
}

template <typename T>
void check_pose(const char* what, const Tagged<T>& in, const PoseWindows<T>& t) {
  const auto& s = in.windows.shape();
  if (s.size() != 4 || t.rot.shape().size() != 4 || t.pos.shape().size() != 4 || t.rot.dim(0) != s[0] ||
      t.rot.dim(1) != s[1] || t.pos.dim(0) != s[0] || t.pos.dim(1) != s[1] || t.rot.dim(3) != 9 ||
      t.pos.dim(3) != 3) {
    throw ShapeError(std::string(what) + ": pose targets do not match the input windows");
  }
}

template <typename T>
TrainResult pose_loop(nn::PoseNet<T>& net, const Tagged<T>& input, const PoseWindows<T>& target,
                      const Tagged<T>& val_input, const PoseWindows<T>& val_target, const SkeletonArrays& sk,
                      const TrainRun& run, const char* what) {
  check_pose(what, input, target);
  if (val_input.windows.size() != 0) check_pose(what, val_input, val_target);
  std::vector<T> offsets(sk.offsets.begin(), sk.offsets.end());
  auto fn = [&](const std::vector<std::size_t>& idx, bool train) {
    const bool is_train = train;
    const Tagged<T>& in = is_train ? input : val_input;
    const PoseWindows<T>& tg = is_train ? target : val_target;
    Tape<T> tape;
    tape.set_grad_enabled(train);
    nn::PoseTargets<T> pt;
    pt.rot = gather(tg.rot, idx);
    Tensor<T> pos = gather(tg.pos, idx);
    const auto& ps = pos.shape();
    pt.pos = Tensor<T>(nn::Shape{ps[0] * ps[1], ps[2], 3}, std::vector<T>(pos.values().begin(), pos.values().end()));
    const Var<T> x = tape.constant(gather(in.windows, idx));
    const Var<T> loss = nn::pose_loss(net.forward(x, false), pt, sk.parents, offsets);
    if (train) tape.backward(loss);
    return static_cast<double>(loss.value()[0]);
  };
  const std::size_t n_val = val_input.windows.size() == 0 ? 0 : val_input.windows.dim(0);
  return run_loop<T>(net.parameters(), input.windows.dim(0), n_val, run, fn, what);
}

}  // namespace

template <typename T>
TrainResult train_gid(nn::GidNet<T>& net, const Tagged<T>& input, const Tagged<T>& target,
                      const Tagged<T>& val_input, const Tagged<T>& val_target, const TrainRun& run) {
  for (const auto* t : {&target, &val_target}) {
    if (t->tag != io::Provenance::tight) {
      throw ProvenanceError("train-gid: targets must be tight-wear data, got " + io::to_string(t->tag));
    }
  }
  for (const auto* t : {&input, &val_input}) {
    if (t->tag == io::Provenance::denoised) {
      throw ProvenanceError("train-gid: inputs must be raw loose (or tight) data, got denoised");
    }
  }
  check_windows("train-gid", input.windows, target.windows);
  check_windows("train-gid", val_input.windows, val_target.windows);
  auto fn = [&](const std::vector<std::size_t>& idx, bool train) {
    const Tagged<T>& in = train ? input : val_input;
    const Tagged<T>& tg = train ? target : val_target;
    Tape<T> tape;
    tape.set_grad_enabled(train);
    const Var<T> x = tape.constant(gather(in.windows, idx));
    const Var<T> y = tape.constant(gather(tg.windows, idx));
    const Var<T> loss = nn::mae(net.forward(x, false), y);
    if (train) tape.backward(loss);
    return static_cast<double>(loss.value()[0]);
  };
  const std::size_t n_val = val_input.windows.size() == 0 ? 0 : val_input.windows.dim(0);
  return run_loop<T>(net.parameters(), input.windows.dim(0), n_val, run, fn, "train-gid");
}

template <typename T>
TrainResult train_predictor(nn::PoseNet<T>& net, const Tagged<T>& input, const PoseWindows<T>& target,
                            const Tagged<T>& val_input, const PoseWindows<T>& val_target,
                            const SkeletonArrays& skeleton, const TrainRun& run) {
  for (const auto* t : {&input, &val_input}) {
    if (t->tag != io::Provenance::tight) {
      throw ProvenanceError("train-pose: the predictor trains on tight-wear data only, got " +
                            io::to_string(t->tag));
    }
  }
  return pose_loop(net, input, target, val_input, val_target, skeleton, run, "train-pose");
}

template <typename T>
TrainResult train_direct(nn::PoseNet<T>& net, const Tagged<T>& input, const PoseWindows<T>& target,
                         const Tagged<T>& val_input, const PoseWindows<T>& val_target,
                         const SkeletonArrays& skeleton, const TrainRun& run) {
  for (const auto* t : {&input, &val_input}) {
    if (t->tag != io::Provenance::loose) {
      throw ProvenanceError("train-direct: the direct predictor trains on loose-wear data only, got " +
                            io::to_string(t->tag));
    }
  }
  return pose_loop(net, input, target, val_input, val_target, skeleton, run, "train-direct");
}

#define GID_TRAIN_INSTANTIATE(T)                                                                                   \
  template TrainResult train_gid(nn::GidNet<T>&, const Tagged<T>&, const Tagged<T>&, const Tagged<T>&,             \
                                 const Tagged<T>&, const TrainRun&);                                               \
  template TrainResult train_predictor(nn::PoseNet<T>&, const Tagged<T>&, const PoseWindows<T>&, const Tagged<T>&, \
                                       const PoseWindows<T>&, const SkeletonArrays&, const TrainRun&);             \
  template TrainResult train_direct(nn::PoseNet<T>&, const Tagged<T>&, const PoseWindows<T>&, const Tagged<T>&,    \
                                    const PoseWindows<T>&, const SkeletonArrays&, const TrainRun&);

GID_TRAIN_INSTANTIATE(float)
GID_TRAIN_INSTANTIATE(double)

}  // namespace gid::train
