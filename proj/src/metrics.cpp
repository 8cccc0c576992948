#include "gid/metrics.hpp"

#include "gid/errors.hpp"
#include "gid/textconfig.hpp"
#include "gid/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gid::metrics {

using rot::Vec3;

namespace {

void check_pair(const Poses& pred, const Poses& gt, const kin::Skeleton& sk) {
  if (pred.size() != gt.size()) {
    throw InvalidInput("pose sequences differ in length (" + std::to_string(pred.size()) + " vs " +
                       std::to_string(gt.size()) + ")");
  }
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].theta.size() != sk.size() || gt[f].theta.size() != sk.size()) {
      throw InvalidInput("pose frame " + std::to_string(f) + " does not match the skeleton's joint count");
    }
  }
}

std::vector<Vec3> root_pinned_positions(const kin::PoseFrame& p, const kin::Skeleton& sk) {
  kin::PoseFrame q = p;
  q.translation = Vec3::Zero();
  return kin::forward_kinematics(sk, q).positions;
}

}  // namespace

std::vector<double> angular_error_per_joint(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton) {
  check_pair(pred, gt, skeleton);
  const std::size_t J = skeleton.size();
  std::vector<double> sum(J, 0.0);
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const auto a = kin::forward_kinematics(skeleton, pred[f]);
    const auto b = kin::forward_kinematics(skeleton, gt[f]);
    for (std::size_t j = 0; j < J; ++j) sum[j] += rot::geodesic_angle_deg(a.rotations[j], b.rotations[j]);
  }
  for (double& s : sum) s = pred.empty() ? 0.0 : s / static_cast<double>(pred.size());
  return sum;
}

double angular_error_deg(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton) {
  const auto per = angular_error_per_joint(pred, gt, skeleton);
  double s = 0.0;
  for (double v : per) s += v;
  return per.empty() ? 0.0 : s / static_cast<double>(per.size());
}

double positional_error_cm(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton) {
  check_pair(pred, gt, skeleton);
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const auto a = root_pinned_positions(pred[f], skeleton);
    const auto b = root_pinned_positions(gt[f], skeleton);
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]).norm();
  }
  return 100.0 * s / static_cast<double>(pred.size() * skeleton.size());
}

double jitter(const Poses& poses, const kin::Skeleton& skeleton, double rate_hz) {
  if (poses.size() < 4) throw InvalidInput("jitter needs at least 4 frames, got " + std::to_string(poses.size()));
  if (!(rate_hz > 0.0)) throw InvalidInput("jitter: rate must be positive");
  std::vector<std::vector<Vec3>> p;
  p.reserve(poses.size());
  for (const auto& f : poses) p.push_back(kin::forward_kinematics(skeleton, f).positions);
  const double k = rate_hz * rate_hz * rate_hz;
  double s = 0.0;
  for (std::size_t f = 0; f + 3 < p.size(); ++f)
    for (std::size_t j = 0; j < skeleton.size(); ++j) {
      const Vec3 d = (p[f + 3][j] - p[f][j]) - 3.0 * (p[f + 2][j] - p[f + 1][j]);
      s += d.norm() * k;
    }
  return s / static_cast<double>((p.size() - 3) * skeleton.size());
}

double imu_mae(const nn::Tensor<double>& denoised, const nn::Tensor<double>& tight) {
  return train::mae_loss(denoised, tight);
}

std::string report_csv(const std::vector<EvalReport>& rows) {
  std::string out = "label,ang_deg,pos_cm,mesh,jitter,jitter_scaled,imu_mae\n";
  for (const auto& r : rows) {
    if (r.label.find(',') != std::string::npos) throw InvalidInput("report label may not contain commas");
    out += r.label + "," + KeyValueText::format_double(r.ang_deg) + "," + KeyValueText::format_double(r.pos_cm) +
           ",not_computed," + KeyValueText::format_double(r.jitter) + "," +
           KeyValueText::format_double(r.jitter_scaled) + "," + KeyValueText::format_double(r.imu_mae) + "\n";
  }
  return out;
}

std::vector<EvalReport> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "label,ang_deg,pos_cm,mesh,jitter,jitter_scaled,imu_mae") {
    throw FormatError("report: unexpected header");
  }
  std::vector<EvalReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw FormatError("report: row has " + std::to_string(f.size()) + " fields");
    EvalReport r;
    r.label = f[0];
    try {
      r.ang_deg = std::stod(f[1]);
      r.pos_cm = std::stod(f[2]);
      r.jitter = std::stod(f[4]);
      r.jitter_scaled = std::stod(f[5]);
      r.imu_mae = std::stod(f[6]);
    } catch (const std::exception&) {
      throw FormatError("report: bad number in row " + r.label);
    }
    out.push_back(r);
  }
  return out;
}

std::string report_table(const std::vector<EvalReport>& rows, const std::vector<std::string>& joint_names) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %9s %8s %13s %11s %11s %8s\n", "label", "ang_deg", "pos_cm", "mesh",
                "jitter", "jitter/100", "imu_mae");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %9.2f %8.2f %13s %11.2f %11.3f %8.3f\n", r.label.c_str(), r.ang_deg,
                  r.pos_cm, "not_computed", r.jitter, r.jitter_scaled, r.imu_mae);
    out += buf;
  }
  bool any = false;
  for (const auto& r : rows) any = any || !r.per_joint_deg.empty();
  if (!any) return out;
  out += "\nper-joint angular error (deg)\n";
  std::snprintf(buf, sizeof buf, "%-12s", "joint");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, " %14s", r.label.c_str());
    out += buf;
  }
  out += "\n";
  for (std::size_t j = 0; j < joint_names.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%-12s", joint_names[j].c_str());
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, " %14.2f", j < r.per_joint_deg.size() ? r.per_joint_deg[j] : 0.0);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace gid::metrics
