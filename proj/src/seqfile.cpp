#include "gid/seqfile.hpp"

#include "gid/errors.hpp"
#include "gid/textconfig.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace gid::io {

using kin::ImuFrame;
using kin::PoseFrame;
using rot::Vec3;

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::tight:
      return "tight";
    case Provenance::loose:
      return "loose";
    case Provenance::denoised:
      return "denoised";
  }
  return "?";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "tight") return Provenance::tight;
  if (s == "loose") return Provenance::loose;
  if (s == "denoised") return Provenance::denoised;
  throw FormatError("unknown provenance tag '" + s + "'");
}

namespace {

void put(std::string& out, double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.*f", kDecimals, v);
  out.append(buf, static_cast<std::size_t>(n));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

struct Parsed {
  std::map<std::string, std::string> header;
  std::string columns;
  std::vector<std::vector<double>> rows;
};

double to_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v)) {
    throw FormatError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

Parsed parse_table(const std::string& text, const std::string& kind, std::size_t arity_hint = 0) {
  Parsed p;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool have_columns = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      p.header[line.substr(1, eq - 1)] = line.substr(eq + 1);
      continue;
    }
    if (!have_columns) {
      p.columns = line;
      have_columns = true;
      continue;
    }
    std::vector<double> row;
    if (arity_hint) row.reserve(arity_hint);
    for (const auto& cell : split(line, ',')) row.push_back(to_double(cell, n));
    p.rows.push_back(std::move(row));
  }
  if (p.header["format"] != kind) throw FormatError("not a " + kind + " file");
  if (p.header["version"] != std::to_string(kSequenceFormatVersion)) {
    throw FormatError(kind + ": unsupported version '" + p.header["version"] + "'");
  }
  return p;
}

const std::string& header(const Parsed& p, const std::string& key) {
  auto it = p.header.find(key);
  if (it == p.header.end()) throw FormatError("missing header field " + key);
  return it->second;
}

std::size_t header_size(const Parsed& p, const std::string& key) {
  const std::string& s = header(p, key);
  std::size_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("bad integer for " + key);
  return v;
}

void check_time(double t, double prev, std::size_t row) {
  if (row > 0 && !(t > prev)) {
    throw FormatError("timestamps must increase (row " + std::to_string(row) + ")");
  }
}

}  // namespace

std::string serialize_imu(const ImuSequence& seq) {
  const std::size_t M = seq.sensor_names.size();
  std::string out;
  out += "#format=gid-imu\n";
  out += "#version=" + std::to_string(kSequenceFormatVersion) + "\n";
  out += "#sensors=" + std::to_string(M) + "\n";
  out += "#rate_hz=" + KeyValueText::format_double(seq.rate_hz) + "\n";
  out += "#sensor_names=" + join(seq.sensor_names, ',') + "\n";
  out += "#provenance=" + to_string(seq.provenance) + "\n";
  out += "#frame=global,y_up\n";
  out += "#gravity=0," + KeyValueText::format_double(kin::kGravity.y()) + ",0\n";
  out += "#acc_feature_scale=" + KeyValueText::format_double(kin::kAccScale) + "\n";
  out += "#decimals=" + std::to_string(kDecimals) + "\n";
  std::string cols = "t";
  for (const auto& s : seq.sensor_names)
    for (const char* c : {"qw", "qx", "qy", "qz", "ax", "ay", "az"}) cols += "," + s + "." + c;
  out += cols + "\n";
  for (const auto& fr : seq.frames) {
    if (fr.sensors.size() != M) throw InvalidInput("frame sensor count does not match sensor_names");
    put(out, fr.t);
    for (const auto& r : fr.sensors) {
      for (double v : r.orientation.coeffs()) {
        out += ',';
        put(out, v);
      }
      for (int k = 0; k < 3; ++k) {
        out += ',';
        put(out, r.acc[k]);
      }
    }
    out += '\n';
  }
  return out;
}

ImuSequence parse_imu(const std::string& text) {
  const Parsed p = parse_table(text, "gid-imu");
  ImuSequence seq;
  const std::size_t M = header_size(p, "sensors");
  seq.rate_hz = std::stod(header(p, "rate_hz"));
  seq.sensor_names = M == 0 ? std::vector<std::string>{} : split(header(p, "sensor_names"), ',');
  if (seq.sensor_names.size() != M) throw FormatError("sensor_names lists " + std::to_string(seq.sensor_names.size()) + " names for " + std::to_string(M) + " sensors");
  seq.provenance = parse_provenance(header(p, "provenance"));
  seq.frames.reserve(p.rows.size());
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    if (row.size() != 1 + 7 * M) {
      throw FormatError("row " + std::to_string(i) + " has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(1 + 7 * M));
    }
    ImuFrame fr;
    fr.t = row[0];
    check_time(fr.t, i ? seq.frames.back().t : 0.0, i);
    for (std::size_t m = 0; m < M; ++m) {
      const double* q = &row[1 + 7 * m];
      const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
      if (std::abs(norm - 1.0) > 1e-6) {
        throw FormatError("row " + std::to_string(i) + " sensor " + seq.sensor_names[m] +
                          ": quaternion norm " + KeyValueText::format_double(norm));
      }
      kin::SensorReading r;
      r.orientation = rot::UnitQuaternion::from_near_unit(q[0], q[1], q[2], q[3], 1e-6);
      r.acc = Vec3(q[4], q[5], q[6]);
      fr.sensors.push_back(r);
    }
    seq.frames.push_back(std::move(fr));
  }
  return seq;
}

void save_imu(const std::string& path, const ImuSequence& seq) { write_file(path, serialize_imu(seq)); }
ImuSequence load_imu(const std::string& path) { return parse_imu(read_file(path)); }

std::string serialize_pose(const PoseSequence& seq) {
  const std::size_t J = seq.joints;
  std::string out;
  out += "#format=gid-pose\n";
  out += "#version=" + std::to_string(kSequenceFormatVersion) + "\n";
  out += "#joints=" + std::to_string(J) + "\n";
  out += "#rate_hz=" + KeyValueText::format_double(seq.rate_hz) + "\n";
  out += "#skeleton=" + seq.skeleton + "\n";
  out += "#rotation=local_axis_angle\n";
  out += "#decimals=" + std::to_string(kDecimals) + "\n";
  std::string cols = "t,tx,ty,tz";
  for (std::size_t j = 0; j < J; ++j)
    for (const char* c : {"x", "y", "z"}) cols += ",j" + std::to_string(j) + "." + c;
  out += cols + "\n";
  for (const auto& fr : seq.frames) {
    if (fr.theta.size() != J) throw InvalidInput("pose frame joint count does not match header");
    put(out, fr.t);
    for (int k = 0; k < 3; ++k) {
      out += ',';
      put(out, fr.translation[k]);
    }
    for (const auto& a : fr.theta)
      for (int k = 0; k < 3; ++k) {
        out += ',';
        put(out, a.vector()[k]);
      }
    out += '\n';
  }
  return out;
}

PoseSequence parse_pose(const std::string& text) {
  const Parsed p = parse_table(text, "gid-pose");
  PoseSequence seq;
  seq.joints = header_size(p, "joints");
  seq.rate_hz = std::stod(header(p, "rate_hz"));
  seq.skeleton = header(p, "skeleton");
  const std::size_t J = seq.joints;
  seq.frames.reserve(p.rows.size());
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    if (row.size() != 4 + 3 * J) {
      throw FormatError("row " + std::to_string(i) + " has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(4 + 3 * J));
    }
    PoseFrame fr;
    fr.t = row[0];
    check_time(fr.t, i ? seq.frames.back().t : 0.0, i);
    fr.translation = Vec3(row[1], row[2], row[3]);
    for (std::size_t j = 0; j < J; ++j) fr.theta.emplace_back(row[4 + 3 * j], row[5 + 3 * j], row[6 + 3 * j]);
    seq.frames.push_back(std::move(fr));
  }
  return seq;
}

void save_pose(const std::string& path, const PoseSequence& seq) { write_file(path, serialize_pose(seq)); }
PoseSequence load_pose(const std::string& path) { return parse_pose(read_file(path)); }

}  // namespace gid::io
