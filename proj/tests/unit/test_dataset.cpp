#include "gid/dataset.hpp"
#include "gid/errors.hpp"
#include "gid/seqfile.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace gid;

namespace {

struct Small {
  kin::Skeleton sk = kin::Skeleton::default_body();
  kin::SensorLayout layout = kin::SensorLayout::default_layout(sk);
  noise::NoiseProfiles profiles = noise::NoiseProfiles::defaults();

  data::Dataset make(std::uint64_t seed) const {
    data::GenOptions o;
    o.seed = seed;
    o.minutes = 0.5;
    o.test_minutes = 0.2;
    o.clip_seconds = 6.0;
    return data::generate(sk, layout, profiles, o);
  }
};

io::ImuSequence short_imu() {
  Small s;
  io::ImuSequence seq;
  seq.sensor_names = s.layout.names();
  seq.provenance = io::Provenance::loose;
  seq.frames = noise::corrupt(kin::tight_imu_from_motion(s.sk, s.layout, kin::synth_motion(s.sk, 3, 1.0)), s.layout,
                              s.profiles, 4);
  return seq;
}

std::string replace_line(const std::string& text, std::size_t line, const std::string& with) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  lines[line] = with;
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string line_at(const std::string& text, std::size_t line) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < line; ++i) pos = text.find('\n', pos) + 1;
  return text.substr(pos, text.find('\n', pos) - pos);
}

std::size_t first_data_line(const std::string& text) {
  std::size_t line = 0, pos = 0;
  while (text[pos] == '#' || text.compare(pos, 2, "t,") == 0) {
    pos = text.find('\n', pos) + 1;
    ++line;
  }
  return line;
}

}  // namespace

TEST(ImuFile, RoundTripIsExactOnTheDecimalGrid) {
  const auto seq = short_imu();
  const std::string text = io::serialize_imu(seq);
  const auto back = io::parse_imu(text);
  EXPECT_EQ(back.provenance, io::Provenance::loose);
  EXPECT_EQ(back.sensor_names, seq.sensor_names);
  ASSERT_EQ(back.frames.size(), seq.frames.size());
  EXPECT_EQ(io::serialize_imu(back), text);
  EXPECT_NEAR(back.frames[7].sensors[2].acc[1], seq.frames[7].sensors[2].acc[1], 1e-11);
}

TEST(ImuFile, RejectsMalformedRows) {
  const std::string text = io::serialize_imu(short_imu());
  const std::size_t first = first_data_line(text);
  EXPECT_THROW(io::parse_imu(replace_line(text, first, "0.0,1,0,0,0")), FormatError);
  // Timestamp going backwards.
  const std::string second = line_at(text, first + 1);
  EXPECT_THROW(io::parse_imu(replace_line(text, first + 1, "-1" + second.substr(second.find(',')))), FormatError);
  // Quaternion norm 1.1.
  std::string row = "0.000000000000";
  for (int m = 0; m < 6; ++m) row += ",1.1,0,0,0,0,9.81,0";
  EXPECT_THROW(io::parse_imu(replace_line(text, first, row)), FormatError);
  EXPECT_THROW(io::parse_provenance("wet"), FormatError);
}

TEST(PoseFile, RoundTripAndArity) {
  Small s;
  io::PoseSequence ps;
  ps.joints = s.sk.size();
  ps.frames = kin::synth_motion(s.sk, 8, 0.5);
  const std::string text = io::serialize_pose(ps);
  const auto back = io::parse_pose(text);
  EXPECT_EQ(io::serialize_pose(back), text);
  EXPECT_EQ(back.joints, 16u);
  EXPECT_THROW(io::parse_pose(replace_line(text, first_data_line(text), "0,0,0,0,1")), FormatError);
}

TEST(Dataset, DeterministicWithDisjointSeeds) {
  Small s;
  const auto a = s.make(7);
  const auto b = s.make(7);
  EXPECT_EQ(a.manifest, b.manifest);
  ASSERT_EQ(a.clips.size(), b.clips.size());
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    EXPECT_EQ(io::serialize_imu(a.clips[i].loose), io::serialize_imu(b.clips[i].loose));
  }
  std::set<std::uint64_t> seen;
  for (const auto& c : a.manifest.clips) EXPECT_TRUE(seen.insert(c.motion_seed).second);
  EXPECT_EQ(a.split(data::Split::train).size(), 4u);
  EXPECT_EQ(a.split(data::Split::val).size(), 1u);
  EXPECT_EQ(a.split(data::Split::test).size(), 2u);
  const auto c = s.make(8);
  EXPECT_NE(c.manifest.clips[0].motion_seed, a.manifest.clips[0].motion_seed);
}

TEST(Dataset, WriteLoadRoundTrip) {
  Small s;
  const auto ds = s.make(3);
  const auto dir = (std::filesystem::temp_directory_path() / "gid_dataset_test").string();
  std::filesystem::remove_all(dir);
  data::write_dataset(dir, ds);
  const auto back = data::load_dataset(dir);
  EXPECT_EQ(back.manifest, ds.manifest);
  ASSERT_EQ(back.clips.size(), ds.clips.size());
  EXPECT_EQ(io::serialize_pose(back.clips[1].pose), io::serialize_pose(ds.clips[1].pose));
  std::filesystem::remove_all(dir);
}

TEST(Windows, StrideHalfWindowAndPartialDropped) {
  EXPECT_EQ(data::window_starts(64, 64), (std::vector<std::size_t>{0}));
  EXPECT_EQ(data::window_starts(63, 64), (std::vector<std::size_t>{}));
  EXPECT_EQ(data::window_starts(200, 64), (std::vector<std::size_t>{0, 32, 64, 96, 128}));
  nn::Tensor<double> seq(nn::Shape{100, 2, 3});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<double>(i);
  const auto w = data::make_windows<float>({seq, seq}, 8);
  EXPECT_EQ(w.shape(), (nn::Shape{48, 8, 2, 3}));
  EXPECT_EQ(w.at({1, 0, 0, 0}), 4.0f * 6.0f);
}

TEST(Features, ReordersSensorsByName) {
  Small s;
  auto seq = short_imu();
  const auto ref = data::features(seq, s.layout);
  std::reverse(seq.sensor_names.begin(), seq.sensor_names.end());
  for (auto& f : seq.frames) std::reverse(f.sensors.begin(), f.sensors.end());
  const auto again = data::features(seq, s.layout);
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(ref[i], again[i]);
  seq.sensor_names[0] = "ankle";
  EXPECT_THROW(data::features(seq, s.layout), ConfigError);
}
