#include "isru/link/capture.hpp"
#include "isru/link/channel.hpp"
#include "isru/link/codec.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <map>

using namespace isru;
using namespace isru::link;

namespace {

/// Bit-at-a-time reflected CRC-32C (Castagnoli).
std::uint32_t crc32c_bitwise(const std::uint8_t* p, std::size_t n) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    c ^= p[i];
    for (int b = 0; b < 8; ++b) c = (c >> 1) ^ (0x82F63B78u & (0u - (c & 1u)));
  }
  return ~c;
}

std::uint64_t le(const Bytes& b, std::size_t off, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[off + i];
  return v;
}

void set_crc(Bytes& f) {
  const std::uint32_t c = crc32c_bitwise(f.data(), f.size() - 4);
  for (int i = 0; i < 4; ++i) f[f.size() - 4 + i] = static_cast<std::uint8_t>(c >> (8 * i));
}

Pose some_pose(double s) {
  return Pose::from_xyz_rpy(Vec3(0.1 * s, -0.2, 0.3 + s), Vec3(0.3, -0.1 * s, 1.2));
}

std::vector<LinkMessage> one_of_each() {
  Trajectory t;
  t.id = 77;
  t.planner = "rrt-connect";
  t.world_hash = 0x1234'5678'9abc'def0ull;
  for (int i = 0; i < 4; ++i) {
    JointConfig q(7);
    for (int j = 0; j < 7; ++j) q[j] = 0.1 * i - 0.05 * j;
    t.waypoints.push_back({0.25 * i, q});
  }
  Telemetry tm;
  tm.ee_pose = some_pose(1.0);
  tm.wrench = {Vec3(1.5, -2.0, 3.25), Vec3(-0.1, 0.2, 0.3)};
  tm.joints = JointConfig::LinSpaced(7, -1.0, 1.0);
  tm.phase = MissionPhase::Utilization;
  tm.gripper = Gripper::Holding;
  tm.safety_tripped = true;
  tm.grasp_failed = true;
  tm.last_ref_seq = 123456789012ull;
  tm.exec_id = 77;
  tm.exec_state = ExecState::Aborted;
  tm.sample_pose = some_pose(-0.5);
  tm.sim_time = 12.34;
  return {
      {1, 0.01, PoseRef{some_pose(0.2)}},
      {2, 0.02, GripperCmd{GripperAction::Close}},
      {3, 0.03, TrajectoryUplink{t}},
      {4, 0.04, ExecAck{77, ExecStatus::Rejected}},
      {5, 0.05, tm},
      {6, 0.06, Engage{EngageKind::Deny, quat_from_axis_angle(Vec3(1, 2, 3).normalized(), 0.7)}},
      {7, 0.07, PhaseNotice{MissionPhase::PostCollection}},
  };
}

}  // namespace

TEST(Crc32c, MatchesTheStandardCheckValue) {
  const std::string s = "123456789";
  const std::span<const std::uint8_t> b(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  EXPECT_EQ(crc32c(b), 0xE3069283u);
  EXPECT_EQ(crc32c_bitwise(b.data(), b.size()), 0xE3069283u);
}

TEST(Codec, EveryKindRoundTrips) {
  for (const auto& m : one_of_each()) {
    const Bytes f = encode(m);
    EXPECT_EQ(decode(f), m) << to_string(m.kind());
  }
}

TEST(Codec, HeaderFollowsTheWireLayout) {
  for (const auto& m : one_of_each()) {
    const Bytes f = encode(m);
    ASSERT_GE(f.size(), kHeaderSize + kTrailerSize);
    EXPECT_EQ(le(f, 0, 4), 0x54534C4Bu);
    EXPECT_EQ(f[4], 1);
    EXPECT_EQ(f[5], static_cast<std::uint8_t>(m.kind()));
    EXPECT_EQ(le(f, 6, 8), m.seq);
    double ts;
    const std::uint64_t raw = le(f, 14, 8);
    std::memcpy(&ts, &raw, 8);
    EXPECT_EQ(ts, m.timestamp);
    EXPECT_EQ(le(f, 22, 4), f.size() - 30);
    EXPECT_EQ(le(f, f.size() - 4, 4), crc32c_bitwise(f.data(), f.size() - 4));
    EXPECT_EQ(frame_size(f), f.size());
  }
}

TEST(Codec, PoseRefPayloadIsSevenDoubles) {
  const LinkMessage m{9, 0.5, PoseRef{some_pose(0.0)}};
  EXPECT_EQ(encode(m).size(), 26u + 7 * 8 + 4);
}

TEST(Codec, AnyFlippedBitIsCaught) {
  const Bytes f = encode(one_of_each()[4]);
  for (std::size_t i = 26; i < f.size(); i += 7) {
    Bytes g = f;
    g[i] ^= 0x10;
    EXPECT_THROW(decode(g), ChecksumMismatch) << "byte " << i;
  }
}

TEST(Codec, OtherVersionIsRejected) {
  Bytes f = encode(one_of_each()[0]);
  f[4] = 2;
  set_crc(f);
  EXPECT_THROW(decode(f), VersionMismatch);
}

TEST(Codec, MalformedFramesAreRejected) {
  const Bytes f = encode(one_of_each()[2]);
  EXPECT_THROW(decode(Bytes(f.begin(), f.begin() + 20)), MalformedFrame);
  EXPECT_THROW(decode(Bytes(f.begin(), f.end() - 1)), MalformedFrame);
  Bytes magic = f;
  magic[0] ^= 1;
  EXPECT_THROW(decode(magic), MalformedFrame);
  Bytes kind = f;
  kind[5] = 9;
  set_crc(kind);
  EXPECT_THROW(decode(kind), MalformedFrame);
  EXPECT_EQ(frame_size(Bytes(f.begin(), f.begin() + 25)), 0u);
}

// ---------------------------------------------------------------------------
// Channel

struct Tagged {
  std::uint64_t seq = 0;
  std::int64_t sent = 0;
};

TEST(Channel, FixedDelayInTicks) {
  ChannelConfig c;
  c.delay_each_way = 0.5;
  EXPECT_EQ(c.delay_ticks(), 50);
  DelayChannel<Tagged> ch(c);
  for (std::int64_t t = 0; t < 300; ++t) {
    ch.push({static_cast<std::uint64_t>(t + 1), t}, t);
    for (const auto& m : ch.poll(t)) EXPECT_EQ(t - m.sent, 50);
  }
  EXPECT_EQ(ch.stats().delivered, 250u);
  EXPECT_EQ(ch.in_flight(), 50u);
}

TEST(Channel, ZeroDelayDeliversOnTheSameTick) {
  DelayChannel<Tagged> ch;
  ch.push({1, 5}, 5);
  EXPECT_EQ(ch.poll(5).size(), 1u);
}

TEST(Channel, JitterStaysWithinItsBoundsAndReordersBySeq) {
  ChannelConfig c;
  c.delay_each_way = 0.3;
  c.jitter = 0.1;
  c.seed = 42;
  DelayChannel<Tagged> ch(c);
  std::map<std::int64_t, int> seen;
  for (std::int64_t t = 0; t < 5000; ++t) {
    ch.push({static_cast<std::uint64_t>(t + 1), t}, t);
    std::uint64_t last = 0;
    for (const auto& m : ch.poll(t)) {
      const auto lag = t - m.sent;
      ASSERT_GE(lag, 20);
      ASSERT_LE(lag, 40);
      ++seen[lag];
      EXPECT_GT(m.seq, last);  // same-tick deliveries come out in seq order
      last = m.seq;
    }
  }
  EXPECT_EQ(seen.size(), 21u);
}

TEST(Channel, LossRateMatchesTheProbability) {
  ChannelConfig c;
  c.loss_probability = 0.2;
  c.seed = 7;
  DelayChannel<Tagged> ch(c);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ch.push({static_cast<std::uint64_t>(i + 1), 0}, 0);
  const double rate = static_cast<double>(ch.stats().dropped) / n;
  EXPECT_NEAR(rate, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / n));
  EXPECT_EQ(ch.stats().dropped + ch.in_flight(), static_cast<std::uint64_t>(n));
}

TEST(Channel, SameSeedSameSchedule) {
  ChannelConfig c;
  c.delay_each_way = 0.2;
  c.jitter = 0.05;
  c.loss_probability = 0.1;
  c.seed = 99;
  DelayChannel<Tagged> a(c), b(c);
  for (int i = 0; i < 2000; ++i) ASSERT_EQ(a.push({std::uint64_t(i + 1), i}, i), b.push({std::uint64_t(i + 1), i}, i));
}

TEST(Channel, BadConfigIsRejected) {
  ChannelConfig c;
  c.delay_each_way = 0.1;
  c.jitter = 0.2;
  EXPECT_THROW(DelayChannel<Tagged>{c}, BadConfig);
  c = {};
  c.loss_probability = 1.5;
  EXPECT_THROW(DelayChannel<Tagged>{c}, BadConfig);
  c = {};
  c.delay_each_way = -1.0;
  EXPECT_THROW(DelayChannel<Tagged>{c}, BadConfig);
}

// ---------------------------------------------------------------------------
// Capture

TEST(Capture, RoundTripsFramesTicksAndDirections) {
  const auto path = std::filesystem::temp_directory_path() / "isru_link_capture_test.cap";
  const auto msgs = one_of_each();
  {
    CaptureWriter w(path);
    for (std::size_t i = 0; i < msgs.size(); ++i)
      w.write(static_cast<std::int64_t>(10 * i), i % 2 ? Direction::Downlink : Direction::Uplink, encode(msgs[i]));
  }
  const auto recs = read_capture(path);
  ASSERT_EQ(recs.size(), msgs.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    EXPECT_EQ(recs[i].tick, static_cast<std::int64_t>(10 * i));
    EXPECT_EQ(recs[i].direction, i % 2 ? Direction::Downlink : Direction::Uplink);
    EXPECT_EQ(decode(recs[i].frame), msgs[i]);
  }
  std::filesystem::remove(path);
}

TEST(Capture, TruncatedOrForeignFilesAreRejected) {
  const auto path = std::filesystem::temp_directory_path() / "isru_link_capture_bad.cap";
  {
    CaptureWriter w(path);
    w.write(1, Direction::Uplink, encode(one_of_each()[0]));
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(read_capture(path), MalformedFrame);
  {
    std::ofstream(path, std::ios::binary) << "NOTACAPTURE";
  }
  EXPECT_THROW(read_capture(path), MalformedFrame);
  std::filesystem::remove(path);
  EXPECT_THROW(read_capture(path), IoError);
}
