#pragma once

// Binary frame codec for link messages. All integers and doubles are
// little-endian; doubles are IEEE-754 binary64.
//
//   offset  size  field
//   0       4     magic 0x54534C4B
//   4       1     version
//   5       1     kind
//   6       8     seq
//   14      8     timestamp (s)
//   22      4     payload length N
//   26      N     payload
//   26+N    4     CRC32C over bytes [0, 26+N)

#include "isru/errors.hpp"
#include "isru/link/message.hpp"

#include <boost/crc.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace isru::link {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kMagic = 0x54534C4B;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 26;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kMaxPayload = 16u << 20;

inline std::uint32_t crc32c(std::span<const std::uint8_t> data) {
  boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

namespace detail {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void boolean(bool v) { u8(v ? 1 : 0); }

  void vec3(const Vec3& v) {
    for (int i = 0; i < 3; ++i) f64(v[i]);
  }
  // Quaternion as x, y, z, w.
  void quat(const Quat& q) {
    for (int i = 0; i < 4; ++i) f64(q.coeffs()[i]);
  }
  void pose(const Pose& p) {
    vec3(p.position);
    quat(p.orientation);
  }
  void joints(const JointConfig& q) {
    if (q.size() > 255) throw MalformedFrame("encode: too many joints");
    u8(static_cast<std::uint8_t>(q.size()));
    for (Eigen::Index i = 0; i < q.size(); ++i) f64(q[i]);
  }
  void string(const std::string& s) {
    if (s.size() > 0xFFFF) throw MalformedFrame("encode: string too long");
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

 private:
  template <class T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  bool boolean() {
    const auto v = u8();
    if (v > 1) throw MalformedFrame("decode: bad boolean");
    return v == 1;
  }

  Vec3 vec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = f64();
    return v;
  }
  // Stored verbatim; encoders only ever write canonical quaternions.
  Quat quat() {
    Quat q;
    for (int i = 0; i < 4; ++i) q.coeffs()[i] = f64();
    return q;
  }
  Pose pose() {
    Pose p;
    p.position = vec3();
    p.orientation = quat();
    return p;
  }
  JointConfig joints() {
    const auto n = u8();
    JointConfig q(n);
    for (int i = 0; i < n; ++i) q[i] = f64();
    return q;
  }
  std::string string() {
    const auto n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <class E>
  E enumeration(std::uint8_t max) {
    const auto v = u8();
    if (v > max) throw MalformedFrame("decode: enum value out of range");
    return static_cast<E>(v);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw MalformedFrame("decode: payload truncated");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline void write_body(Writer& w, const PoseRef& m) { w.pose(m.pose); }
inline void write_body(Writer& w, const GripperCmd& m) { w.u8(static_cast<std::uint8_t>(m.action)); }
inline void write_body(Writer& w, const TrajectoryUplink& m) {
  const auto& t = m.trajectory;
  w.u64(t.id);
  w.u64(t.world_hash);
  w.string(t.planner);
  w.u32(static_cast<std::uint32_t>(t.waypoints.size()));
  for (const auto& wp : t.waypoints) {
    w.f64(wp.time);
    w.joints(wp.q);
  }
}
inline void write_body(Writer& w, const ExecAck& m) {
  w.u64(m.trajectory_id);
  w.u8(static_cast<std::uint8_t>(m.status));
}
inline void write_body(Writer& w, const Telemetry& m) {
  w.pose(m.ee_pose);
  w.vec3(m.wrench.force);
  w.vec3(m.wrench.torque);
  w.joints(m.joints);
  w.u8(static_cast<std::uint8_t>(m.phase));
  w.u8(static_cast<std::uint8_t>(m.gripper));
  w.boolean(m.safety_tripped);
  w.boolean(m.grasp_failed);
  w.u64(m.last_ref_seq);
  w.u64(m.exec_id);
  w.u8(static_cast<std::uint8_t>(m.exec_state));
  w.pose(m.sample_pose);
  w.f64(m.sim_time);
}
inline void write_body(Writer& w, const Engage& m) {
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.quat(m.stylus_orientation);
}
inline void write_body(Writer& w, const PhaseNotice& m) { w.u8(static_cast<std::uint8_t>(m.phase)); }

inline Body read_body(Kind kind, Reader& r) {
  switch (kind) {
    case Kind::PoseRef: return PoseRef{r.pose()};
    case Kind::GripperCmd: return GripperCmd{r.enumeration<GripperAction>(1)};
    case Kind::TrajectoryUplink: {
      TrajectoryUplink m;
      auto& t = m.trajectory;
      t.id = r.u64();
      t.world_hash = r.u64();
      t.planner = r.string();
      const auto n = r.u32();
      // Each waypoint takes at least 9 bytes; reject absurd counts before allocating.
      if (n > r.remaining() / 9) throw MalformedFrame("decode: waypoint count exceeds payload");
      t.waypoints.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        Waypoint wp;
        wp.time = r.f64();
        wp.q = r.joints();
        t.waypoints.push_back(std::move(wp));
      }
      return m;
    }
    case Kind::ExecAck: {
      ExecAck m;
      m.trajectory_id = r.u64();
      m.status = r.enumeration<ExecStatus>(3);
      return m;
    }
    case Kind::Telemetry: {
      Telemetry m;
      m.ee_pose = r.pose();
      m.wrench.force = r.vec3();
      m.wrench.torque = r.vec3();
      m.joints = r.joints();
      m.phase = r.enumeration<MissionPhase>(5);
      m.gripper = r.enumeration<Gripper>(2);
      m.safety_tripped = r.boolean();
      m.grasp_failed = r.boolean();
      m.last_ref_seq = r.u64();
      m.exec_id = r.u64();
      m.exec_state = r.enumeration<ExecState>(3);
      m.sample_pose = r.pose();
      m.sim_time = r.f64();
      return m;
    }
    case Kind::Engage: {
      Engage m;
      m.kind = r.enumeration<EngageKind>(2);
      m.stylus_orientation = r.quat();
      return m;
    }
    case Kind::PhaseNotice: return PhaseNotice{r.enumeration<MissionPhase>(5)};
  }
  throw MalformedFrame("decode: unknown message kind");
}

}  // namespace detail

inline Bytes encode(const LinkMessage& msg) {
  Bytes out;
  out.reserve(128);
  detail::Writer w(out);
  w.u32(kMagic);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(msg.kind()));
  w.u64(msg.seq);
  w.f64(msg.timestamp);
  w.u32(0);  // payload length, patched below
  std::visit([&](const auto& body) { detail::write_body(w, body); }, msg.body);
  const std::size_t payload = out.size() - kHeaderSize;
  if (payload > kMaxPayload) throw MalformedFrame("encode: payload too large");
  for (int i = 0; i < 4; ++i) out[22 + i] = static_cast<std::uint8_t>(payload >> (8 * i));
  w.u32(crc32c(out));
  return out;
}

/// Total frame size announced by a header, or 0 if fewer than kHeaderSize bytes are given.
inline std::size_t frame_size(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) return 0;
  detail::Reader r(bytes.subspan(22, 4));
  return kHeaderSize + r.u32() + kTrailerSize;
}

/// Decodes exactly one frame.
inline LinkMessage decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize + kTrailerSize) throw MalformedFrame("decode: frame shorter than header");
  detail::Reader h(bytes.first(kHeaderSize));
  if (h.u32() != kMagic) throw MalformedFrame("decode: bad magic");
  const auto version = h.u8();
  const auto kind_raw = h.u8();
  LinkMessage msg;
  msg.seq = h.u64();
  msg.timestamp = h.f64();
  const auto len = h.u32();
  if (len > kMaxPayload || bytes.size() != kHeaderSize + len + kTrailerSize)
    throw MalformedFrame("decode: length field disagrees with frame size");
  detail::Reader t(bytes.last(kTrailerSize));
  if (t.u32() != crc32c(bytes.first(kHeaderSize + len))) throw ChecksumMismatch("decode: CRC32C mismatch");
  if (version != kVersion)
    throw VersionMismatch("decode: frame version " + std::to_string(version) + ", expected " + std::to_string(kVersion));
  if (kind_raw < 1 || kind_raw > 7) throw MalformedFrame("decode: unknown message kind");
  detail::Reader p(bytes.subspan(kHeaderSize, len));
  msg.body = detail::read_body(static_cast<Kind>(kind_raw), p);
  if (p.remaining() != 0) throw MalformedFrame("decode: trailing payload bytes");
  return msg;
}

}  // namespace isru::link
