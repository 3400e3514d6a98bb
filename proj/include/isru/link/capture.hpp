#pragma once

// Capture files: every frame that crossed the simulated link, with the tick it
// was sent on and its direction.
//
//   file   := "ISRUCAP1" record*
//   record := tick i64 LE | direction u8 (0 uplink, 1 downlink) | length u32 LE | frame

#include "isru/errors.hpp"
#include "isru/link/codec.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace isru::link {

enum class Direction : std::uint8_t { Uplink = 0, Downlink = 1 };

/// An encoded frame in flight; the channel orders by seq.
struct WireFrame {
  std::uint64_t seq = 0;
  Bytes bytes;
};

inline WireFrame to_wire(const LinkMessage& m) { return {m.seq, encode(m)}; }

struct CaptureRecord {
  std::int64_t tick = 0;
  Direction direction = Direction::Uplink;
  Bytes frame;
};

inline constexpr char kCaptureMagic[8] = {'I', 'S', 'R', 'U', 'C', 'A', 'P', '1'};

class CaptureWriter {
 public:
  explicit CaptureWriter(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path.string()) {
    if (!out_) throw IoError(path_ + ": cannot open for writing");
    out_.write(kCaptureMagic, sizeof kCaptureMagic);
  }

  void write(std::int64_t tick, Direction dir, const Bytes& frame) {
    Bytes head;
    detail::Writer w(head);
    w.u64(static_cast<std::uint64_t>(tick));
    w.u8(static_cast<std::uint8_t>(dir));
    w.u32(static_cast<std::uint32_t>(frame.size()));
    out_.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    if (!out_) throw IoError(path_ + ": write failed");
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::string path_;
};

inline std::vector<CaptureRecord> read_capture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof kCaptureMagic || !std::equal(std::begin(kCaptureMagic), std::end(kCaptureMagic), data.begin()))
    throw MalformedFrame(path.string() + ": not a capture file");
  std::vector<CaptureRecord> out;
  std::span<const std::uint8_t> rest(data.data() + sizeof kCaptureMagic, data.size() - sizeof kCaptureMagic);
  while (!rest.empty()) {
    if (rest.size() < 13) throw MalformedFrame(path.string() + ": truncated record header");
    detail::Reader r(rest.first(13));
    CaptureRecord rec;
    rec.tick = static_cast<std::int64_t>(r.u64());
    const auto dir = r.u8();
    if (dir > 1) throw MalformedFrame(path.string() + ": bad direction");
    rec.direction = static_cast<Direction>(dir);
    const auto len = r.u32();
    if (rest.size() < 13 + std::size_t{len}) throw MalformedFrame(path.string() + ": truncated frame");
    rec.frame.assign(rest.begin() + 13, rest.begin() + 13 + len);
    rest = rest.subspan(13 + len);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace isru::link
