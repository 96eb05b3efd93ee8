// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal RIFF WAV I/O: mono PCM16 or float32 in, PCM16 out (clipped at +-1).

#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>

#include "cmnet/signal.hpp"

namespace cmnet {

namespace detail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void wr_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void wr_u16(std::ofstream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open wav file '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw io_error("'" + path + "' is not a RIFF WAVE file");
  std::size_t pos = 12;
  std::uint16_t fmt = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = detail::rd_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + len > buf.size()) throw io_error("truncated wav chunk in '" + path + "'");
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (len < 16) throw io_error("bad fmt chunk in '" + path + "'");
      fmt = detail::rd_u16(body);
      channels = detail::rd_u16(body + 2);
      rate = detail::rd_u32(body + 4);
      bits = detail::rd_u16(body + 14);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data) throw io_error("wav file '" + path + "' has no data chunk");
  if (channels != 1) throw io_error("wav file '" + path + "' is not mono");
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (fmt == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t v = static_cast<std::int16_t>(detail::rd_u16(data + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (fmt == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = detail::rd_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = static_cast<double>(f);
    }
  } else {
    throw io_error("wav file '" + path + "': unsupported format (need PCM16 or float32 mono)");
  }
  return w;
}

inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write wav file '" + path + "'");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  os.write("RIFF", 4);
  detail::wr_u32(os, 36 + 2 * n);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::wr_u32(os, 16);
  detail::wr_u16(os, 1);  // PCM
  detail::wr_u16(os, 1);  // mono
  detail::wr_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  detail::wr_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::wr_u16(os, 2);
  detail::wr_u16(os, 16);
  os.write("data", 4);
  detail::wr_u32(os, 2 * n);
  for (double v : w.samples) {
    const double c = std::min(1.0, std::max(-1.0, v));
    const long q = std::lrint(c * 32768.0);
    const auto s = static_cast<std::int16_t>(std::min(32767l, std::max(-32768l, q)));
    detail::wr_u16(os, static_cast<std::uint16_t>(s));
  }
  if (!os) throw io_error("failed writing wav file '" + path + "'");
}

}  // namespace cmnet
