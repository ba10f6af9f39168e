// include/avsep/wav_io.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef AVSEP_WAV_IO_HPP_
#define AVSEP_WAV_IO_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avsep/error.hpp"

namespace avsep {

// Samples are dimensionless amplitudes held as doubles; disk format is
// PCM16 mono WAV only.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  long size() const { return static_cast<long>(samples.size()); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void write_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

// Reads a PCM16 mono WAV file. Rejects any other encoding, channel count,
// or (when required_rate > 0) sample rate, naming the offending file.
inline Waveform read_wav(const std::string& path, int required_rate = 16000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ParseError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data_ptr = nullptr;
  uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = detail::read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size())
      throw ParseError("truncated chunk in WAV file " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ParseError("short fmt chunk in " + path);
      format = detail::read_u16(bytes.data() + body);
      channels = detail::read_u16(bytes.data() + body + 2);
      rate = detail::read_u32(bytes.data() + body + 4);
      bits = detail::read_u16(bytes.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!data_ptr) throw ParseError("WAV file has no data chunk: " + path);
  if (format != 1 || bits != 16)
    throw InvalidInput("WAV file " + path + " is not PCM16 (format=" +
                       std::to_string(format) + ", bits=" + std::to_string(bits) +
                       ")");
  if (channels != 1)
    throw InvalidInput("WAV file " + path + " must be mono, has " +
                       std::to_string(channels) + " channels");
  if (required_rate > 0 && static_cast<int>(rate) != required_rate)
    throw InvalidInput("WAV file " + path + " has sample rate " +
                       std::to_string(rate) + ", required " +
                       std::to_string(required_rate));

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  const long n = data_len / 2;
  w.samples.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(
        detail::read_u16(data_ptr + 2 * static_cast<std::size_t>(i)));
    w.samples[static_cast<std::size_t>(i)] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

// Writes a PCM16 mono WAV file; samples are clamped to [-1, 1] and rounded.
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write WAV file " + path);
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  detail::write_u32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_u32(os, 16);
  detail::write_u16(os, 1);  // PCM
  detail::write_u16(os, 1);  // mono
  detail::write_u32(os, static_cast<uint32_t>(w.sample_rate));
  detail::write_u32(os, static_cast<uint32_t>(w.sample_rate * 2));
  detail::write_u16(os, 2);   // block align
  detail::write_u16(os, 16);  // bits
  os.write("data", 4);
  detail::write_u32(os, data_len);
  for (double v : w.samples) {
    double c = v;
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    const int32_t q = static_cast<int32_t>(std::lrint(c * 32767.0));
    detail::write_u16(os, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!os) throw IoError("failed while writing WAV file " + path);
}

}  // namespace avsep

#endif  // AVSEP_WAV_IO_HPP_
