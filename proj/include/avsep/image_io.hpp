// include/avsep/image_io.hpp
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

#ifndef AVSEP_IMAGE_IO_HPP_
#define AVSEP_IMAGE_IO_HPP_

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "avsep/error.hpp"

namespace avsep {

// 8-bit image, row-major, channels interleaved (1 = grayscale, 3 = RGB).
// Mouth ROIs are stored as binary PGM (P5), face crops as binary PPM (P6).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;  // height * width * channels

  uint8_t& at(int y, int x, int c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  uint8_t at(int y, int x, int c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

namespace detail {

inline int read_pnm_int(std::istream& in) {
  int c = in.get();
  // skip whitespace and comments
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ParseError("malformed PNM header");
  return value;
}

}  // namespace detail

inline Image8 read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw ParseError("unsupported image format (need binary PGM/PPM): " + path);
  Image8 img;
  img.channels = (magic[1] == '5') ? 1 : 3;
  try {
    img.width = detail::read_pnm_int(in);
    img.height = detail::read_pnm_int(in);
    const int maxval = detail::read_pnm_int(in);
    if (maxval != 255)
      throw ParseError("only 8-bit PNM supported, maxval=" +
                       std::to_string(maxval));
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()) + " in " + path);
  }
  const std::size_t n = static_cast<std::size_t>(img.width) *
                        static_cast<std::size_t>(img.height) *
                        static_cast<std::size_t>(img.channels);
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ParseError("truncated pixel data in " + path);
  return img;
}

inline void write_image(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidInput("write_image: channels must be 1 or 3");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image " + path);
  os << (img.channels == 1 ? "P5" : "P6") << "\n"
     << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("failed while writing image " + path);
}

}  // namespace avsep

#endif  // AVSEP_IMAGE_IO_HPP_
