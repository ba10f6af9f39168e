// include/avsep/digest.hpp
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

#ifndef AVSEP_DIGEST_HPP_
#define AVSEP_DIGEST_HPP_

#include <cstdint>
#include <fstream>
#include <string>

#include "avsep/error.hpp"

namespace avsep {

// FNV-1a 64-bit content hash; used to stamp configs, manifests, and
// checkpoints so artifacts can be matched to the settings that made them.
inline uint64_t fnv1a64(const void* data, std::size_t len,
                        uint64_t seed = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(uint64_t h) {
  static const char* hexd = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = hexd[h & 0xf];
    h >>= 4;
  }
  return s;
}

inline std::string digest_of_string(const std::string& s) {
  return digest_hex(fnv1a64(s.data(), s.size()));
}

inline std::string digest_of_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return digest_of_string(bytes);
}

}  // namespace avsep

#endif  // AVSEP_DIGEST_HPP_
