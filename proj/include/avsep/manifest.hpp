// include/avsep/manifest.hpp
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

#ifndef AVSEP_MANIFEST_HPP_
#define AVSEP_MANIFEST_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsep/digest.hpp"
#include "avsep/error.hpp"
#include "avsep/wav_io.hpp"

namespace avsep {

// One clip: 16 kHz mono audio plus per-frame mouth ROIs and face crops.
// Clips cut from the same source video share a video_id.
struct ManifestEntry {
  std::string clip_id;
  std::string audio_path;
  std::string roi_dir;
  std::string face_dir;
  std::string video_id;

  // filled during validation
  long audio_samples = 0;
  std::vector<std::string> roi_files;   // lexicographically sorted
  std::vector<std::string> face_files;  // lexicographically sorted
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::map<std::string, std::vector<std::size_t>> by_video;
  std::string digest;  // content hash of the manifest file
  std::string path;

  std::vector<std::string> video_ids() const {
    std::vector<std::string> ids;
    ids.reserve(by_video.size());
    for (const auto& [vid, idx] : by_video) ids.push_back(vid);
    return ids;
  }
};

namespace detail {

inline std::vector<std::string> sorted_dir_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

// JSON Lines, one entry per line, fields exactly
// {clip_id, audio_path, roi_dir, face_dir, video_id}. Relative paths are
// resolved against the manifest's directory.
inline Manifest load_manifest(const std::string& path, double min_seconds = 2.55,
                              long min_roi_frames = 64) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);

  Manifest m;
  m.path = path;
  m.digest = digest_of_file(path);
  const fs::path base = fs::path(path).parent_path();

  static const std::set<std::string> kFields = {"clip_id", "audio_path", "roi_dir",
                                                "face_dir", "video_id"};
  std::set<std::string> seen_ids;
  std::string line;
  long line_no = 0;
  std::vector<std::string> missing;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object())
      throw ParseError("manifest line " + std::to_string(line_no) +
                       ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!kFields.count(key))
        throw ParseError("manifest line " + std::to_string(line_no) +
                         ": unknown field \"" + key + "\"");
      if (!value.is_string())
        throw ParseError("manifest line " + std::to_string(line_no) + ": field \"" +
                         key + "\" must be a string");
    }
    for (const auto& f : kFields)
      if (!j.contains(f))
        throw ParseError("manifest line " + std::to_string(line_no) +
                         ": missing field \"" + f + "\"");

    ManifestEntry e;
    e.clip_id = j["clip_id"].get<std::string>();
    e.video_id = j["video_id"].get<std::string>();
    auto resolve = [&](const std::string& p) {
      fs::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    e.audio_path = resolve(j["audio_path"].get<std::string>());
    e.roi_dir = resolve(j["roi_dir"].get<std::string>());
    e.face_dir = resolve(j["face_dir"].get<std::string>());

    if (seen_ids.count(e.clip_id))
      throw DuplicateId("manifest line " + std::to_string(line_no) +
                        ": clip_id \"" + e.clip_id + "\" appears twice");
    seen_ids.insert(e.clip_id);

    if (!fs::exists(e.audio_path)) missing.push_back(e.audio_path);
    if (!fs::is_directory(e.roi_dir)) missing.push_back(e.roi_dir);
    if (!fs::is_directory(e.face_dir)) missing.push_back(e.face_dir);
    if (!missing.empty()) continue;  // collect all paths before failing

    Waveform w = read_wav(e.audio_path);
    e.audio_samples = w.size();
    if (w.duration_seconds() < min_seconds)
      throw InvalidInput("clip " + e.clip_id + " is " +
                         std::to_string(w.duration_seconds()) +
                         " s, need at least " + std::to_string(min_seconds));
    e.roi_files = detail::sorted_dir_files(e.roi_dir);
    e.face_files = detail::sorted_dir_files(e.face_dir);
    if (static_cast<long>(e.roi_files.size()) < min_roi_frames)
      throw InvalidInput("clip " + e.clip_id + " has " +
                         std::to_string(e.roi_files.size()) +
                         " ROI frames, need at least " +
                         std::to_string(min_roi_frames));
    if (e.face_files.empty())
      throw InvalidInput("clip " + e.clip_id + " has no face crops");

    m.by_video[e.video_id].push_back(m.entries.size());
    m.entries.push_back(std::move(e));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& p : missing) list += "\n  " + p;
    throw MissingAsset("manifest references missing media:" + list);
  }
  if (m.entries.empty()) throw InvalidInput("manifest is empty: " + path);
  return m;
}

}  // namespace avsep

#endif  // AVSEP_MANIFEST_HPP_
