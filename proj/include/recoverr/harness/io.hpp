/*
 * Copyright 2026 The recoverr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef RECOVERR_HARNESS_IO_HPP_
#define RECOVERR_HARNESS_IO_HPP_

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/selective.hpp"

namespace recoverr {

/// Instance lines: {id, image, question, answers[], meta{}}.
inline void to_json(nlohmann::json& j, const Instance& in) {
  j = nlohmann::json{{"id", in.id},
                     {"image", in.image_ref},
                     {"question", in.question},
                     {"answers", in.gold_answers},
                     {"meta", in.metadata}};
}

inline void from_json(const nlohmann::json& j, Instance& in) {
  j.at("id").get_to(in.id);
  j.at("image").get_to(in.image_ref);
  j.at("question").get_to(in.question);
  j.at("answers").get_to(in.gold_answers);
  in.metadata.clear();
  if (j.contains("meta") && j["meta"].is_object()) {
    for (const auto& [k, v] : j["meta"].items()) {
      in.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  if (in.gold_answers.empty()) throw InvalidInput("instance " + in.id + " has no gold answers");
}

}  // namespace recoverr

namespace recoverr::harness {

/// Calls fn for every non-blank line, parsed. A malformed line throws with
/// its line number.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    fn(j);
  }
}

inline std::vector<Instance> read_instances(const std::filesystem::path& path) {
  std::vector<Instance> out;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    auto in = j.get<Instance>();
    if (!ids.insert(in.id).second) throw InvalidInput("duplicate instance id " + in.id);
    out.push_back(std::move(in));
  });
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

inline void write_instances(const std::filesystem::path& path, const std::vector<Instance>& items) {
  std::vector<nlohmann::json> rows;
  rows.reserve(items.size());
  for (const auto& it : items) rows.emplace_back(it);
  write_jsonl(path, rows);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary file and rename.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput(path.string() + ": " + ex.what());
  }
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_IO_HPP_
