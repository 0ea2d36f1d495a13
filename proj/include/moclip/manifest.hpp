#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "moclip/checkpoint.hpp"
#include "moclip/errors.hpp"

namespace moclip {

/// Hex SHA-1 of `"blob <size>\0" + content`, the same id `git hash-object` prints.
inline std::string git_blob_hash(const std::vector<unsigned char>& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha1 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string git_blob_hash_file(const std::string& path) { return git_blob_hash(read_file_bytes(path)); }

/// Record of one CLI invocation. Everything but `wall_clock_seconds` is reproducible.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  double wall_clock_seconds = 0.0;
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& path : m.artifacts) arts.push_back({{"path", path}, {"sha1", git_blob_hash_file(path)}});
  j["artifacts"] = arts;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j;
}

}  // namespace moclip
