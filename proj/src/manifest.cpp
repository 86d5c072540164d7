#include "rankalign/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <openssl/evp.h>

#include <json.hpp>

namespace rankalign {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("digest context allocation failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0)
      EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.emplace_back(path.string(), sha256_file(path));
}

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& [p, digest] : manifest.inputs)
    inputs.push_back({{"path", p}, {"sha256", digest}});
  nlohmann::ordered_json doc{
      {"tool", std::string(kToolName)},
      {"version", std::string(kToolVersion)},
      {"command", manifest.command},
      {"config", nlohmann::json::parse(manifest.config_json)},
      {"inputs", inputs},
      {"outputs", manifest.outputs},
      {"seed", manifest.seed},
      {"started_at", manifest.started_at},
      {"duration_ms", manifest.duration_ms}};
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace rankalign
