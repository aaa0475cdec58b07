#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gramtex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Everything needed to repeat a run: all option values with defaults filled in.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version;

  void write(const std::filesystem::path& path) const;
};

// `<output>.run.json`
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gramtex::cli
