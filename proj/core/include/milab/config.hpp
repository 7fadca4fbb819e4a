#pragma once

// Run and sweep configuration files: a TOML subset.
//
//   # comment
//   [section]
//   key = "string" | 1 | 2.5e-3 | true | [1, 2, 3] | ["a", "b"]
//
// Keys are unique per section and every value fits on one line. The schema
// is documented in docs/formats.md.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "milab/trainer.hpp"

namespace milab {

struct ConfigValue {
  using Data = std::variant<bool, double, std::string, std::vector<double>, std::vector<std::string>>;
  Data data;
  std::size_t line = 0;
};

struct ConfigSection {
  std::size_t line = 0;
  std::map<std::string, ConfigValue> entries;
};

struct ConfigDocument {
  std::string source;  // file name used in messages
  std::map<std::string, ConfigSection> sections;
};

// Throws Error(kParse) with "source:line: ..." on malformed text.
ConfigDocument parse_config(std::string_view text, std::string source = "<config>");
ConfigDocument load_config_file(const std::string& path);

// Builds a RunConfig from the [run], [task], [critic], [estimator],
// [optimizer] and [drift] sections. Unknown sections or keys and mistyped
// values throw Error(kValidation) naming the line; the result is validated.
// `extra_sections` are skipped (used for [sweep]).
RunConfig run_config_from(const ConfigDocument& doc,
                          const std::vector<std::string>& extra_sections = {});

}  // namespace milab
