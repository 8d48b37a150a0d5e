#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "atrousfov/net_graph.hpp"

namespace afov {

// Network-spec grammar, one directive per line; '#' starts a comment:
//
//   input   size=<n> | height=<h> width=<w>   [channels=<c>]     (768x768x3)
//   encoder stride=<1|2|4|8|16|32> [channels=a,b,...] [bias=on|off]
//   head    aspp   rate=<r> [branches=<n>] [image_pool=on|off] [relu=on|off] [bias=on|off]
//   head    fcn_d6 rate=<r> [channels=<n>] [relu=on|off] [bias=on|off]
//   classes <n>                                                  (2, with a warning)
//   seed    <n>                                                  (0)
//
// A missing encoder line means stride 1. Exactly one head line is required.

enum class HeadKind { aspp, fcn_d6 };

const char* to_string(HeadKind kind);

struct NetworkPlan {
  int input_height = 768;
  int input_width = 768;
  int input_channels = 3;

  int stride = 1;
  std::vector<int> encoder_channels;  // resolved to one width per stage
  bool encoder_bias = false;

  HeadKind head = HeadKind::aspp;
  int rate = 6;
  int head_channels = 32;
  bool image_pool = true;
  bool head_relu = true;
  bool head_bias = false;

  int n_classes = 2;
  std::uint64_t seed = 0;

  std::vector<std::string> warnings;

  /// One normalized directive per line, every field explicit.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string digest() const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Throws ConfigError listing every offending line as "line N: message".
NetworkPlan parse_network_config(std::string_view text);
NetworkPlan load_network_config(const std::string& path);

NetworkGraph build_network(const NetworkPlan& plan);

}  // namespace afov
