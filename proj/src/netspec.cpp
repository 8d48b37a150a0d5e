#include "atrousfov/netspec.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "atrousfov/fileio.hpp"

namespace afov {

const char* to_string(HeadKind kind) { return kind == HeadKind::aspp ? "aspp" : "fcn_d6"; }

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = "invalid network spec";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(line)};
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

class LineParser {
 public:
  LineParser(int line_no, std::vector<std::string>& errors) : line_(line_no), errors_(errors) {}

  void error(const std::string& msg) { errors_.push_back("line " + std::to_string(line_) + ": " + msg); }

  // Splits key=value tokens; rejects keys outside `allowed`.
  std::map<std::string, std::string> pairs(const std::vector<std::string>& toks, std::size_t from,
                                           std::initializer_list<const char*> allowed) {
    std::map<std::string, std::string> kv;
    for (std::size_t i = from; i < toks.size(); ++i) {
      const auto eq = toks[i].find('=');
      if (eq == std::string::npos || eq == 0) {
        error("expected key=value, got '" + toks[i] + "'");
        continue;
      }
      const std::string key = toks[i].substr(0, eq);
      bool ok = false;
      for (const char* a : allowed) ok |= key == a;
      if (!ok) {
        error("unknown key '" + key + "'");
        continue;
      }
      if (kv.count(key)) error("duplicate key '" + key + "'");
      kv[key] = toks[i].substr(eq + 1);
    }
    return kv;
  }

  std::optional<int> positive(const std::string& key, const std::string& v) {
    const auto n = parse_int(v);
    if (!n || *n < 1 || *n > 1 << 20) {
      error(key + " must be a positive integer, got '" + v + "'");
      return std::nullopt;
    }
    return static_cast<int>(*n);
  }

  std::optional<bool> flag(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    error(key + " must be on or off, got '" + v + "'");
    return std::nullopt;
  }

 private:
  int line_;
  std::vector<std::string>& errors_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

NetworkPlan parse_network_config(std::string_view text) {
  NetworkPlan plan;
  std::vector<std::string> errors;
  bool seen_input = false, seen_encoder = false, seen_classes = false, seen_seed = false;
  int head_line = 0;
  std::optional<std::vector<int>> channels;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto toks = split_ws(raw);
    if (toks.empty()) continue;
    LineParser lp(line_no, errors);
    const std::string& directive = toks[0];

    if (directive == "input") {
      if (seen_input) lp.error("duplicate input line");
      seen_input = true;
      auto kv = lp.pairs(toks, 1, {"size", "height", "width", "channels"});
      if (kv.count("size") && (kv.count("height") || kv.count("width"))) {
        lp.error("give either size or height/width");
      }
      if (kv.count("size")) {
        if (auto v = lp.positive("size", kv["size"])) plan.input_height = plan.input_width = *v;
      }
      if (kv.count("height")) {
        if (auto v = lp.positive("height", kv["height"])) plan.input_height = *v;
      }
      if (kv.count("width")) {
        if (auto v = lp.positive("width", kv["width"])) plan.input_width = *v;
      }
      if (kv.count("channels")) {
        if (auto v = lp.positive("channels", kv["channels"])) plan.input_channels = *v;
      }
    } else if (directive == "encoder") {
      if (seen_encoder) lp.error("duplicate encoder line");
      seen_encoder = true;
      auto kv = lp.pairs(toks, 1, {"stride", "channels", "bias"});
      if (!kv.count("stride")) {
        lp.error("encoder needs stride=");
      } else if (auto s = lp.positive("stride", kv["stride"])) {
        if ((*s & (*s - 1)) != 0 || *s > 32) {
          lp.error("encoder stride must be a power of two in 1..32, got " + kv["stride"]);
        } else {
          plan.stride = *s;
        }
      }
      if (kv.count("channels")) {
        std::vector<int> widths;
        std::stringstream ss(kv["channels"]);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (auto v = lp.positive("channels", item)) widths.push_back(*v);
        }
        channels = widths;
      }
      if (kv.count("bias")) {
        if (auto b = lp.flag("bias", kv["bias"])) plan.encoder_bias = *b;
      }
    } else if (directive == "head") {
      if (head_line) {
        lp.error("conflicting head (already declared on line " + std::to_string(head_line) + ")");
        continue;
      }
      head_line = line_no;
      if (toks.size() < 2) {
        lp.error("head needs a kind (aspp or fcn_d6)");
        continue;
      }
      std::map<std::string, std::string> kv;
      if (toks[1] == "aspp") {
        plan.head = HeadKind::aspp;
        kv = lp.pairs(toks, 2, {"rate", "branches", "image_pool", "relu", "bias"});
        if (kv.count("branches")) {
          if (auto v = lp.positive("branches", kv["branches"])) plan.head_channels = *v;
        }
        if (kv.count("image_pool")) {
          if (auto b = lp.flag("image_pool", kv["image_pool"])) plan.image_pool = *b;
        }
      } else if (toks[1] == "fcn_d6") {
        plan.head = HeadKind::fcn_d6;
        plan.image_pool = false;
        kv = lp.pairs(toks, 2, {"rate", "channels", "relu", "bias"});
        if (kv.count("channels")) {
          if (auto v = lp.positive("channels", kv["channels"])) plan.head_channels = *v;
        }
      } else {
        lp.error("unknown head kind '" + toks[1] + "'");
        continue;
      }
      if (kv.count("rate")) {
        if (auto v = lp.positive("rate", kv["rate"])) plan.rate = *v;
      }
      if (kv.count("relu")) {
        if (auto b = lp.flag("relu", kv["relu"])) plan.head_relu = *b;
      }
      if (kv.count("bias")) {
        if (auto b = lp.flag("bias", kv["bias"])) plan.head_bias = *b;
      }
    } else if (directive == "classes") {
      if (seen_classes) lp.error("duplicate classes line");
      seen_classes = true;
      if (toks.size() != 2) {
        lp.error("classes takes one integer");
      } else if (auto v = lp.positive("classes", toks[1])) {
        plan.n_classes = *v;
      }
    } else if (directive == "seed") {
      if (seen_seed) lp.error("duplicate seed line");
      seen_seed = true;
      const auto v = toks.size() == 2 ? parse_int(toks[1]) : std::nullopt;
      if (!v || *v < 0) {
        lp.error("seed takes one non-negative integer");
      } else {
        plan.seed = static_cast<std::uint64_t>(*v);
      }
    } else {
      lp.error("unknown directive '" + directive + "'");
    }
  }

  if (!head_line) errors.push_back("missing head line");
  int stages = 0;
  while ((1 << stages) < plan.stride) ++stages;
  if (channels) {
    if (static_cast<int>(channels->size()) != stages) {
      errors.push_back("encoder stride " + std::to_string(plan.stride) + " needs " +
                       std::to_string(stages) + " channel widths, got " +
                       std::to_string(channels->size()));
    }
    plan.encoder_channels = *channels;
  } else {
    for (int i = 0; i < stages; ++i) plan.encoder_channels.push_back(8 << i);
  }
  if (plan.input_height % plan.stride != 0 || plan.input_width % plan.stride != 0) {
    errors.push_back("input " + std::to_string(plan.input_height) + "x" +
                     std::to_string(plan.input_width) + " is not divisible by stride " +
                     std::to_string(plan.stride));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  if (!seen_classes) plan.warnings.push_back("no classes line; defaulting to 2 classes");
  if (!seen_encoder) plan.warnings.push_back("no encoder line; using stride 1 (no encoder)");
  return plan;
}

NetworkPlan load_network_config(const std::string& path) {
  return parse_network_config(read_file(path));
}

std::string NetworkPlan::canonical() const {
  auto onoff = [](bool b) { return b ? "on" : "off"; };
  std::ostringstream os;
  os << "input height=" << input_height << " width=" << input_width
     << " channels=" << input_channels << "\n";
  os << "encoder stride=" << stride << " channels=";
  for (std::size_t i = 0; i < encoder_channels.size(); ++i) os << (i ? "," : "") << encoder_channels[i];
  os << " bias=" << onoff(encoder_bias) << "\n";
  if (head == HeadKind::aspp) {
    os << "head aspp rate=" << rate << " branches=" << head_channels
       << " image_pool=" << onoff(image_pool);
  } else {
    os << "head fcn_d6 rate=" << rate << " channels=" << head_channels;
  }
  os << " relu=" << onoff(head_relu) << " bias=" << onoff(head_bias) << "\n";
  os << "classes " << n_classes << "\n";
  os << "seed " << seed << "\n";
  return os.str();
}

std::string NetworkPlan::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NetworkGraph build_network(const NetworkPlan& plan) {
  const Fragment encoder = build_encoder(plan.stride, plan.encoder_channels, mix_seed(plan.seed, 1),
                                         plan.input_channels, plan.encoder_bias ? 0.1 : 0.0);
  const int feat = encoder.out_channels() > 0 ? encoder.out_channels() : plan.input_channels;
  Fragment head;
  if (plan.head == HeadKind::aspp) {
    AsppSpec spec;
    spec.base_rate = plan.rate;
    spec.branch_channels = plan.head_channels;
    spec.in_channels = feat;
    spec.image_pool = plan.image_pool;
    spec.relu = plan.head_relu;
    spec.bias = plan.head_bias;
    head = build_aspp_head(spec, plan.n_classes, mix_seed(plan.seed, 2));
  } else {
    FcnD6Spec spec;
    spec.rate = plan.rate;
    spec.in_channels = feat;
    spec.channels = plan.head_channels;
    spec.relu = plan.head_relu;
    spec.bias = plan.head_bias;
    head = build_fcn_d6_head(spec, plan.n_classes, mix_seed(plan.seed, 2));
  }
  return assemble(encoder, head, plan.input_height, plan.input_width, plan.input_channels);
}

}  // namespace afov
