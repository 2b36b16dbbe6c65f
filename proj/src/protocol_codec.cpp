#include "ugsd/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace ugsd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::MalformedMessage, why); }
[[noreturn]] void invalid(const std::string& why) { throw Error(Errc::InvariantViolation, why); }

const std::vector<std::string> kHelloFields{"type", "session_id", "vocab_checksum", "features",
                                            "config"};
const std::vector<std::string> kConfigFields{"rank_threshold", "gamma", "l_min", "l_base", "l_max"};
const std::vector<std::string> kVerifyRequestFields{"type", "session_id", "base_position",
                                                    "prefix_delta", "draft_tokens"};
const std::vector<std::string> kVerifyResponseFields{"type", "session_id", "accepted_count",
                                                     "correction", "verifier_position"};
const std::vector<std::string> kByeFields{"type", "session_id", "final_length", "rho_report"};
const std::vector<std::string> kRhoFields{"transmitted", "total_drafted"};
const std::vector<std::string> kErrorFields{"type", "session_id", "code", "message"};

void expect_keys(const json& obj, const std::vector<std::string>& keys, std::string_view what) {
  if (!obj.is_object()) malformed(std::string(what) + " is not an object");
  std::set<std::string> want(keys.begin(), keys.end());
  for (const auto& [k, _] : obj.items())
    if (!want.count(k)) malformed("unknown field '" + k + "' in " + std::string(what));
  for (const auto& k : keys)
    if (!obj.contains(k)) malformed("missing field '" + k + "' in " + std::string(what));
}

std::uint64_t get_uint(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) malformed(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::uint32_t get_u32(const json& obj, const char* key) {
  auto v = get_uint(obj, key);
  if (v > std::numeric_limits<std::uint32_t>::max()) malformed(std::string("field '") + key + "' too large");
  return static_cast<std::uint32_t>(v);
}

std::string get_string(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

TokenSeq get_tokens(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_array()) malformed(std::string("field '") + key + "' must be an array");
  TokenSeq out;
  out.reserve(v.size());
  for (const auto& t : v) {
    if (!t.is_number_unsigned() || t.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max())
      malformed(std::string("field '") + key + "' must hold token ids");
    out.emplace_back(t.get<std::uint32_t>());
  }
  return out;
}

json tokens_json(const TokenSeq& ts) {
  json a = json::array();
  for (auto t : ts) a.push_back(t.value);
  return a;
}

bool is_uuid(std::string_view s) {
  if (s.size() != 36) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (s[i] != '-') return false;
    } else if (!std::isxdigit(static_cast<unsigned char>(s[i]))) {
      return false;
    }
  }
  return true;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) malformed("vocab_checksum must be 16 hex digits");
  std::uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else malformed("vocab_checksum must be lowercase hex");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

json gamma_json(double g) {
  if (std::isnan(g)) invalid("gamma is NaN");
  if (std::isinf(g)) return g > 0 ? "inf" : "-inf";
  return g;
}

double parse_gamma(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    malformed("gamma string must be \"inf\" or \"-inf\"");
  }
  if (!v.is_number()) malformed("gamma must be a number");
  return v.get<double>();
}

void check_session_id(const std::string& id) {
  if (!is_uuid(id)) invalid("session_id is not a UUID");
}

void check(const HelloMsg& m) {
  check_session_id(m.session_id);
  for (double f : m.features)
    if (!std::isfinite(f)) invalid("features must be finite");
  const auto& c = m.config;
  if (c.rank_threshold < 1) invalid("rank_threshold must be >= 1");
  if (std::isnan(c.gamma)) invalid("gamma is NaN");
  if (c.l_min < 1 || c.l_min > c.l_base || c.l_base > c.l_max)
    invalid("block lengths must satisfy 1 <= l_min <= l_base <= l_max");
}

void check(const VerifyRequestMsg& m) {
  check_session_id(m.session_id);
  if (m.draft_tokens.empty()) invalid("draft_tokens must not be empty");
}

void check(const VerifyResponseMsg& m) { check_session_id(m.session_id); }

void check(const ByeMsg& m) {
  check_session_id(m.session_id);
  if (m.rho_report.transmitted > m.rho_report.total_drafted)
    invalid("transmitted exceeds total_drafted");
}

void check(const ErrorMsg& m) {
  if (!m.session_id.empty()) check_session_id(m.session_id);
}

}  // namespace

const std::vector<std::string>& message_fields(std::string_view type) {
  if (type == "hello") return kHelloFields;
  if (type == "verify_request") return kVerifyRequestFields;
  if (type == "verify_response") return kVerifyResponseFields;
  if (type == "bye") return kByeFields;
  if (type == "error") return kErrorFields;
  throw Error(Errc::UnknownType, std::string(type));
}

std::string_view message_type(const Message& m) {
  static constexpr std::string_view names[] = {"hello", "verify_request", "verify_response", "bye",
                                               "error"};
  return names[m.index()];
}

std::string encode_message(const Message& m) {
  std::visit([](const auto& x) { check(x); }, m);
  ordered_json j;
  j["type"] = message_type(m);
  if (auto* h = std::get_if<HelloMsg>(&m)) {
    j["session_id"] = h->session_id;
    j["vocab_checksum"] = hex64(h->vocab_checksum);
    j["features"] = h->features;
    ordered_json c;
    c["rank_threshold"] = h->config.rank_threshold;
    c["gamma"] = gamma_json(h->config.gamma);
    c["l_min"] = h->config.l_min;
    c["l_base"] = h->config.l_base;
    c["l_max"] = h->config.l_max;
    j["config"] = std::move(c);
  } else if (auto* r = std::get_if<VerifyRequestMsg>(&m)) {
    j["session_id"] = r->session_id;
    j["base_position"] = r->base_position;
    j["prefix_delta"] = tokens_json(r->prefix_delta);
    j["draft_tokens"] = tokens_json(r->draft_tokens);
  } else if (auto* v = std::get_if<VerifyResponseMsg>(&m)) {
    j["session_id"] = v->session_id;
    j["accepted_count"] = v->accepted_count;
    j["correction"] = v->correction ? ordered_json(v->correction->value) : ordered_json(nullptr);
    j["verifier_position"] = v->verifier_position;
  } else if (auto* b = std::get_if<ByeMsg>(&m)) {
    j["session_id"] = b->session_id;
    j["final_length"] = b->final_length;
    j["rho_report"] = ordered_json{{"transmitted", b->rho_report.transmitted},
                                   {"total_drafted", b->rho_report.total_drafted}};
  } else if (auto* e = std::get_if<ErrorMsg>(&m)) {
    j["session_id"] = e->session_id;
    j["code"] = e->code;
    j["message"] = e->message;
  }
  std::string out = j.dump(-1, ' ', false, json::error_handler_t::strict);
  out += '\n';
  return out;
}

Message decode_message(std::string_view frame) {
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  if (frame.find('\n') != std::string_view::npos) malformed("frame spans more than one line");

  json j;
  try {
    j = json::parse(frame);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!j.is_object()) malformed("frame is not an object");
  if (!j.contains("type") || !j["type"].is_string()) malformed("missing type discriminator");
  const std::string type = j["type"].get<std::string>();
  expect_keys(j, message_fields(type), type);

  Message m;
  if (type == "hello") {
    HelloMsg h;
    h.session_id = get_string(j, "session_id");
    h.vocab_checksum = parse_hex64(get_string(j, "vocab_checksum"));
    const auto& f = j["features"];
    if (!f.is_array()) malformed("features must be an array");
    for (const auto& x : f) {
      if (!x.is_number()) malformed("features must be numbers");
      h.features.push_back(x.get<double>());
    }
    const auto& c = j["config"];
    expect_keys(c, kConfigFields, "config");
    h.config.rank_threshold = get_u32(c, "rank_threshold");
    h.config.gamma = parse_gamma(c["gamma"]);
    h.config.l_min = get_u32(c, "l_min");
    h.config.l_base = get_u32(c, "l_base");
    h.config.l_max = get_u32(c, "l_max");
    m = std::move(h);
  } else if (type == "verify_request") {
    VerifyRequestMsg r;
    r.session_id = get_string(j, "session_id");
    r.base_position = get_uint(j, "base_position");
    r.prefix_delta = get_tokens(j, "prefix_delta");
    r.draft_tokens = get_tokens(j, "draft_tokens");
    m = std::move(r);
  } else if (type == "verify_response") {
    VerifyResponseMsg v;
    v.session_id = get_string(j, "session_id");
    v.accepted_count = get_uint(j, "accepted_count");
    if (!j["correction"].is_null()) v.correction = TokenId(get_u32(j, "correction"));
    v.verifier_position = get_uint(j, "verifier_position");
    m = std::move(v);
  } else if (type == "bye") {
    ByeMsg b;
    b.session_id = get_string(j, "session_id");
    b.final_length = get_uint(j, "final_length");
    const auto& r = j["rho_report"];
    expect_keys(r, kRhoFields, "rho_report");
    b.rho_report.transmitted = get_uint(r, "transmitted");
    b.rho_report.total_drafted = get_uint(r, "total_drafted");
    m = std::move(b);
  } else {
    ErrorMsg e;
    e.session_id = get_string(j, "session_id");
    e.code = get_string(j, "code");
    e.message = get_string(j, "message");
    m = std::move(e);
  }
  std::visit([](const auto& x) { check(x); }, m);
  return m;
}

std::string make_session_id(std::uint64_t seed) {
  std::uint64_t hi = mix64(seed);
  std::uint64_t lo = mix64(hi ^ 0x5ee5'10d0'0000'0001ULL);
  // RFC 4122 version 4, variant 1 bits.
  hi = (hi & ~0xf000ULL) | 0x4000ULL;
  lo = (lo & ~(0xc0ULL << 56)) | (0x80ULL << 56);
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08llx-%04llx-%04llx-%04llx-%012llx",
                static_cast<unsigned long long>(hi >> 32),
                static_cast<unsigned long long>((hi >> 16) & 0xffff),
                static_cast<unsigned long long>(hi & 0xffff),
                static_cast<unsigned long long>(lo >> 48),
                static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

}  // namespace ugsd
