#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"

namespace satpred {

/// Reads typed fields from a JSON object and rejects keys nobody asked for.
/// Keys listed in `ignored` (such as "_notes") are accepted and skipped.
class FieldReader {
public:
  FieldReader(const nlohmann::json& j, std::string context, std::set<std::string> ignored = {"_notes"})
      : j_(j), context_(std::move(context)), seen_(std::move(ignored)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  bool read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + ": bad value for '" + key + "': " + e.what());
    }
    return true;
  }

  /// The raw sub-document, or nullptr when absent.
  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& context() const { return context_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
    }
  }

private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace satpred
