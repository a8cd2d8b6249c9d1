#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mtbo {

// Malformed config files, unknown names, inconsistent sections.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Linear-algebra failure that survived jitter escalation. Carries the
// jitter levels that were attempted before giving up.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::vector<double> attempted_jitters)
      : std::runtime_error(what), attempted_jitters_(std::move(attempted_jitters)) {}

  const std::vector<double>& attempted_jitters() const { return attempted_jitters_; }

 private:
  std::vector<double> attempted_jitters_;
};

// Lookup that found nothing (e.g. best-of over an all-failed history).
class NotFoundError : public std::runtime_error {
 public:
  explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mtbo
