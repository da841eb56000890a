#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qgraph {

/// Rejected input. Carries every violated precondition, not just the first.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(const std::string& what, std::vector<std::string> problems)
      : std::invalid_argument(compose(what, problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string compose(const std::string& what, const std::vector<std::string>& problems) {
    std::string msg = what;
    for (const auto& p : problems) msg += "\n  - " + p;
    return msg;
  }

  std::vector<std::string> problems_;
};

/// A numerical method failed to produce a result meeting its contract.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qgraph
