#ifndef SPINN_ERROR_HPP_
#define SPINN_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace spinn {

// Coarse failure classes. The CLI maps each one to a distinct exit code and
// prints the category name so scripts can branch on it.
enum class ErrorCategory {
  kUsage,
  kParse,
  kValidation,
  kIo,
  kIntegrity,
  kTransport,
  kColdEstimator,
  kInfeasible,
};

std::string_view category_name(ErrorCategory category);
int exit_code_for(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace spinn

#endif  // SPINN_ERROR_HPP_
