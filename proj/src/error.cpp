#include "spinn/error.hpp"

namespace spinn {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kIntegrity: return "integrity";
    case ErrorCategory::kTransport: return "transport";
    case ErrorCategory::kColdEstimator: return "cold_estimator";
    case ErrorCategory::kInfeasible: return "infeasible";
  }
  return "unknown";
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return 2;
    case ErrorCategory::kParse: return 3;
    case ErrorCategory::kValidation: return 4;
    case ErrorCategory::kIo: return 5;
    case ErrorCategory::kIntegrity: return 6;
    case ErrorCategory::kTransport: return 7;
    case ErrorCategory::kColdEstimator: return 8;
    case ErrorCategory::kInfeasible: return 9;
  }
  return 1;
}

}  // namespace spinn
