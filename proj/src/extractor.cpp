#include "haifit/extractor.hpp"

#include <cstdlib>

namespace haifit {

std::filesystem::path default_extractor_path() {
  if (const char* env = std::getenv("HAIFIT_EXTRACTOR"); env != nullptr && *env != '\0') return env;
  return std::filesystem::path(HAIFIT_DATA_DIR) / "extractor_test_v1.hfa";
}

}  // namespace haifit
