#include "tsit/version.hpp"

namespace tsit {

const char* version() { return "0.1.0"; }

}  // namespace tsit
