#pragma once

namespace tsit {

const char* version();

}  // namespace tsit
