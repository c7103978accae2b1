#pragma once

// Single include point for the vendored JSON library so the include path is
// configured in exactly one place.
#include "json.hpp"
