#pragma once

#include <string>

#include "htengine/graded.hpp"
#include "vendor_json.hpp"

namespace hte {

using Json = nlohmann::json;

// GradedSpace <-> {"degrees": {"<deg>": ["label", ...], ...}, "window": [lo, hi]}
// Degree keys are decimal strings; label lists are emitted in basis order
// (lexicographic), so serialization is deterministic.
Json space_to_json(const GradedSpace& v);
GradedSpace space_from_json(const Json& j);

// GradedMap <-> {"shift": d, "blocks": {"<source deg>": [[row], ...], ...}}
// with scalar entries in canonical "p/q" form.  Blocks equal to zero are
// omitted.  Reading requires the caller to supply source and target spaces.
Json map_to_json(const GradedMap& f);
GradedMap map_from_json(const Json& j, SpacePtr source, SpacePtr target);

// Scalar helpers shared by higher layers.
Json rational_to_json(const Rational& c);
Rational rational_from_json(const Json& j);

// Canonical text dump: stable field order (nlohmann emits object keys sorted),
// two-space indentation, trailing newline.
std::string dump_json(const Json& j);

}  // namespace hte
