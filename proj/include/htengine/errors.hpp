#pragma once

#include <stdexcept>
#include <string>

namespace hte {

// Base for all engine errors so callers can catch one family.
struct EngineError : std::runtime_error {
  explicit EngineError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a truncated series would need terms beyond the declared cap.
struct CapExceeded : EngineError {
  explicit CapExceeded(const std::string& what) : EngineError(what) {}
};

// Raised when (b∘h)^n fails to vanish within the declared nilpotency bound.
struct NilpotencyExceeded : EngineError {
  explicit NilpotencyExceeded(const std::string& what) : EngineError(what) {}
};

// Raised by the symmetric-power PBW inverse on input outside one Eulerian component.
struct NotInEulerianComponent : EngineError {
  explicit NotInEulerianComponent(const std::string& what) : EngineError(what) {}
};

// Raised when inverting a morphism whose linear part is not invertible.
struct SingularLinearPart : EngineError {
  explicit SingularLinearPart(const std::string& what) : EngineError(what) {}
};

// Raised when a curvature candidate fails the centrality test.
struct NotCentral : EngineError {
  explicit NotCentral(const std::string& what) : EngineError(what) {}
};

// Raised when a flat morphism cannot be reinterpreted between curved structures;
// carries a description of the first failing condition.
struct LiftObstruction : EngineError {
  explicit LiftObstruction(const std::string& what) : EngineError(what) {}
};

// Raised when transfer input data fails its declared retract/anchor identities.
struct HypothesisViolation : EngineError {
  explicit HypothesisViolation(const std::string& what) : EngineError(what) {}
};

// Raised on malformed input (bad JSON, shape mismatch, unknown labels, ...).
struct InvalidInput : EngineError {
  explicit InvalidInput(const std::string& what) : EngineError(what) {}
};

// Raised when a 1/ħ expression is applied to a series with a nonzero ħ⁰ term.
struct HbarBookkeeping : EngineError {
  explicit HbarBookkeeping(const std::string& what) : EngineError(what) {}
};

}  // namespace hte
