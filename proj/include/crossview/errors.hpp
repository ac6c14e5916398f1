#pragma once

#include <stdexcept>
#include <string>

namespace crossview {

// Base class for everything thrown by this library. Each subclass names one
// failure category so callers and tests can match on the condition rather
// than parse message text.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension disagreement between tensors or between a tensor and a layer.
struct ShapeError : Error { using Error::Error; };

// A declared invariant on a value was violated (non-positive scale, bad fraction).
struct ConstraintError : Error { using Error::Error; };

// Non-finite value encountered where finiteness is required.
struct NumericError : Error { using Error::Error; };

// A video with zero frames where at least one is needed.
struct EmptyVideoError : Error { using Error::Error; };

// A pair id that does not resolve to exactly one video per viewpoint.
struct MalformedPairError : Error { using Error::Error; };

// Frame stream violates ingest preconditions (unsorted timestamps, bad dims).
struct IngestError : Error { using Error::Error; };

// A video too short or too degenerate for the requested computation.
struct DegenerateVideoError : Error { using Error::Error; };

// Pair cannot yield any triplet under the configured time windows.
struct InfeasiblePairError : Error { using Error::Error; };

// Two inputs that must agree (scenario tags, record counts) do not.
struct MismatchError : Error { using Error::Error; };

// Invalid configuration value or an unusable run setup.
struct ConfigError : Error { using Error::Error; };

// Operation requires a model capability that is absent (e.g. no classifier).
struct ModeError : Error { using Error::Error; };

// A batch item combines fields that never occur together (label on a full triplet).
struct MalformedItemError : Error { using Error::Error; };

// State machine misuse: a step ran before the state it depends on existed.
struct OrderingError : Error { using Error::Error; };

// File does not carry the expected magic/version.
struct FormatError : Error { using Error::Error; };

// File is structurally valid but its payload is truncated or inconsistent.
struct CorruptionError : Error { using Error::Error; };

}  // namespace crossview
