#pragma once

#include <stdexcept>
#include <string>

namespace solarspot {

/// Base class for every error the toolkit raises on bad data or misuse.
/// IO failures, format violations and contract violations each get a
/// distinct subclass so callers can react per kind.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// thermal_io
struct MalformedTiff : Error { using Error::Error; };
struct UnsupportedTiff : Error { using Error::Error; };
struct InvalidPercentiles : Error { using Error::Error; };

// dataset
struct ParseError : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct InsufficientDistinctBoxes : Error { using Error::Error; };

// inference
struct CfgError : Error { using Error::Error; };
struct WeightSizeMismatch : Error { using Error::Error; };
struct NonFiniteWeight : Error { using Error::Error; };
struct BadHeader : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NotLoaded : Error { using Error::Error; };

// detector
struct SlotCollision : Error { using Error::Error; };

// evalreport
struct DuplicateImageId : Error { using Error::Error; };

// cli / file handling
struct IoError : Error { using Error::Error; };

}  // namespace solarspot
