#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// tensor
struct BadShape : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct DivideByZero : Error { using Error::Error; };

// autograd
struct UnknownParent : Error { using Error::Error; };
struct NonScalarLoss : Error { using Error::Error; };

// encoders
struct NonIntegerOutput : Error { using Error::Error; };
struct NonPositiveOutput : Error { using Error::Error; };
struct EmptySequence : Error { using Error::Error; };
struct TokenOutOfRange : Error { using Error::Error; };
struct IndivisibleImage : Error { using Error::Error; };

// fusion
struct NoActiveBranch : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };
struct ModalityMissing : Error { using Error::Error; };

// training / data / metrics
struct LabelOutOfRange : Error { using Error::Error; };
struct NumericFailure : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct BadSpec : Error { using Error::Error; };
struct NonSquareRotate : Error { using Error::Error; };

// io / config
struct IoError : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct UnknownKey : Error { using Error::Error; };
struct ConfigTypeError : Error { using Error::Error; };

} // namespace mmf
