#pragma once

#include <stdexcept>
#include <string>

namespace serm {

// Error categories map to CLI exit codes: ConfigError -> 1, DataError -> 2,
// NumericError -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// audio_io
struct MalformedWav : DataError { using DataError::DataError; };
struct UnsupportedEncoding : DataError { using DataError::DataError; };
struct EmptyAudio : DataError { using DataError::DataError; };
struct UnrecognizedFilename : DataError { using DataError::DataError; };
struct NoFilesFound : DataError { using DataError::DataError; };

// dsp
struct BadFrameParams : ConfigError { using ConfigError::ConfigError; };
struct BadBankParams : ConfigError { using ConfigError::ConfigError; };
struct DegenerateSignal : DataError { using DataError::DataError; };
struct TooFewFrames : DataError { using DataError::DataError; };

// features
struct InsufficientClasses : DataError { using DataError::DataError; };
struct BadK : ConfigError { using ConfigError::ConfigError; };

// nn
struct DimensionMismatch : ConfigError { using ConfigError::ConfigError; };
struct BadRate : ConfigError { using ConfigError::ConfigError; };

// train_eval
struct InsufficientClassSamples : DataError { using DataError::DataError; };
struct NonFiniteLoss : NumericError { using NumericError::NumericError; };
struct EmptyTestSet : DataError { using DataError::DataError; };

}  // namespace serm
