#pragma once

#include <stdexcept>
#include <string>

namespace hazefuse {

// Base for every error the library throws. kind() is a stable snake_case
// class name that the CLI prints as the first token of its error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define HAZEFUSE_ERROR_TYPE(Name, tag)                                   \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(tag, what) {}     \
    }

HAZEFUSE_ERROR_TYPE(DimensionError, "dimension_error");
HAZEFUSE_ERROR_TYPE(ConfigError, "config_error");
HAZEFUSE_ERROR_TYPE(ContractError, "contract_error");
HAZEFUSE_ERROR_TYPE(NumericError, "numeric_error");
HAZEFUSE_ERROR_TYPE(SingularityError, "singularity_error");
HAZEFUSE_ERROR_TYPE(IoError, "io_error");
HAZEFUSE_ERROR_TYPE(TrainingError, "training_error");

#undef HAZEFUSE_ERROR_TYPE

// Malformed HZT/HZC bytes. offset is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset, std::string kind = "format_error")
        : Error(std::move(kind), what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class CrcError : public FormatError {
public:
    CrcError(const std::string& what, std::size_t offset) : FormatError(what, offset, "crc_error") {}
};

class VersionError : public FormatError {
public:
    VersionError(const std::string& what, std::size_t offset)
        : FormatError(what, offset, "version_error") {}
};

class TruncationError : public FormatError {
public:
    TruncationError(const std::string& what, std::size_t offset)
        : FormatError(what, offset, "truncation_error") {}
};

}  // namespace hazefuse
