#pragma once

#include <stdexcept>
#include <string>

namespace svox {

// Base class for all engine errors. CLI maps ConfigError to exit code 2,
// everything else to 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

class EmptyScene : public Error {
public:
    explicit EmptyScene(const std::string& msg) : Error(msg) {}
};

class EmptyBatch : public Error {
public:
    explicit EmptyBatch(const std::string& msg) : Error(msg) {}
};

class OracleLimit : public Error {
public:
    explicit OracleLimit(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Thrown when an optimization step produces a non-finite loss.
class DivergedError : public Error {
public:
    DivergedError(const std::string& msg, long step) : Error(msg), step_index(step) {}
    long step_index;
};

}  // namespace svox
