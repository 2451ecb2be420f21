#pragma once

#include <stdexcept>
#include <string>

namespace mfcast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Data-shaped failures (bad input files, out-of-range values, inconsistent sizes).
class ParseError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class OrderError : public Error { public: using Error::Error; };
class SizeError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };

// Configuration failures.
class ValidationError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

class IoError : public Error { public: using Error::Error; };

}  // namespace mfcast
