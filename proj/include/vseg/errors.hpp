#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

// Every error raised by the library derives from Error so callers can catch
// one type; the subclasses select the CLI exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class BuildError : public Error { public: using Error::Error; };
class UsageError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class SplitError : public Error { public: using Error::Error; };
class LoadError : public Error { public: using Error::Error; };
class NumericalError : public Error { public: using Error::Error; };

// Hausdorff / surface distance on an empty point set.
class EmptySetError : public Error { public: using Error::Error; };

} // namespace vseg
