#pragma once

#include <stdexcept>
#include <string>

namespace rectattn {

// Base for every error the library raises. Callers that only care about
// "something in rectattn failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RECTATTN_DEFINE_ERROR(Name)             \
  class Name : public Error {                   \
   public:                                      \
    explicit Name(const std::string& what)      \
        : Error(std::string(#Name ": ") + what) \
    {}                                          \
  }

RECTATTN_DEFINE_ERROR(ShapeError);
RECTATTN_DEFINE_ERROR(BlockSizeError);
RECTATTN_DEFINE_ERROR(NonFiniteError);
RECTATTN_DEFINE_ERROR(EmptyRowError);
RECTATTN_DEFINE_ERROR(MissingGridError);
RECTATTN_DEFINE_ERROR(DegenerateRowError);
RECTATTN_DEFINE_ERROR(ConfigError);
RECTATTN_DEFINE_ERROR(ZeroReferenceError);
RECTATTN_DEFINE_ERROR(ZeroVectorError);
RECTATTN_DEFINE_ERROR(IoError);
RECTATTN_DEFINE_ERROR(SchemaError);

#undef RECTATTN_DEFINE_ERROR

}  // namespace rectattn
