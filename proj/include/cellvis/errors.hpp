#pragma once

#include <stdexcept>
#include <string>

namespace cellvis {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CELLVIS_DEFINE_ERROR(Name)   \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  };

CELLVIS_DEFINE_ERROR(ParseError)
CELLVIS_DEFINE_ERROR(LengthMismatchError)
CELLVIS_DEFINE_ERROR(ArgumentError)
CELLVIS_DEFINE_ERROR(SchemaError)
CELLVIS_DEFINE_ERROR(OrderingError)
CELLVIS_DEFINE_ERROR(ConfigError)
CELLVIS_DEFINE_ERROR(ParameterError)
CELLVIS_DEFINE_ERROR(ShapeError)
CELLVIS_DEFINE_ERROR(StateError)
CELLVIS_DEFINE_ERROR(DegenerateEncodingError)
CELLVIS_DEFINE_ERROR(IoError)
CELLVIS_DEFINE_ERROR(NumericError)

#undef CELLVIS_DEFINE_ERROR

}  // namespace cellvis
