#pragma once

#include <stdexcept>
#include <string>

namespace graphfield {

class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class DisconnectedGraph : public Error {
  using Error::Error;
};

class DegenerateEdge : public Error {
  using Error::Error;
};

class PointOffGraph : public Error {
  using Error::Error;
};

class BrokenChain : public Error {
  using Error::Error;
};

class AmbiguousChain : public Error {
  using Error::Error;
};

class DegeneratePath : public Error {
  using Error::Error;
};

class NotPositiveDefinite : public Error {
  using Error::Error;
};

class DimensionMismatch : public Error {
  using Error::Error;
};

class ParseError : public Error {
  using Error::Error;
};

}  // namespace graphfield
