#pragma once

#include <stdexcept>
#include <string>

namespace ibcaan {

// Problem with an input file or user-supplied data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ibcaan
