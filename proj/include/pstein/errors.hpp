#pragma once

#include <stdexcept>
#include <string>

namespace pstein {

//! Invalid construction parameters or a numerical routine that failed to
//! converge while setting up an object (e.g. a normalizing constant).
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//! Evaluation outside the mathematically admissible set (density floor,
//! pole of an exterior Stein formula, ...).
class domain_error : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

//! Operation is not available for the given inputs by design.
class unsupported_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace pstein
