#pragma once

#include <stdexcept>
#include <string>

namespace kmft {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptySupervision : Error {
    EmptySupervision() : Error("supervised time set is empty") {}
};

struct InvalidShape : Error {
    using Error::Error;
};

struct SingularKernel : Error {
    using Error::Error;
};

struct SingularSystem : Error {
    using Error::Error;
};

struct DivergentPrior : Error {
    using Error::Error;
};

struct DegenerateTilt : Error {
    using Error::Error;
};

struct DegenerateInput : Error {
    using Error::Error;
};

struct NumericOverflow : Error {
    using Error::Error;
};

struct NoRoot : Error {
    using Error::Error;
};

struct MaxIterations : Error {
    using Error::Error;
};

struct NonDecreasingResidual : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace kmft
