#pragma once

#include <stdexcept>
#include <string>

namespace gppi {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input vectors/matrices with inconsistent or unexpected dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Gram matrix not factorizable even after the maximum jitter escalation.
class ConditioningError : public Error {
public:
    using Error::Error;
};

// Hyperparameter optimization produced a non-finite likelihood.
class FitError : public Error {
public:
    using Error::Error;
};

// Belief propagation failure (indefinite covariance, failed solve).
class PropagationError : public Error {
public:
    using Error::Error;
};

// Plant integration produced a non-finite state.
class IntegrationError : public Error {
public:
    using Error::Error;
};

// Desirability fell below the representable floor; advise rescaling.
class DesirabilityUnderflowError : public Error {
public:
    using Error::Error;
};

// Sampling weights degenerate; advise a larger temperature.
class TemperatureError : public Error {
public:
    using Error::Error;
};

// Control/noise channel structure violated (e.g. B outside range of G).
class StructuralError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gppi
