/*
 Copyright 2026 The sfrl Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace sfrl
{

/// Caller broke a documented precondition (shape mismatch, out-of-range parameter).
class ContractViolation : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced non-finite values or failed to converge.
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Constraint tightening collapsed a set.
class EmptySetError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class TerminalSynthesisFailed : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class SqpDiverged : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

class ResetExhausted : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed configuration file or override.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string &what)
{
    if (!ok)
        throw ContractViolation(what);
}

} // namespace sfrl
