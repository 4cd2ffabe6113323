#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoeval {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input is not well-formed (XML or JSON syntax).
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line, long column)
        : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
          line_(line),
          column_(column) {}

    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

private:
    long line_;
    long column_;
};

/// Input is well-formed but violates a data-model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A line-based corpus could not be converted at all.
class ConversionError : public Error {
public:
    using Error::Error;
};

/// A geoparser response does not follow the output JSON contract.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A remote geoparser could not be reached or kept failing after retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// A remote geoparser answered with a 4xx status; never retried.
class HttpStatusError : public TransportError {
public:
    HttpStatusError(const std::string& what, int status) : TransportError(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Some entries of a geoparser run failed; nothing from the run was cached.
class RunFailure : public Error {
public:
    RunFailure(const std::string& what, std::vector<std::string> failed_entries, bool transport)
        : Error(what), failed_entries_(std::move(failed_entries)), transport_(transport) {}

    const std::vector<std::string>& failed_entries() const noexcept { return failed_entries_; }
    /// True when at least one entry failed for transport reasons.
    bool transport() const noexcept { return transport_; }

private:
    std::vector<std::string> failed_entries_;
    bool transport_;
};

class StoreError : public Error {
public:
    using Error::Error;
};

}  // namespace geoeval
