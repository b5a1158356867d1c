#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scihier {

// Error taxonomy. Everything thrown by the library derives from Error.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
public:
  explicit DuplicateIdError(std::string id)
      : Error("duplicate paper id \"" + id + "\""), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

private:
  std::string id_;
};

// Strict-schema violations; key() names the offending key when there is one.
class SchemaError : public Error {
public:
  SchemaError(const std::string& what, std::string key = {})
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

// Retryable provider failure (timeouts, 429, 5xx).
class TransientError : public Error {
public:
  using Error::Error;
};

// Non-retryable provider/config failure (bad key, unknown provider, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

class RetriesExhausted : public Error {
public:
  RetriesExhausted(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

private:
  int attempts_;
};

class NotFound : public Error {
public:
  using Error::Error;
};

/// Deterministic PRNG. Only raw 64-bit outputs of std::mt19937_64 are used
/// (the engine's sequence is fixed by the standard; distributions are not).
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a; stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
/// SplitMix64 finalizer, used to combine seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b);

/// Lowercase hex SHA-256 of the input.
std::string sha256_hex(std::string_view data);

std::vector<std::string> split_whitespace(std::string_view text);
std::size_t whitespace_token_count(std::string_view text);
std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
/// Case-fold, trim and collapse internal whitespace.
std::string normalize_phrase(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string text, std::string_view from, std::string_view to);

using TokenCounter = std::function<std::size_t(std::string_view)>;
TokenCounter default_token_counter();

/// Runs fn(i) for i in [0, n) on at most max_in_flight threads. Exceptions
/// from fn are rethrown (the one with the lowest index) after all workers stop.
void parallel_for(std::size_t n, std::size_t max_in_flight,
                  const std::function<void(std::size_t)>& fn);

}  // namespace scihier
