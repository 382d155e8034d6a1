#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gpw {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an operation's mathematical precondition fails; `quantity`
// names the value that violated it (e.g. "eps_{1,1}", "psi^(5)").
struct PreconditionError : Error {
  std::string quantity;
  PreconditionError(std::string quantity_, const std::string& what_)
      : Error(what_), quantity(std::move(quantity_)) {}
};

struct ParseError : Error {
  int line;
  int col;
  ParseError(int line_, int col_, const std::string& msg)
      : Error("line " + std::to_string(line_) + ", col " + std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

// Deterministic RNG used by every sampling path (mt19937_64 output is
// specified by the standard, so seeded runs reproduce across platforms).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  double uniform(double a, double b) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return a + (b - a) * u;
  }

  // Inclusive range.
  long long uniform_int(long long a, long long b) {
    return a + static_cast<long long>(gen_() % static_cast<std::uint64_t>(b - a + 1));
  }

 private:
  std::mt19937_64 gen_;
};

inline bool approx_rel(double a, double b, double rel, double abs_floor = 0.0) {
  const double diff = a > b ? a - b : b - a;
  const double scale = std::max(a < 0 ? -a : a, b < 0 ? -b : b);
  return diff <= abs_floor || diff <= rel * scale;
}

}  // namespace gpw
