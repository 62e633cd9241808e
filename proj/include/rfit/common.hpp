#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using VecX = Eigen::VectorXd;
using RowVecX = Eigen::RowVectorXd;
using MatX = Eigen::MatrixXd;
using Complex = std::complex<double>;
using VecXc = Eigen::VectorXcd;
using MatXc = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (bad scene, bad parameter, bad shape).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during evaluation (non-finite values, singular systems).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Logging. Warnings go to stderr unless a handler is installed; tests swap the
// handler to capture messages.
namespace log {

enum class Level { kDebug, kInfo, kWarning, kError };

using Handler = std::function<void(Level, const std::string&)>;

void set_handler(Handler handler);
void reset_handler();
void set_min_level(Level level);
void write(Level level, const std::string& message);

inline void info(const std::string& message) { write(Level::kInfo, message); }
inline void warn(const std::string& message) { write(Level::kWarning, message); }

/// RAII capture of warnings for the lifetime of the object.
class ScopedCapture {
 public:
  ScopedCapture();
  ~ScopedCapture();
  ScopedCapture(const ScopedCapture&) = delete;
  ScopedCapture& operator=(const ScopedCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

 private:
  std::vector<std::string> messages_;
};

}  // namespace log

// Worker count used by the data-parallel loops. 0 means "ask the hardware".
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs body(begin, end, chunk_index) over [0, n) split into contiguous chunks.
/// Chunk boundaries depend only on n and the chunk count, so callers that merge
/// per-chunk results in chunk order get the same answer for any thread count.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// FNV-1a over raw bytes; used for parameter snapshot hashes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ull);

/// Mixes two 64-bit values into a well-spread seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace rfit
