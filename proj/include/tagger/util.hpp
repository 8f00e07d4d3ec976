#ifndef TAGGER_UTIL_HPP_
#define TAGGER_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tagger {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// usage/config/format/data errors exit 2, numeric failures exit 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// SHA-1 of a git blob header + content ("blob <len>\0<content>"), hex-encoded.
// Matches `git hash-object` for regular files.
std::string git_blob_sha1(const std::string& content);

// Raw SHA-1 of a byte string, hex-encoded.
std::string sha1_hex(const std::string& content);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Current UTC time as ISO-8601 (manifests only; never in primary artifacts).
std::string utc_timestamp();

// Worker cap from TAGGER_THREADS (>= 1); defaults to 1.
int worker_count();

// Keeps large short-lived tensor buffers on the heap instead of per-batch
// mmap/munmap round trips (glibc only; no-op elsewhere).
void tune_allocator();

// Runs fn(i) for i in [0, n) across up to worker_count() threads. Results must
// be written to disjoint, preallocated slots so the reduction order stays
// deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tagger

#endif  // TAGGER_UTIL_HPP_
