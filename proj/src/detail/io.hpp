#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <string>

// byte-level helpers shared by the checkpoint containers (little-endian,
// doubles copied verbatim so round trips are bit-exact)
namespace ppocma::detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void append_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline void append_doubles(std::string& out, const Eigen::VectorXd& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

std::uint32_t read_u32(const std::string& buf, std::size_t& off);
std::uint64_t read_u64(const std::string& buf, std::size_t& off);
void read_doubles(const std::string& buf, std::size_t& off, Eigen::VectorXd& out);

/// Write-temp-then-rename so partially written files are never observed.
void atomic_write(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace ppocma::detail
