#include "detail/io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ppocma::detail {

std::uint32_t read_u32(const std::string& buf, std::size_t& off) {
  if (buf.size() < off + 4) throw std::runtime_error("checkpoint: truncated u32");
  std::uint32_t v;
  std::memcpy(&v, buf.data() + off, 4);
  off += 4;
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t& off) {
  if (buf.size() < off + 8) throw std::runtime_error("checkpoint: truncated u64");
  std::uint64_t v;
  std::memcpy(&v, buf.data() + off, 8);
  off += 8;
  return v;
}

void read_doubles(const std::string& buf, std::size_t& off, Eigen::VectorXd& out) {
  const std::size_t bytes = static_cast<std::size_t>(out.size()) * sizeof(double);
  if (buf.size() < off + bytes) throw std::runtime_error("checkpoint: truncated payload");
  std::memcpy(out.data(), buf.data() + off, bytes);
  off += bytes;
}

void atomic_write(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return buf;
}

}  // namespace ppocma::detail
