#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ecgqa {

/// Appends little-endian fields to an in-memory buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag) { buffer_.append(tag); }
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::string_view data) { buffer_.append(data); }

  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
};

/// Reads little-endian fields; any read past the end throws FormatError.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string_view bytes(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// SHA-1 of "blob <size>\0<contents>", i.e. the id git assigns to the file.
std::string git_blob_sha1(std::string_view contents);

}  // namespace ecgqa
