// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Little-endian binary readers/writers for the on-disk containers. Bytes are
// assembled explicitly so the formats are identical on every host; the reader
// tracks its offset so parse failures can name the exact byte.

#ifndef VOICECLOAK_BINARY_IO_HPP_
#define VOICECLOAK_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "voicecloak/errors.hpp"

namespace voicecloak {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    require(out_.good(), ErrorCode::kIoError,
            "cannot open for writing: " + path.string());
  }

  void write_bytes(const char* data, std::size_t n) {
    out_.write(data, static_cast<std::streamsize>(n));
  }

  void write_u8(std::uint8_t v) {
    char b = static_cast<char>(v);
    write_bytes(&b, 1);
  }

  void write_u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    write_bytes(b, 4);
  }

  void write_f64(double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i)
      b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    write_bytes(b, 8);
  }

  void write_string(const std::string& s) {
    write_u32(static_cast<std::uint32_t>(s.size()));
    write_bytes(s.data(), s.size());
  }

  void write_magic(const char magic[4]) { write_bytes(magic, 4); }

  void finish() {
    out_.flush();
    require(out_.good(), ErrorCode::kIoError,
            "write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::kIoError,
            "cannot open for reading: " + path.string());
    data_.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
  }

  std::size_t offset() const { return offset_; }
  std::size_t size() const { return data_.size(); }

  [[noreturn]] void fail_at(const std::string& what) const {
    fail(ErrorCode::kMalformedFile, path_.string() + ": " + what +
                                        " at byte offset " +
                                        std::to_string(offset_));
  }

  std::uint8_t read_u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(data_[offset_++]);
  }

  std::uint32_t read_u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<std::uint8_t>(data_[offset_ + i]))
           << (8 * i);
    offset_ += 4;
    return v;
  }

  double read_f64() {
    need(8, "f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(
                  static_cast<std::uint8_t>(data_[offset_ + i]))
              << (8 * i);
    offset_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string read_string(std::uint32_t max_len = 1u << 20) {
    std::uint32_t len = read_u32();
    if (len > max_len) fail_at("implausible string length");
    need(len, "string body");
    std::string s(data_.data() + offset_, len);
    offset_ += len;
    return s;
  }

  void expect_magic(const char magic[4]) {
    need(4, "magic");
    for (int i = 0; i < 4; ++i) {
      if (data_[offset_ + i] != magic[i]) fail_at("bad magic");
    }
    offset_ += 4;
  }

  // Call after the last field; trailing garbage is a parse failure too.
  void expect_end() {
    if (offset_ != data_.size()) fail_at("trailing bytes after final field");
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (offset_ + n > data_.size()) {
      fail(ErrorCode::kMalformedFile,
           path_.string() + ": truncated while reading " + std::string(what) +
               " at byte offset " + std::to_string(offset_));
    }
  }

  std::filesystem::path path_;
  std::vector<char> data_;
  std::size_t offset_ = 0;
};

}  // namespace voicecloak

#endif  // VOICECLOAK_BINARY_IO_HPP_
