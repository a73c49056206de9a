// Copyright 2026 The voxt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxt::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void put_bytes(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void put_u32(std::uint32_t v) { put_raw(&v, sizeof v); }
  void put_u64(std::uint64_t v) { put_raw(&v, sizeof v); }
  void put_f32(float v) { put_raw(&v, sizeof v); }

  void put_f32s(std::span<const float> values) {
    put_raw(values.data(), values.size_bytes());
  }

  const std::vector<char>& bytes() const { return buf_; }
  std::vector<char>& bytes() { return buf_; }

 private:
  void put_raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }

  std::vector<char> buf_;
};

// Bounds-checked cursor. Every read returns false instead of running past the
// end so callers can raise their own format-specific error.
class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  bool get_bytes(std::size_t n, std::string& out) {
    if (remaining() < n) return false;
    out.assign(data_.data() + pos_, n);
    pos_ += n;
    return true;
  }

  bool get_u8(std::uint8_t& v) { return get_raw(&v, sizeof v); }
  bool get_u32(std::uint32_t& v) { return get_raw(&v, sizeof v); }
  bool get_u64(std::uint64_t& v) { return get_raw(&v, sizeof v); }
  bool get_f32(float& v) { return get_raw(&v, sizeof v); }

  bool get_f32s(std::span<float> out) { return get_raw(out.data(), out.size_bytes()); }

 private:
  bool get_raw(void* p, std::size_t n) {
    if (remaining() < n) return false;
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
    return true;
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

// Throws IngestError(kOpen) when the file cannot be read.
std::vector<char> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

// Throws Error("io") on failure.
void write_file_bytes(const std::filesystem::path& path, std::span<const char> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

// FNV-1a, used for artifact digests and checkpoint integrity.
std::uint64_t fnv1a64(std::span<const char> bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

}  // namespace voxt::detail
