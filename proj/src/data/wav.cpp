// SPDX-License-Identifier: Apache-2.0
#include "data/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "core/error.hpp"

namespace phonebench {

namespace {

std::uint32_t u32le(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16le(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::ofstream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ofstream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) { fail(ErrorCode::Format, path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    bad("not a RIFF/WAVE file");
  }
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* h = bytes.data() + pos;
    const std::uint32_t size = u32le(h + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) bad("truncated chunk");
    if (std::memcmp(h, "fmt ", 4) == 0) {
      if (size < 16) bad("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      if (u16le(f) != 1) bad("only PCM is supported");
      if (u16le(f + 2) != 1) bad("only mono is supported");
      out.sample_rate = u32le(f + 4);
      if (u16le(f + 14) != 16) bad("only 16-bit samples are supported");
      have_fmt = true;
    } else if (std::memcmp(h, "data", 4) == 0) {
      if (!have_fmt) bad("data chunk before fmt chunk");
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(u16le(bytes.data() + body + 2 * i));
        out.samples[i] = s / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  fail(ErrorCode::Format, path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, 1);
  put16(os, 1);
  put32(os, sample_rate);
  put32(os, sample_rate * 2);
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_bytes);
  for (double v : samples) {
    const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace phonebench
