// src/audio.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "l2prof/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "l2prof/common.hpp"

namespace l2prof {

namespace {

std::uint32_t le32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t le16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

void put32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }

}  // namespace

AudioClip read_wav(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0)
    throw ParseError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::size_t len = le32(bytes.data() + pos + 4);
    const char* body = bytes.data() + pos + 8;
    const std::size_t avail = std::min(len, bytes.size() - pos - 8);
    if (id == "fmt ") {
      if (avail < 16) throw ParseError(path + ": short fmt chunk");
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
      if (format == 0xFFFE && avail >= 26) format = le16(body + 24);
    } else if (id == "data") {
      data = body;
      data_len = avail;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data) throw ParseError(path + ": missing data chunk");
  if (channels == 0 || rate == 0) throw ParseError(path + ": missing fmt chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw ParseError(path + ": unsupported sample format (need 16-bit PCM or 32-bit float)");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data + (f * channels + c) * width;
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += static_cast<float>(v) / 32768.0f;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += v;
      }
    }
    clip.samples[static_cast<Eigen::Index>(f)] = acc / channels;
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    const float x = std::clamp(clip.samples[i], -1.0f, 1.0f);
    const auto v = static_cast<std::int16_t>(std::lround(std::min(x * 32768.0f, 32767.0f)));
    put16(out, static_cast<std::uint16_t>(v));
  }
  write_file(path, out);
}

}  // namespace l2prof
