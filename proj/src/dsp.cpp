// src/dsp.cpp

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

#include "l2prof/dsp.hpp"

#include <cstring>
#include <numeric>

namespace l2prof {

namespace {

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.95;

double kaiser(double r, double beta) {
  if (std::abs(r) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, beta);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw InvalidArgument("resample: target_rate must be positive");
  if (clip.empty()) throw InvalidArgument("resample: empty clip");
  if (clip.sample_rate <= 0) throw InvalidArgument("resample: bad source rate");
  if (clip.sample_rate == target_rate) return clip;

  // Output sample j sits at input position j * down / up.
  const long g = std::gcd(clip.sample_rate, target_rate);
  const long up = target_rate / g;
  const long down = clip.sample_rate / g;
  const double cutoff = 0.5 * kRolloff * std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / (2.0 * cutoff);
  const long taps = static_cast<long>(std::ceil(half_width));

  // Polyphase table: phase p covers offsets t - i for frac = p / up.
  const long width = 2 * taps + 1;
  std::vector<double> table(static_cast<std::size_t>(up * width));
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / up;
    for (long k = -taps; k <= taps; ++k) {
      const double x = frac - k;  // t - i with i = floor(t) + k
      table[static_cast<std::size_t>(p * width + k + taps)] =
          2.0 * cutoff * sinc(2.0 * cutoff * x) * kaiser(x / half_width, kKaiserBeta);
    }
  }

  const Index n = clip.size();
  const auto out_len = static_cast<Index>(
      std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  AudioClip out;
  out.sample_rate = target_rate;
  out.span = clip.span;
  out.samples.resize(out_len);
  for (Index j = 0; j < out_len; ++j) {
    const long long num = static_cast<long long>(j) * down;
    const long long base = num / up;
    const long phase = static_cast<long>(num % up);
    const double* h = &table[static_cast<std::size_t>(phase * width)];
    double acc = 0.0;
    for (long k = -taps; k <= taps; ++k) {
      const long long i = base + k;
      if (i < 0 || i >= n) continue;
      acc += h[k + taps] * clip.samples[static_cast<Index>(i)];
    }
    out.samples[j] = static_cast<float>(acc);
  }
  return out;
}

std::vector<Segment> segment(const AudioClip& clip, double length_s) {
  if (!(length_s > 0.0)) throw InvalidArgument("segment: length must be positive");
  if (clip.sample_rate != kModelSampleRate)
    throw InvalidArgument("segment: clip must be at 16 kHz, got " +
                          std::to_string(clip.sample_rate));
  const auto len = static_cast<Index>(std::llround(length_s * clip.sample_rate));
  const Index n = clip.size();
  const Index full = n / len;
  const Index tail = n - full * len;
  const bool keep_tail = tail > 0 && (2 * tail >= len || full == 0);

  const std::string rec = clip.span ? clip.span->recording_id : std::string();
  const double origin = clip.span ? clip.span->start_s : 0.0;
  std::vector<Segment> out;
  const Index count = full + (keep_tail ? 1 : 0);
  for (Index s = 0; s < count; ++s) {
    Segment seg;
    seg.index = static_cast<int>(s);
    seg.clip.sample_rate = clip.sample_rate;
    seg.clip.samples = Eigen::VectorXf::Zero(len);
    const Index avail = std::min(len, n - s * len);
    seg.clip.samples.head(avail) = clip.samples.segment(s * len, avail);
    seg.padded_samples = len - avail;
    const double start = origin + static_cast<double>(s * len) / clip.sample_rate;
    seg.clip.span = SourceSpan{rec, start, start + length_s};
    out.push_back(std::move(seg));
  }
  return out;
}

void FbankConfig::validate() const {
  if (n_mels < 1) throw InvalidArgument("FbankConfig: n_mels must be >= 1");
  if (sample_rate <= 0) throw InvalidArgument("FbankConfig: bad sample rate");
  if (frame_hop() < 1 || frame_hop() > frame_length())
    throw InvalidArgument("FbankConfig: need 0 < frame_hop <= frame_length");
  if (fft_size < frame_length())
    throw InvalidArgument("FbankConfig: fft_size shorter than a frame");
  if (!(f_min >= 0.0 && f_min < f_max))
    throw InvalidArgument("FbankConfig: need 0 <= f_min < f_max");
  if (f_max > sample_rate / 2.0)
    throw InvalidArgument("FbankConfig: f_max above Nyquist");
  if (!(log_floor > 0.0)) throw InvalidArgument("FbankConfig: log_floor must be > 0");
}

nlohmann::json FbankConfig::to_json() const {
  return {{"n_mels", n_mels},       {"frame_length_ms", frame_length_ms},
          {"frame_hop_ms", frame_hop_ms}, {"fft_size", fft_size},
          {"f_min", f_min},         {"f_max", f_max},
          {"log_floor", log_floor}, {"sample_rate", sample_rate},
          {"window", "hamming"},    {"mel_scale", "htk"},
          {"filter_norm", "unit-area"}};
}

FbankConfig FbankConfig::from_json(const nlohmann::json& j) {
  FbankConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.frame_length_ms = j.value("frame_length_ms", c.frame_length_ms);
  c.frame_hop_ms = j.value("frame_hop_ms", c.frame_hop_ms);
  c.fft_size = j.value("fft_size", c.fft_size);
  c.f_min = j.value("f_min", c.f_min);
  c.f_max = j.value("f_max", c.f_max);
  c.log_floor = j.value("log_floor", c.log_floor);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  return c;
}

std::vector<double> mel_edges_hz(const FbankConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}

NormScope parse_norm_scope(const std::string& s) {
  if (s == "per_utterance" || s == "per-utterance") return NormScope::per_utterance;
  if (s == "corpus_stats" || s == "corpus-stats") return NormScope::corpus_stats;
  throw InvalidArgument("unknown normalization scope '" + s + "'");
}

std::string to_string(NormScope s) {
  return s == NormScope::per_utterance ? "per_utterance" : "corpus_stats";
}

namespace {
constexpr char kMagic[4] = {'L', '2', 'F', 'B'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_feature_file(const std::string& path, const FeatureMatrix<float>& f,
                        nlohmann::json header) {
  header["rows"] = f.frames();
  header["cols"] = f.bins();
  header["frame_hop_ms"] = f.frame_hop_ms;
  header["normalized"] = f.normalized;
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  out.append(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += h;
  // values is row-major, so its buffer is already the on-disk order.
  out.append(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::size_t>(f.values.size()) * sizeof(float));
  write_file(path, out);
}

FeatureFile read_feature_file(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError(path + ": not a feature file");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kVersion) throw ParseError(path + ": unsupported version");
  std::uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (16 + hlen > bytes.size()) throw ParseError(path + ": truncated header");
  FeatureFile ff;
  try {
    ff.header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
  const Index rows = ff.header.at("rows").get<Index>();
  const Index cols = ff.header.at("cols").get<Index>();
  const std::size_t need = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (16 + hlen + need != bytes.size()) throw ParseError(path + ": size mismatch");
  ff.features.values.resize(rows, cols);
  std::memcpy(ff.features.values.data(), bytes.data() + 16 + hlen, need);
  ff.features.frame_hop_ms = ff.header.value("frame_hop_ms", 10.0);
  ff.features.normalized = ff.header.value("normalized", false);
  return ff;
}

}  // namespace l2prof
