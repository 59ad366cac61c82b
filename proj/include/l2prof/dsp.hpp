// l2prof/dsp.hpp

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

#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "l2prof/audio.hpp"
#include "l2prof/common.hpp"

namespace l2prof {

inline constexpr int kModelSampleRate = 16000;

/// Band-limited rate conversion (Kaiser-windowed sinc, polyphase).
/// A clip already at `target_rate` is returned unchanged.
AudioClip resample(const AudioClip& clip, int target_rate = kModelSampleRate);

struct Segment {
  AudioClip clip;
  int index = 0;
  Index padded_samples = 0;
};

/// Cuts a 16 kHz clip into consecutive windows of exactly `length_s`.
/// A trailing remainder is zero-padded when it is at least half a window,
/// or when it is the only content; shorter tails are dropped.
std::vector<Segment> segment(const AudioClip& clip, double length_s = 8.0);

struct FbankConfig {
  int n_mels = 40;
  double frame_length_ms = 25.0;
  double frame_hop_ms = 10.0;
  int fft_size = 512;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
  int sample_rate = kModelSampleRate;

  Index frame_length() const {
    return static_cast<Index>(std::lround(frame_length_ms * sample_rate / 1000.0));
  }
  Index frame_hop() const {
    return static_cast<Index>(std::lround(frame_hop_ms * sample_rate / 1000.0));
  }
  /// Throws InvalidArgument on inconsistent geometry.
  void validate() const;
  nlohmann::json to_json() const;
  static FbankConfig from_json(const nlohmann::json& j);
};

/// 1 + floor((len - frame_len) / hop), or 0 when len < frame_len.
inline Index frame_count(Index num_samples, const FbankConfig& cfg) {
  if (num_samples < cfg.frame_length()) return 0;
  return 1 + (num_samples - cfg.frame_length()) / cfg.frame_hop();
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

/// Edge frequencies (n_mels + 2 of them) equally spaced on the mel scale.
std::vector<double> mel_edges_hz(const FbankConfig& cfg);

/// Frames x mel-bins log energies.
template <typename Scalar>
struct FeatureMatrix {
  RowMatrixX<Scalar> values;
  double frame_hop_ms = 10.0;
  bool normalized = false;

  Index frames() const { return values.rows(); }
  Index bins() const { return values.cols(); }
};

/// n_mels x (fft_size/2 + 1) triangular filters, each scaled to unit area
/// in Hz.
template <typename Scalar>
MatrixX<Scalar> mel_filterbank(const FbankConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges_hz(cfg);
  const Index num_bins = cfg.fft_size / 2 + 1;
  MatrixX<Scalar> fb = MatrixX<Scalar>::Zero(cfg.n_mels, num_bins);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (Index k = 0; k < num_bins; ++k) {
      const double f = k * bin_hz;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      if (w > 0.0) fb(m, k) = static_cast<Scalar>(w * norm);
    }
  }
  return fb;
}

template <typename Scalar>
VectorX<Scalar> hamming_window(Index n) {
  VectorX<Scalar> w(n);
  for (Index i = 0; i < n; ++i)
    w[i] = static_cast<Scalar>(0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n - 1)));
  return w;
}

/// Log mel filterbank: log(mel(|FFT(hamming * frame)|^2) + log_floor).
template <typename Scalar>
FeatureMatrix<Scalar> fbank(const AudioClip& clip, const FbankConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw InvalidArgument("fbank: clip rate " + std::to_string(clip.sample_rate) +
                          " differs from config rate " +
                          std::to_string(cfg.sample_rate));
  const Index frames = frame_count(clip.size(), cfg);
  if (frames == 0)
    throw InvalidArgument("fbank: input shorter than one frame (" +
                          std::to_string(clip.size()) + " samples)");
  const Index flen = cfg.frame_length(), hop = cfg.frame_hop();
  const Index num_bins = cfg.fft_size / 2 + 1;
  const MatrixX<Scalar> filters = mel_filterbank<Scalar>(cfg);
  const VectorX<Scalar> window = hamming_window<Scalar>(flen);

  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Scalar> frame(static_cast<std::size_t>(cfg.fft_size), Scalar(0));
  std::vector<std::complex<Scalar>> spectrum;
  VectorX<Scalar> power(num_bins);

  FeatureMatrix<Scalar> out;
  out.frame_hop_ms = cfg.frame_hop_ms;
  out.values.resize(frames, cfg.n_mels);
  for (Index t = 0; t < frames; ++t) {
    const Index start = t * hop;
    for (Index i = 0; i < flen; ++i)
      frame[static_cast<std::size_t>(i)] =
          static_cast<Scalar>(clip.samples[start + i]) * window[i];
    fft.fwd(spectrum, frame);
    for (Index k = 0; k < num_bins; ++k)
      power[k] = std::norm(spectrum[static_cast<std::size_t>(k)]);
    const VectorX<Scalar> mel = filters * power;
    out.values.row(t) =
        (mel.array() + static_cast<Scalar>(cfg.log_floor)).log().transpose();
  }
  return out;
}

enum class NormScope { per_utterance, corpus_stats };

NormScope parse_norm_scope(const std::string& s);
std::string to_string(NormScope s);

template <typename Scalar>
struct NormStats {
  VectorX<Scalar> mean;
  VectorX<Scalar> stddev;  // population
};

inline constexpr double kZscoreEpsilon = 1e-8;

/// Per-bin mean and population standard deviation over every frame of
/// every matrix.
template <typename Scalar>
NormStats<Scalar> compute_norm_stats(std::span<const FeatureMatrix<Scalar>> feats) {
  if (feats.empty()) throw InvalidArgument("compute_norm_stats: no features");
  const Index bins = feats.front().bins();
  VectorX<double> sum = VectorX<double>::Zero(bins), sq = sum;
  double n = 0;
  for (const auto& f : feats) {
    if (f.bins() != bins) throw ShapeError("compute_norm_stats: bin count mismatch");
    const auto v = f.values.template cast<double>();
    sum += v.colwise().sum().transpose();
    n += static_cast<double>(f.frames());
  }
  const VectorX<double> mean = sum / n;
  for (const auto& f : feats) {
    const auto v = f.values.template cast<double>();
    sq += (v.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  return {mean.cast<Scalar>(), (sq / n).cwiseSqrt().cast<Scalar>()};
}

/// Column-wise z-score. Bins whose standard deviation is below the
/// epsilon guard become all-zero. Refuses already-normalized input.
template <typename Scalar>
FeatureMatrix<Scalar> zscore(const FeatureMatrix<Scalar>& features, NormScope scope,
                             const NormStats<Scalar>* stats = nullptr) {
  if (features.normalized)
    throw InvalidArgument("zscore: features are already normalized");
  if (features.frames() == 0) throw InvalidArgument("zscore: empty features");
  NormStats<Scalar> local;
  if (scope == NormScope::per_utterance) {
    local = compute_norm_stats<Scalar>(std::span(&features, 1));
    stats = &local;
  } else if (stats == nullptr) {
    throw InvalidArgument("zscore: corpus_stats scope needs precomputed statistics");
  }
  if (stats->mean.size() != features.bins() || stats->stddev.size() != features.bins())
    throw ShapeError("zscore: statistics do not match the bin count");

  FeatureMatrix<Scalar> out = features;
  for (Index c = 0; c < out.bins(); ++c) {
    const double sd = static_cast<double>(stats->stddev[c]);
    if (sd < kZscoreEpsilon) {
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = ((out.values.col(c).array() - stats->mean[c]) /
                           static_cast<Scalar>(sd)).matrix();
    }
  }
  out.normalized = true;
  return out;
}

/// Binary feature container: "L2FB", u32 version, u64 header length, JSON
/// header, then rows x cols little-endian float32 in row-major order.
struct FeatureFile {
  nlohmann::json header;
  FeatureMatrix<float> features;
};

void write_feature_file(const std::string& path, const FeatureMatrix<float>& f,
                        nlohmann::json header);
FeatureFile read_feature_file(const std::string& path);

}  // namespace l2prof
