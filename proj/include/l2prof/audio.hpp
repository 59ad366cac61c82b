// l2prof/audio.hpp

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

#include <optional>
#include <string>

#include <Eigen/Core>

namespace l2prof {

struct SourceSpan {
  std::string recording_id;
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Mono waveform in [-1, 1] with its rate and, optionally, where it came from.
struct AudioClip {
  Eigen::VectorXf samples;
  int sample_rate = 16000;
  std::optional<SourceSpan> span;

  Eigen::Index size() const { return samples.size(); }
  bool empty() const { return samples.size() == 0; }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Multi-channel input is mixed down to mono.
AudioClip read_wav(const std::string& path);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace l2prof
