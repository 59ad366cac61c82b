// models.cpp

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

#include "l2prof/models/conv.hpp"
#include "l2prof/models/speech.hpp"

namespace l2prof::models {

namespace {

using nlohmann::json;

json blocks_json(const std::vector<ConvBlockSpec>& blocks) {
  json a = json::array();
  for (const auto& b : blocks)
    a.push_back({{"out_channels", b.out_channels},
                 {"kernel", {b.kh, b.kw}},
                 {"stride", {b.sh, b.sw}},
                 {"dropout_p", b.dropout_p}});
  return a;
}

std::vector<ConvBlockSpec> blocks_from(const json& a) {
  std::vector<ConvBlockSpec> out;
  for (const auto& j : a) {
    ConvBlockSpec b;
    b.out_channels = j.at("out_channels").get<Index>();
    if (j.contains("kernel")) {
      b.kh = j["kernel"].at(0).get<Index>();
      b.kw = j["kernel"].at(1).get<Index>();
    }
    if (j.contains("stride")) {
      b.sh = j["stride"].at(0).get<Index>();
      b.sw = j["stride"].at(1).get<Index>();
    }
    b.dropout_p = j.value("dropout_p", b.dropout_p);
    out.push_back(b);
  }
  return out;
}

void check_blocks(const std::vector<ConvBlockSpec>& blocks, const char* what) {
  if (blocks.size() != 4)
    throw InvalidArgument(std::string(what) + ": exactly 4 conv blocks required, got " +
                          std::to_string(blocks.size()));
  for (const auto& b : blocks)
    if (b.out_channels <= 0 || b.kh <= 0 || b.kw <= 0 || b.sh <= 0 || b.sw <= 0 || b.dropout_p < 0 ||
        b.dropout_p >= 1)
      throw InvalidArgument(std::string(what) + ": invalid block");
}

template <typename Cfg>
json cnn_json(const Cfg& c, const char* arch) {
  return {{"architecture", arch},
          {"frames", c.frames},
          {"n_mels", c.n_mels},
          {"blocks", blocks_json(c.blocks)},
          {"use_batchnorm", c.use_batchnorm},
          {"pool", {c.pool_h, c.pool_w}},
          {"num_classes", c.num_classes},
          {"seed", c.seed}};
}

template <typename Cfg>
Cfg cnn_from(const json& j) {
  Cfg c;
  c.frames = j.value("frames", c.frames);
  c.n_mels = j.value("n_mels", c.n_mels);
  if (j.contains("blocks")) c.blocks = blocks_from(j["blocks"]);
  c.use_batchnorm = j.value("use_batchnorm", c.use_batchnorm);
  if (j.contains("pool")) {
    c.pool_h = j["pool"].at(0).get<Index>();
    c.pool_w = j["pool"].at(1).get<Index>();
  }
  c.num_classes = j.value("num_classes", c.num_classes);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

void Cnn2dConfig::validate() const {
  check_blocks(blocks, "cnn2d");
  if (num_classes < 2) throw InvalidArgument("cnn2d: need at least 2 classes");
}
json Cnn2dConfig::to_json() const { return cnn_json(*this, "cnn2d"); }
Cnn2dConfig Cnn2dConfig::from_json(const json& j) { return cnn_from<Cnn2dConfig>(j); }

void FreqCnnConfig::validate() const {
  check_blocks(blocks, "freq-cnn");
  for (const auto& b : blocks)
    if (b.kh != 1 || b.sh != 1) throw InvalidArgument("freq-cnn: kernel time extent must be 1");
  if (pool_h != 1) throw InvalidArgument("freq-cnn: pooling must not reduce time");
  if (num_classes < 2) throw InvalidArgument("freq-cnn: need at least 2 classes");
}
json FreqCnnConfig::to_json() const { return cnn_json(*this, "freq-cnn"); }
FreqCnnConfig FreqCnnConfig::from_json(const json& j) { return cnn_from<FreqCnnConfig>(j); }

void ResNetConfig::validate() const {
  if (channels.size() != 5)
    throw InvalidArgument("resnet: exactly 5 residual blocks required, got " + std::to_string(channels.size()));
  if (kernel <= 0 || stride <= 0) throw InvalidArgument("resnet: invalid kernel/stride");
  if (num_classes < 2) throw InvalidArgument("resnet: need at least 2 classes");
}
json ResNetConfig::to_json() const {
  return {{"architecture", "resnet"}, {"frames", frames},   {"n_mels", n_mels},
          {"channels", channels},     {"kernel", kernel},   {"stride", stride},
          {"num_classes", num_classes}, {"seed", seed}};
}
ResNetConfig ResNetConfig::from_json(const json& j) {
  ResNetConfig c;
  c.frames = j.value("frames", c.frames);
  c.n_mels = j.value("n_mels", c.n_mels);
  if (j.contains("channels")) c.channels = j["channels"].get<std::vector<Index>>();
  c.kernel = j.value("kernel", c.kernel);
  c.stride = j.value("stride", c.stride);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.seed = j.value("seed", c.seed);
  return c;
}

json SpeechEncoderConfig::to_json() const {
  json hs = json::array();
  for (const auto& h : heads) hs.push_back({{"name", h.name}, {"num_classes", h.num_classes}, {"hidden", h.hidden}});
  return {{"architecture", "speech-encoder"},
          {"encoder", encoder},
          {"feature_extractor_frozen", feature_extractor_frozen},
          {"encoder_dim", encoder_dim},
          {"pooling", std_pooling ? "mean+std" : "mean"},
          {"heads", hs},
          {"seed", seed}};
}

SpeechEncoderConfig SpeechEncoderConfig::from_json(const json& j) {
  SpeechEncoderConfig c;
  c.encoder = j.value("encoder", c.encoder);
  c.feature_extractor_frozen = j.value("feature_extractor_frozen", c.feature_extractor_frozen);
  c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
  const std::string pooling = j.value("pooling", std::string("mean"));
  if (pooling != "mean" && pooling != "mean+std") throw ParseError("unknown pooling '" + pooling + "'");
  c.std_pooling = pooling == "mean+std";
  if (j.contains("heads")) {
    c.heads.clear();
    for (const auto& h : j["heads"])
      c.heads.push_back({h.at("name").get<std::string>(), h.value("num_classes", Index(3)), h.value("hidden", Index(128))});
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<std::array<Index, 3>> resnet_shape_chain(const ResNetConfig& cfg) {
  cfg.validate();
  std::vector<std::array<Index, 3>> chain;
  Index h = cfg.frames, w = cfg.n_mels;
  const Index pad = cfg.kernel / 2;
  chain.push_back({h, w, 1});
  for (Index c : cfg.channels) {
    h = (h + 2 * pad - cfg.kernel) / cfg.stride + 1;
    w = (w + 2 * pad - cfg.kernel) / cfg.stride + 1;
    chain.push_back({h, w, c});
  }
  return chain;
}

}  // namespace l2prof::models
