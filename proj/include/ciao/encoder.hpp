#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ciao/ops.hpp"
#include "json.hpp"

namespace ciao {

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<std::size_t> blocks{8, 16, 32};
  // Every block is conv(3x3, stride 1, pad 1) -> relu -> maxpool2x2.
  static constexpr std::size_t kernel = 3;
  static constexpr std::size_t stride = 1;
  static constexpr std::size_t padding = 1;

  std::size_t last_conv_index() const { return blocks.size() - 1; }

  void validate() const {
    if (blocks.size() < 2) throw ValidationError("encoder needs at least 2 conv blocks");
    if (in_channels == 0) throw ValidationError("encoder input channels must be positive");
    std::size_t h = height, w = width;
    for (std::size_t c : blocks) {
      if (c == 0) throw ValidationError("encoder block channels must be positive");
      if (h % 2 || w % 2) throw ValidationError("encoder spatial dims must stay even at every pool");
      h /= 2;
      w /= 2;
    }
  }

  // Spatial size of the last block output.
  std::size_t out_height() const { return height >> blocks.size(); }
  std::size_t out_width() const { return width >> blocks.size(); }
  std::size_t feature_size() const { return blocks.back() * out_height() * out_width(); }

  friend bool operator==(const EncoderConfig& a, const EncoderConfig& b) {
    return a.in_channels == b.in_channels && a.height == b.height && a.width == b.width && a.blocks == b.blocks;
  }
};

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"blocks", c.blocks},
          {"input_size", {c.in_channels, c.height, c.width}},
          {"last_conv_index", c.last_conv_index()}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    if (j.contains("blocks")) c.blocks = j.at("blocks").get<std::vector<std::size_t>>();
    if (j.contains("input_size")) {
      auto s = j.at("input_size").get<std::vector<std::size_t>>();
      if (s.size() != 3) throw ValidationError("input_size must be [channels, H, W]");
      c.in_channels = s[0];
      c.height = s[1];
      c.width = s[2];
    }
    if (j.contains("last_conv_index") && j.at("last_conv_index").get<std::size_t>() != c.last_conv_index())
      throw ValidationError("last_conv_index does not match the block count");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

template <class T>
struct ConvLayer {
  BasicParam<T> weight;  // [Cout, Cin, k, k]
  BasicParam<T> bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 1;
};

// Output of the conv block: maxpool(relu(conv(x))).
template <class T>
BasicVar<T> conv_block(BasicVar<T> x, BasicVar<T> w, BasicVar<T> b, std::size_t stride, std::size_t padding) {
  return maxpool2x2(relu(conv2d(x, w, b, stride, padding)));
}

template <class T>
struct EncodeVars {
  BasicVar<T> last_conv_input;
  BasicVar<T> last_conv_output;  // [B, C, h, w]
  BasicVar<T> flat;              // [B, C*h*w]
};

struct EncodeResult {
  Tensor last_conv_input;
  Tensor last_conv_output;
  Tensor flat;
};

/// Stack of conv blocks. The last block's output is the encoded representation.
template <class T>
class BasicEncoder {
 public:
  BasicEncoder() : BasicEncoder(EncoderConfig{}, 0) {}

  BasicEncoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    std::size_t cin = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
      const std::size_t cout = cfg_.blocks[i], k = EncoderConfig::kernel;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
      BasicTensor<T> w({cout, cin, k, k});
      for (auto& v : w.data()) v = static_cast<T>(dist(rng));
      const std::string prefix = "encoder.conv" + std::to_string(i);
      layers_.push_back(ConvLayer<T>{BasicParam<T>(prefix + ".w", std::move(w)),
                                     BasicParam<T>(prefix + ".b", BasicTensor<T>({cout})), EncoderConfig::stride,
                                     EncoderConfig::padding});
      cin = cout;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  std::vector<ConvLayer<T>>& layers() { return layers_; }
  const std::vector<ConvLayer<T>>& layers() const { return layers_; }
  ConvLayer<T>& last_conv() { return layers_.back(); }
  const ConvLayer<T>& last_conv() const { return layers_.back(); }

  std::vector<BasicParam<T>*> params() {
    std::vector<BasicParam<T>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void check_input(const Shape& s) const {
    if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.height || s[3] != cfg_.width) {
      throw ShapeError("encoder expects [B," + std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.height) +
                       "," + std::to_string(cfg_.width) + "] images, got " + shape_str(s));
    }
  }

  // Tensor fed to the final conv layer.
  BasicVar<T> prefix(BasicGraph<T>& g, BasicVar<T> images) {
    check_input(images.shape());
    BasicVar<T> x = images;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = apply(g, i, x);
    return x;
  }

  BasicVar<T> last_block(BasicGraph<T>& g, BasicVar<T> last_input) { return apply(g, layers_.size() - 1, last_input); }

  EncodeVars<T> forward(BasicGraph<T>& g, BasicVar<T> images) {
    BasicVar<T> in = prefix(g, images);
    BasicVar<T> out = last_block(g, in);
    return {in, out, flatten(out)};
  }

  void freeze() {
    for (auto* p : params()) p->trainable = false;
  }
  void unfreeze_last_conv() {
    freeze();
    layers_.back().weight.trainable = true;
    layers_.back().bias.trainable = true;
  }
  void unfreeze_all() {
    for (auto* p : params()) p->trainable = true;
  }

  bool prefix_frozen() const {
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (layers_[i].weight.trainable || layers_[i].bias.trainable) return false;
    return true;
  }
  bool last_conv_frozen() const { return !layers_.back().weight.trainable && !layers_.back().bias.trainable; }

 private:
  BasicVar<T> apply(BasicGraph<T>& g, std::size_t i, BasicVar<T> x) {
    auto& l = layers_[i];
    return conv_block(x, g.param(l.weight), g.param(l.bias), l.stride, l.padding);
  }

  EncoderConfig cfg_;
  std::vector<ConvLayer<T>> layers_;
};

using Encoder = BasicEncoder<float>;

/// Gradient-free encoding, processed in chunks along the batch axis.
inline EncodeResult encode(Encoder& encoder, const Tensor& images, std::size_t chunk = 64) {
  encoder.check_input(images.shape());
  const std::size_t n = images.dim(0);
  std::vector<float> in_data, out_data;
  Shape in_shape, out_shape;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    Graph g(GradMode::none);
    auto vars = encoder.forward(g, g.constant(images.slice_rows(begin, end)));
    const auto& a = vars.last_conv_input.value();
    const auto& b = vars.last_conv_output.value();
    in_data.insert(in_data.end(), a.data().begin(), a.data().end());
    out_data.insert(out_data.end(), b.data().begin(), b.data().end());
    in_shape = a.shape();
    out_shape = b.shape();
  }
  in_shape[0] = n;
  out_shape[0] = n;
  Tensor out(out_shape, std::move(out_data));
  Tensor flat = out.reshaped({n, out.size() / n});
  return {Tensor(in_shape, std::move(in_data)), std::move(out), std::move(flat)};
}

inline void save_encoder(const Encoder& encoder, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& layers = encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    save_tensor(dir / ("layer_" + std::to_string(i) + "_w.tnsr"), layers[i].weight.value);
    save_tensor(dir / ("layer_" + std::to_string(i) + "_b.tnsr"), layers[i].bias.value);
  }
  write_file_bytes(dir / "config.json", to_json(encoder.config()).dump(2) + "\n");
}

inline Encoder load_encoder(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "config.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(cfg_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(cfg_path.string() + ": " + e.what());
  }
  Encoder enc(encoder_config_from_json(j), 0);
  auto& layers = enc.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (auto* p : {&layers[i].weight, &layers[i].bias}) {
      const char suffix = p == &layers[i].weight ? 'w' : 'b';
      const auto path = dir / ("layer_" + std::to_string(i) + "_" + suffix + ".tnsr");
      Tensor t = load_tensor(path);
      if (t.shape() != p->value.shape()) {
        throw FormatError(path.string() + ": shape " + shape_str(t.shape()) + " does not match config " +
                          shape_str(p->value.shape()));
      }
      p->value = std::move(t);
      p->zero_grad();
    }
  }
  return enc;
}

}  // namespace ciao
