#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddm2/image.hpp"
#include "ddm2/nn.hpp"

namespace ddm2 {

enum class Conditioning { none, noise_level_scalar };

/// Architecture + conditioning contract shared by the Stage I and Stage III
/// denoising functions.
struct DenoiserSpec {
  int in_channels = 2;
  int out_channels = 1;
  int depth = 3;
  int base_width = 32;
  int embed_dim = 32;
  Conditioning conditioning = Conditioning::none;

  bool operator==(const DenoiserSpec&) const = default;
};

/// An image-to-image denoising function. Evaluation is deterministic:
/// the same inputs always produce the same output.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// `inputs` are stacked channel slices of identical shape. `noise_level`
  /// (alpha_bar, in (0,1]) must be present iff the function is conditioned.
  virtual Image apply(const std::vector<Image>& inputs,
                      std::optional<double> noise_level = std::nullopt) const = 0;

  virtual int in_channels() const = 0;
  virtual bool conditioned() const = 0;
};

/// Trained-network denoiser handle with checkpoint persistence.
class NetDenoiser final : public Denoiser {
 public:
  NetDenoiser(const DenoiserSpec& spec, uint64_t seed);

  Image apply(const std::vector<Image>& inputs,
              std::optional<double> noise_level = std::nullopt) const override;
  int in_channels() const override { return spec_.in_channels; }
  bool conditioned() const override { return spec_.conditioning == Conditioning::noise_level_scalar; }

  const DenoiserSpec& spec() const { return spec_; }
  nn::UNet& net() { return net_; }
  const nn::UNet& net() const { return net_; }
  uint64_t seed() const { return seed_; }
  long train_steps() const { return train_steps_; }
  void set_train_steps(long s) { train_steps_ = s; }

  /// SHA-256 over the float32 parameter blobs, in registration order.
  std::string fingerprint() const;

  /// Checkpoint container: magic "DDM2CKPT", length-prefixed JSON manifest
  /// (spec, steps, seed, hash), named float32 blobs, trailing SHA-256 of
  /// all preceding bytes.
  void save(const std::string& path) const;
  static NetDenoiser load(const std::string& path, const DenoiserSpec* expected = nullptr);

 private:
  DenoiserSpec spec_;
  uint64_t seed_ = 0;
  long train_steps_ = 0;
  nn::UNet net_;
};

nn::UNetConfig unet_config_from_spec(const DenoiserSpec& spec);

/// Stacks slices (replicate-padded to the net's divisibility requirement)
/// into an NCHW batch tensor.
nn::Tensor stack_slices(const std::vector<std::vector<Image>>& batch_channels, int pad_multiple_of);

}  // namespace ddm2
