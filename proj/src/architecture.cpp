// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/architecture.hpp"

#include <algorithm>
#include <string>

#include "eegfmri/error.hpp"

namespace eegfmri {
namespace {

LayerSpec conv(LayerKind kind, std::size_t in, std::size_t out, std::vector<std::size_t> kernel, Activation act) {
  LayerSpec s{kind, {}};
  s.hyper.in_channels = in;
  s.hyper.out_channels = out;
  s.hyper.kernel = std::move(kernel);
  s.hyper.activation = act;
  return s;
}

LayerSpec dense(std::size_t in, std::size_t out, Activation act) {
  LayerSpec s{LayerKind::Dense, {}};
  s.hyper.in_channels = in;
  s.hyper.out_channels = out;
  s.hyper.activation = act;
  return s;
}

LayerSpec reshape_to(Shape target) {
  LayerSpec s{LayerKind::Reshape, {}};
  s.hyper.target_shape = std::move(target);
  return s;
}

/// Channel sequence in -> widths... -> 1.
std::vector<std::size_t> channel_chain(std::size_t in, const std::vector<std::size_t>& widths) {
  std::vector<std::size_t> c{in};
  c.insert(c.end(), widths.begin(), widths.end());
  c.push_back(1);
  return c;
}

/// Kernel shrinking each axis by up to k-1 while staying >= 1.
std::vector<std::size_t> valid_kernel(std::vector<std::size_t>& dims, std::size_t k) {
  std::vector<std::size_t> ker;
  for (auto& d : dims) {
    const std::size_t kk = std::max<std::size_t>(1, std::min(k, d));
    ker.push_back(kk);
    d -= kk - 1;
  }
  return ker;
}

/// Stack of convolutions over [1, steps, x, y, z] down to one channel,
/// flattened to [steps, voxels'].
void fmri_conv_stack(NetworkSpec& spec, const DataShapes& shapes, const std::vector<std::size_t>& widths,
                     std::size_t k, Activation act) {
  const std::size_t T = shapes.fmri[0];
  std::vector<std::size_t> dims(shapes.fmri.begin() + 1, shapes.fmri.end());
  spec.layers.push_back(reshape_to({1, T, dims[0], dims[1], dims[2]}));
  const auto ch = channel_chain(1, widths);
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    auto ker = valid_kernel(dims, k);
    ker.insert(ker.begin(), 1);
    spec.layers.push_back(conv(LayerKind::Conv, ch[i], ch[i + 1], ker, act));
  }
  spec.layers.push_back(reshape_to({T, dims[0] * dims[1] * dims[2]}));
}

void check_shapes(const DataShapes& s) {
  if (s.eeg.size() != 3 || s.fmri.size() != 4 || s.eeg[2] != s.fmri[0])
    fail(ErrorKind::ShapeCompositionError, "data shapes " + to_string(s.eeg) + " / " + to_string(s.fmri) +
                                               " are not [C, F, T] / [T, X, Y, Z] windows of equal length");
}

}  // namespace

void ArchitectureConfig::validate() const {
  if (latent == 0 || temporal_hidden == 0) fail(ErrorKind::InvalidArgument, "latent sizes must be positive");
  if (eeg_widths.size() != fmri_widths.size() || eeg_widths.size() != decoder_widths.size())
    fail(ErrorKind::InvalidArgument, "all components must share one depth");
  for (const auto* g : {&eeg_widths, &fmri_widths, &decoder_widths}) {
    for (std::size_t i = 0; i < g->size(); ++i) {
      if ((*g)[i] == 0) fail(ErrorKind::InvalidArgument, "layer width must be positive");
      if (i > 0 && (*g)[i] > (*g)[i - 1]) fail(ErrorKind::InvalidArgument, "layer widths must not increase");
    }
  }
  if (eeg_freq_kernel == 0 || fmri_kernel == 0 || decoder_kernel == 0)
    fail(ErrorKind::InvalidArgument, "kernel sizes must be positive");
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) fail(ErrorKind::InvalidProbability, "dropout probability");
}

NetworkSpec eeg_encoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch) {
  check_shapes(shapes);
  arch.validate();
  const std::size_t C = shapes.eeg[0], F = shapes.eeg[1], T = shapes.eeg[2];
  NetworkSpec spec{NetworkRole::EEGEncoder, {C, T, F}, {}, arch.dropout_p, true};
  std::vector<std::size_t> freq{F};
  const auto ch = channel_chain(C, arch.eeg_widths);
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    const auto ker = valid_kernel(freq, arch.eeg_freq_kernel);
    spec.layers.push_back(conv(LayerKind::Conv, ch[i], ch[i + 1], {1, ker[0]}, arch.activation));
  }
  spec.layers.push_back(reshape_to({T, freq[0]}));
  spec.layers.push_back(dense(freq[0], arch.latent, Activation::None));
  return spec;
}

NetworkSpec fmri_encoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch) {
  check_shapes(shapes);
  arch.validate();
  NetworkSpec spec{NetworkRole::FMRIEncoder, shapes.fmri, {}, arch.dropout_p, true};
  fmri_conv_stack(spec, shapes, arch.fmri_widths, arch.fmri_kernel, arch.activation);
  spec.layers.push_back(dense(spec.layers.back().hyper.target_shape[1], arch.latent, Activation::None));
  return spec;
}

NetworkSpec decoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch) {
  check_shapes(shapes);
  arch.validate();
  const std::size_t T = shapes.fmri[0];
  // Walk the transposed stack backwards from the target grid to find the
  // seed grid and per-layer kernels.
  std::vector<std::size_t> dims(shapes.fmri.begin() + 1, shapes.fmri.end());
  const auto ch = channel_chain(1, arch.decoder_widths);
  const std::size_t n = ch.size() - 1;
  std::vector<std::vector<std::size_t>> kernels(n);
  for (std::size_t i = n; i-- > 0;) kernels[i] = valid_kernel(dims, arch.decoder_kernel);

  NetworkSpec spec{NetworkRole::Decoder, {T, arch.latent}, {}, arch.dropout_p, true};
  const std::size_t seed_voxels = dims[0] * dims[1] * dims[2];
  spec.layers.push_back(dense(arch.latent, seed_voxels, arch.activation));
  spec.layers.push_back(reshape_to({1, T, dims[0], dims[1], dims[2]}));
  for (std::size_t i = 0; i < n; ++i) {
    auto ker = kernels[i];
    ker.insert(ker.begin(), 1);
    const bool last = i + 1 == n;
    spec.layers.push_back(conv(LayerKind::ConvTranspose, ch[i], ch[i + 1], ker,
                               last ? Activation::None : arch.activation));
  }
  spec.layers.push_back(reshape_to(shapes.fmri));
  return spec;
}

NetworkSpec discriminator_spec(const DataShapes& shapes, const ArchitectureConfig& arch, AdversarialMode mode) {
  check_shapes(shapes);
  arch.validate();
  NetworkSpec spec{NetworkRole::Discriminator, shapes.fmri, {}, arch.dropout_p, true};
  fmri_conv_stack(spec, shapes, arch.fmri_widths, arch.fmri_kernel, arch.activation);
  const std::size_t T = shapes.fmri[0];
  const std::size_t feat = spec.layers.back().hyper.target_shape[1];
  spec.layers.push_back(dense(feat, arch.latent, arch.activation));
  spec.layers.push_back(reshape_to({1, T * arch.latent}));
  spec.layers.push_back(dense(T * arch.latent, 1,
                              mode == AdversarialMode::Entropy ? Activation::Sigmoid : Activation::None));
  return spec;
}

NetworkSpec temporal_head_spec(const DataShapes& shapes, const ArchitectureConfig& arch) {
  check_shapes(shapes);
  arch.validate();
  NetworkSpec spec{NetworkRole::TemporalHead, {shapes.fmri[0], arch.latent}, {}, arch.dropout_p, true};
  spec.layers.push_back(dense(arch.latent, 1, Activation::None));
  LayerSpec gru{LayerKind::GRU, {}};
  gru.hyper.in_channels = 1;
  gru.hyper.out_channels = arch.temporal_hidden;
  spec.layers.push_back(gru);
  return spec;
}

ArchitectureConfig architecture_of_depth(std::size_t depth, std::size_t width) {
  if (depth == 0) fail(ErrorKind::InvalidArgument, "depth must be >= 1");
  ArchitectureConfig a;
  const std::vector<std::size_t> w(depth - 1, width);
  a.eeg_widths = a.fmri_widths = a.decoder_widths = w;
  return a;
}

}  // namespace eegfmri
