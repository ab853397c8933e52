// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/serialization.hpp"

#include <algorithm>
#include <cstring>

#include "eegfmri/error.hpp"

namespace eegfmri {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* context) {
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, std::string(context) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(ErrorKind::InvalidArgument, std::string(context) + ": unknown key '" + key + "'");
}

namespace {

template <typename T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const LayerHyper& h) {
  j = {{"in_channels", h.in_channels}, {"out_channels", h.out_channels}, {"kernel", h.kernel},
       {"stride", h.stride},           {"padding", h.padding},           {"drop_probability", h.drop_probability},
       {"target_shape", h.target_shape}, {"activation", to_string(h.activation)}};
}

void from_json(const json& j, LayerHyper& h) {
  h = LayerHyper{};
  opt(j, "in_channels", h.in_channels);
  opt(j, "out_channels", h.out_channels);
  opt(j, "kernel", h.kernel);
  opt(j, "stride", h.stride);
  opt(j, "padding", h.padding);
  opt(j, "drop_probability", h.drop_probability);
  opt(j, "target_shape", h.target_shape);
  if (j.contains("activation")) h.activation = activation_from_string(j.at("activation").get<std::string>());
}

void to_json(json& j, const LayerSpec& s) { j = {{"kind", to_string(s.kind)}, {"hyper", s.hyper}}; }

void from_json(const json& j, LayerSpec& s) {
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.hyper = j.at("hyper").get<LayerHyper>();
}

void to_json(json& j, const NetworkSpec& s) {
  j = {{"role", to_string(s.role)},
       {"input_shape", s.input_shape},
       {"layers", s.layers},
       {"dropout_p", s.dropout_p},
       {"insert_dropout", s.insert_dropout}};
}

void from_json(const json& j, NetworkSpec& s) {
  s.role = network_role_from_string(j.at("role").get<std::string>());
  s.input_shape = j.at("input_shape").get<Shape>();
  s.layers = j.at("layers").get<std::vector<LayerSpec>>();
  s.dropout_p = j.at("dropout_p").get<double>();
  s.insert_dropout = j.at("insert_dropout").get<bool>();
}

void to_json(json& j, const ArchitectureConfig& a) {
  j = {{"latent", a.latent},
       {"eeg_widths", a.eeg_widths},
       {"eeg_freq_kernel", a.eeg_freq_kernel},
       {"fmri_widths", a.fmri_widths},
       {"fmri_kernel", a.fmri_kernel},
       {"decoder_widths", a.decoder_widths},
       {"decoder_kernel", a.decoder_kernel},
       {"temporal_hidden", a.temporal_hidden},
       {"activation", to_string(a.activation)},
       {"dropout_p", a.dropout_p}};
}

void from_json(const json& j, ArchitectureConfig& a) {
  reject_unknown_keys(j,
                      {"latent", "eeg_widths", "eeg_freq_kernel", "fmri_widths", "fmri_kernel", "decoder_widths",
                       "decoder_kernel", "temporal_hidden", "activation", "dropout_p"},
                      "architecture");
  opt(j, "latent", a.latent);
  opt(j, "eeg_widths", a.eeg_widths);
  opt(j, "eeg_freq_kernel", a.eeg_freq_kernel);
  opt(j, "fmri_widths", a.fmri_widths);
  opt(j, "fmri_kernel", a.fmri_kernel);
  opt(j, "decoder_widths", a.decoder_widths);
  opt(j, "decoder_kernel", a.decoder_kernel);
  opt(j, "temporal_hidden", a.temporal_hidden);
  if (j.contains("activation")) a.activation = activation_from_string(j.at("activation").get<std::string>());
  opt(j, "dropout_p", a.dropout_p);
}

void to_json(json& j, const LossConfig& c) {
  j = {{"theta", c.theta}, {"margin", c.margin}, {"adversarial_mode", to_string(c.adversarial_mode)}};
}

void from_json(const json& j, LossConfig& c) {
  reject_unknown_keys(j, {"theta", "margin", "adversarial_mode"}, "loss");
  opt(j, "theta", c.theta);
  opt(j, "margin", c.margin);
  if (j.contains("adversarial_mode"))
    c.adversarial_mode = adversarial_mode_from_string(j.at("adversarial_mode").get<std::string>());
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"procedure", to_string(c.procedure)},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"l1_eeg", c.l1_eeg},
       {"l1_fmri", c.l1_fmri},
       {"l1_dec", c.l1_dec},
       {"batch_size", c.batch_size},
       {"loss", c.loss},
       {"k", c.k},
       {"temporal_encoding", c.temporal_encoding},
       {"seed", c.seed},
       {"optimizer", to_string(c.optimizer)},
       {"clip_norm", c.clip_norm},
       {"wgan_clip", c.wgan_clip},
       {"adversarial_weight", c.adversarial_weight},
       {"topk_pretrain_epochs", c.topk_pretrain_epochs},
       {"init_gain", c.init_gain},
       {"architecture", c.architecture}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"procedure", "epochs", "learning_rate", "l1_eeg", "l1_fmri", "l1_dec", "batch_size", "loss",
                       "k", "temporal_encoding", "seed", "optimizer", "clip_norm", "wgan_clip",
                       "adversarial_weight", "topk_pretrain_epochs", "init_gain", "architecture"},
                      "train");
  if (j.contains("procedure")) c.procedure = procedure_from_string(j.at("procedure").get<std::string>());
  opt(j, "epochs", c.epochs);
  opt(j, "learning_rate", c.learning_rate);
  opt(j, "l1_eeg", c.l1_eeg);
  opt(j, "l1_fmri", c.l1_fmri);
  opt(j, "l1_dec", c.l1_dec);
  opt(j, "batch_size", c.batch_size);
  if (j.contains("loss")) from_json(j.at("loss"), c.loss);
  opt(j, "k", c.k);
  opt(j, "temporal_encoding", c.temporal_encoding);
  opt(j, "seed", c.seed);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  opt(j, "clip_norm", c.clip_norm);
  opt(j, "wgan_clip", c.wgan_clip);
  opt(j, "adversarial_weight", c.adversarial_weight);
  opt(j, "topk_pretrain_epochs", c.topk_pretrain_epochs);
  opt(j, "init_gain", c.init_gain);
  if (j.contains("architecture")) from_json(j.at("architecture"), c.architecture);
}

void to_json(json& j, const PreprocessConfig& c) {
  j = {{"stft_window_s", c.stft_window_s},
       {"step_s", c.step_s},
       {"window_s", c.window_s},
       {"shift_s", c.shift_s},
       {"downsample_factor", c.downsample_factor},
       {"log_offset", c.log_offset},
       {"stft_hop_at_step", c.stft_hop_at_step},
       {"window", c.window == WindowFunction::Hann ? "hann" : "rectangular"}};
}

void from_json(const json& j, PreprocessConfig& c) {
  reject_unknown_keys(j,
                      {"stft_window_s", "step_s", "window_s", "shift_s", "downsample_factor", "log_offset",
                       "stft_hop_at_step", "window"},
                      "preprocess");
  opt(j, "stft_window_s", c.stft_window_s);
  opt(j, "step_s", c.step_s);
  opt(j, "window_s", c.window_s);
  opt(j, "shift_s", c.shift_s);
  opt(j, "downsample_factor", c.downsample_factor);
  opt(j, "log_offset", c.log_offset);
  opt(j, "stft_hop_at_step", c.stft_hop_at_step);
  if (j.contains("window")) {
    const auto w = j.at("window").get<std::string>();
    if (w == "hann")
      c.window = WindowFunction::Hann;
    else if (w == "rectangular")
      c.window = WindowFunction::Rectangular;
    else
      fail(ErrorKind::InvalidArgument, "preprocess: unknown window '" + w + "'");
  }
}

void to_json(json& j, const DataShapes& s) { j = {{"eeg", s.eeg}, {"fmri", s.fmri}}; }

void from_json(const json& j, DataShapes& s) {
  s.eeg = j.at("eeg").get<Shape>();
  s.fmri = j.at("fmri").get<Shape>();
}

json model_header_to_json(const TrainedModel& m) {
  json h;
  h["procedure"] = to_string(m.procedure);
  h["architecture"] = m.architecture;
  h["shapes"] = m.shapes;
  h["trained"] = m.trained;
  json hist = json::array();
  for (const auto& e : m.history) {
    json r = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    r["val_epv"] = e.val_epv ? json(*e.val_epv) : json(nullptr);
    hist.push_back(r);
  }
  h["history"] = hist;
  json comps = json::array();
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    const Network& n = m.nets[c];
    if (n.empty()) {
      comps.push_back(nullptr);
      continue;
    }
    json p = json::array();
    for (const auto& t : n.parameters()) p.push_back(t.shape());
    comps.push_back({{"name", to_string(Component(c))}, {"spec", n.spec()}, {"parameters", p}});
  }
  h["components"] = comps;
  return h;
}

TrainedModel model_from_header(const json& header, const std::function<Tensor(const Shape&)>& next_block) {
  try {
    TrainedModel m;
    m.procedure = procedure_from_string(header.at("procedure").get<std::string>());
    m.architecture = header.at("architecture").get<ArchitectureConfig>();
    m.shapes = header.at("shapes").get<DataShapes>();
    m.trained = header.at("trained").get<bool>();
    for (const auto& r : header.at("history")) {
      EpochRecord e;
      e.epoch = r.at("epoch").get<std::size_t>();
      e.train_loss = r.at("train_loss").get<double>();
      if (!r.at("val_epv").is_null()) e.val_epv = r.at("val_epv").get<double>();
      m.history.push_back(e);
    }
    const auto& comps = header.at("components");
    if (comps.size() != kComponentCount) fail(ErrorKind::FormatError, "checkpoint lists the wrong number of components");
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      if (comps[c].is_null()) continue;
      const auto spec = comps[c].at("spec").get<NetworkSpec>();
      std::vector<Tensor> params;
      for (const auto& s : comps[c].at("parameters")) params.push_back(next_block(s.get<Shape>()));
      m.nets[c] = assemble_network(spec, params);
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
  }
}

}  // namespace eegfmri
