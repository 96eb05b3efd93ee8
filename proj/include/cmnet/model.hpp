// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The full network: three-stage causal encoder, collaboration module at the
// bottleneck, three gated deconvolution blocks plus a final 1x1 conv that
// emits the complex-ratio-mask planes. Includes checkpoint I/O (text
// manifest + raw float32 blob) and parameter accounting.
//
// Layer order note: batch norm and PReLU PRECEDE each conv/deconv; the first
// encoder layer consumes the raw spectrogram planes directly (normalizing
// raw complex planes with PReLU would distort their signs before any learned
// transform).

#pragma once

#include "cmnet/cm.hpp"
#include "cmnet/dsp_ops.hpp"

namespace cmnet {

struct ModelConfig {
  int case_id = 1;  // ablation case 1..5
  std::vector<std::size_t> encoder_channels{16, 32, 64};
  std::vector<std::size_t> decoder_channels{32, 16, 2};
  std::size_t enc_kernel_t = 3, enc_kernel_f = 5;
  std::size_t cm_kernel_t = 3, cm_kernel_f = 7;
  std::size_t fc_dim = 64;
  std::size_t gru_hidden = 1;
  std::size_t freq_bins = 257;
  std::uint64_t seed = 1;

  CmToggles toggles() const {
    switch (case_id) {
      case 1: return {true, true, true};
      case 2: return {true, false, false};
      case 3: return {false, true, false};
      case 4: return {true, true, false};
      case 5: return {false, false, false};
      default: throw config_error("case_id must be in 1..5, got " + std::to_string(case_id));
    }
  }

  void validate() const {
    toggles().validate();
    if (encoder_channels.size() != 3 || decoder_channels.size() != 3)
      throw config_error("encoder/decoder channel lists must have length 3");
    if (decoder_channels.back() != 2) throw config_error("final decoder channel count must be 2 (mask planes)");
    if (freq_bins < enc_kernel_f) throw config_error("freq_bins smaller than the encoder kernel");
    if (gru_hidden != 1) throw config_error("gru_hidden must be 1 (scalar selection path)");
    if (fc_dim == 0) throw config_error("fc_dim must be positive");
  }

  static ModelConfig full_size() { return ModelConfig{}; }

  static ModelConfig toy(std::size_t freq_bins = 257) {
    ModelConfig c;
    c.encoder_channels = {4, 8, 16};
    c.decoder_channels = {8, 4, 2};
    c.fc_dim = 16;
    c.freq_bins = freq_bins;
    return c;
  }
};

inline std::string config_serialize(const ModelConfig& c) {
  std::ostringstream os;
  os << "case_id=" << c.case_id << "\n";
  os << "encoder_channels=" << c.encoder_channels[0] << "," << c.encoder_channels[1] << ","
     << c.encoder_channels[2] << "\n";
  os << "decoder_channels=" << c.decoder_channels[0] << "," << c.decoder_channels[1] << ","
     << c.decoder_channels[2] << "\n";
  os << "enc_kernel=" << c.enc_kernel_t << "," << c.enc_kernel_f << "\n";
  os << "cm_kernel=" << c.cm_kernel_t << "," << c.cm_kernel_f << "\n";
  os << "fc_dim=" << c.fc_dim << "\n";
  os << "gru_hidden=" << c.gru_hidden << "\n";
  os << "freq_bins=" << c.freq_bins << "\n";
  os << "seed=" << c.seed << "\n";
  return os.str();
}

inline std::uint64_t config_fingerprint(const ModelConfig& c) { return fnv1a(config_serialize(c)); }

// Encoder/decoder frequency chain under symmetric padding (kF-1 total):
// stride 1 preserves the extent, stride 2 maps F -> (F-1)/2 + 1.
struct ShapePlan {
  std::size_t f0 = 0, f1 = 0, f2 = 0;

  static ShapePlan make(const ModelConfig& cfg) {
    ShapePlan p;
    p.f0 = cfg.freq_bins;
    p.f1 = (p.f0 - 1) / 2 + 1;
    p.f2 = (p.f1 - 1) / 2 + 1;
    return p;
  }
};

template <class Real>
class CmNet {
 public:
  CmNet(const ModelConfig& cfg, ParameterStore<Real>& ps) : cfg_(cfg), ps_(ps), plan_(ShapePlan::make(cfg)) {
    cfg_.validate();
    register_params();
  }

  const ModelConfig& config() const { return cfg_; }
  const ShapePlan& plan() const { return plan_; }

  CmConfig cm_config() const {
    CmConfig c;
    c.channels = cfg_.encoder_channels[2];
    c.freq = plan_.f2;
    c.kernel_t = cfg_.cm_kernel_t;
    c.kernel_f = cfg_.cm_kernel_f;
    c.fc_dim = cfg_.fc_dim;
    c.gru_hidden = cfg_.gru_hidden;
    return c;
  }

  struct EncoderOut {
    Tensor<Real> bottleneck;
    std::vector<Tensor<Real>> skips;  // stage inputs: [raw 4-plane input, stage-1 out, stage-2 out]
  };

  // input [4,T,freq_bins]; channel progression 4 -> c0 -> c1 -> c2 with
  // frequency f0 -> f0 -> f1 -> f2; time extent preserved (causal padding).
  EncoderOut encoder_forward(const Tensor<Real>& x, BnMode mode) {
    if (x.rank() != 3 || x.dim(0) != 4 || x.dim(2) != cfg_.freq_bins)
      throw shape_error("encoder input must be [4,T," + std::to_string(cfg_.freq_bins) + "], got " +
                        shape_str(x.shape()));
    EncoderOut out;
    Tensor<Real> h = x;
    const std::size_t in_ch[3] = {4, cfg_.encoder_channels[0], cfg_.encoder_channels[1]};
    const std::size_t f_stride[3] = {1, 2, 2};
    for (std::size_t i = 0; i < 3; ++i) {
      out.skips.push_back(h);
      const std::string prefix = "enc.stage" + std::to_string(i + 1);
      Tensor<Real> pre = (i == 0) ? h : bn_prelu(h, prefix, mode);
      Tensor<Real> w = ps_.get_or_create(prefix + ".conv.w",
                                         {cfg_.encoder_channels[i], in_ch[i], cfg_.enc_kernel_t, cfg_.enc_kernel_f},
                                         Init::KaimingUniform, in_ch[i] * cfg_.enc_kernel_t * cfg_.enc_kernel_f);
      Tensor<Real> b = ps_.get_or_create(prefix + ".conv.b", {cfg_.encoder_channels[i]}, Init::Zeros);
      h = conv2d(pre, w, &b, {1, f_stride[i]}, enc_pad());
    }
    out.bottleneck = h;
    return out;
  }

  // Gated block: u = deconv(deep); a sigmoid 1x1 conv on u learns a
  // multiplicative mask for the matching encoder feature; the masked skip is
  // concatenated with u and mixed by another 1x1 conv.
  Tensor<Real> gated_block_forward(const Tensor<Real>& deep, const Tensor<Real>& skip, std::size_t idx,
                                   BnMode mode, std::vector<Tensor<Real>>* gate_trace = nullptr) {
    const std::string prefix = "dec.block" + std::to_string(idx + 1);
    const std::size_t in_ch = idx == 0 ? cfg_.encoder_channels[2] : cfg_.decoder_channels[idx - 1];
    const std::size_t out_ch = cfg_.decoder_channels[idx];
    const std::size_t f_stride = idx < 2 ? 2 : 1;
    const std::size_t target_f = idx == 0 ? plan_.f1 : plan_.f0;
    Tensor<Real> pre = bn_prelu(deep, prefix, mode);
    Tensor<Real> w = ps_.get_or_create(prefix + ".deconv.w", {in_ch, out_ch, cfg_.enc_kernel_t, cfg_.enc_kernel_f},
                                       Init::KaimingUniform, in_ch * cfg_.enc_kernel_t * cfg_.enc_kernel_f);
    Tensor<Real> b = ps_.get_or_create(prefix + ".deconv.b", {out_ch}, Init::Zeros);
    TransposeCrop crop;
    crop.head_t = 0;  // keep early frames, drop the future-side overhang
    crop.head_f = (cfg_.enc_kernel_f - 1) / 2;
    crop.out_t = deep.dim(1);
    crop.out_f = target_f;
    Tensor<Real> u = conv2d_transpose(pre, w, &b, {1, f_stride}, crop);
    if (skip.dim(1) != u.dim(1) || skip.dim(2) != u.dim(2))
      throw shape_error("gated block " + std::to_string(idx + 1) + ": skip " + shape_str(skip.shape()) +
                        " does not match deconv output " + shape_str(u.shape()));
    const std::size_t skip_ch = skip.dim(0);
    Tensor<Real> gate_in = bn_prelu(u, prefix + ".gate", mode);
    Tensor<Real> gw = ps_.get_or_create(prefix + ".gate.conv.w", {skip_ch, out_ch, 1, 1},
                                        Init::KaimingUniform, out_ch);
    Tensor<Real> gb = ps_.get_or_create(prefix + ".gate.conv.b", {skip_ch}, Init::Zeros);
    Tensor<Real> gate = sigmoid(conv2d(gate_in, gw, &gb, {1, 1}, ConvPadding{}));
    if (gate_trace) gate_trace->push_back(gate);
    Tensor<Real> masked = mul(gate, skip);
    Tensor<Real> cat = concat<Real>({masked, u}, 0);
    Tensor<Real> mix_in = bn_prelu(cat, prefix + ".mix", mode);
    Tensor<Real> mw = ps_.get_or_create(prefix + ".mix.conv.w", {out_ch, skip_ch + out_ch, 1, 1},
                                        Init::KaimingUniform, skip_ch + out_ch);
    Tensor<Real> mb = ps_.get_or_create(prefix + ".mix.conv.b", {out_ch}, Init::Zeros);
    return conv2d(mix_in, mw, &mb, {1, 1}, ConvPadding{});
  }

  // bottleneck (after the CM) plus the encoder skips; emits the unbounded
  // CRM planes [2,T,freq_bins].
  Tensor<Real> decoder_forward(const Tensor<Real>& bottleneck, const std::vector<Tensor<Real>>& skips,
                               BnMode mode, std::vector<std::string>* shape_trace = nullptr,
                               std::vector<Tensor<Real>>* gate_trace = nullptr) {
    if (skips.size() != 3) throw shape_error("decoder expects 3 skip tensors");
    Tensor<Real> h = bottleneck;
    for (std::size_t i = 0; i < 3; ++i) {
      h = gated_block_forward(h, skips[2 - i], i, mode, gate_trace);
      if (shape_trace) shape_trace->push_back("dec.block" + std::to_string(i + 1) + " " + shape_str(h.shape()));
    }
    Tensor<Real> pre = bn_prelu(h, "dec.final", mode);
    Tensor<Real> w = ps_.get_or_create("dec.final.conv.w", {2, cfg_.decoder_channels[2], 1, 1},
                                       Init::KaimingUniform, cfg_.decoder_channels[2]);
    Tensor<Real> b = ps_.get_or_create("dec.final.conv.b", {2}, Init::Zeros);
    Tensor<Real> mask = conv2d(pre, w, &b, {1, 1}, ConvPadding{});
    if (shape_trace) shape_trace->push_back("dec.final " + shape_str(mask.shape()));
    return mask;
  }

  Tensor<Real> forward(const Tensor<Real>& input, BnMode mode, CmTrace<Real>* trace = nullptr,
                       std::vector<std::string>* shape_trace = nullptr,
                       std::vector<Tensor<Real>>* gate_trace = nullptr) {
    EncoderOut enc = encoder_forward(input, mode);
    if (shape_trace) {
      shape_trace->push_back("input " + shape_str(input.shape()));
      for (std::size_t i = 0; i < 3; ++i)
        shape_trace->push_back("enc.stage" + std::to_string(i + 1) + " " +
                               shape_str(i < 2 ? enc.skips[i + 1].shape() : enc.bottleneck.shape()));
    }
    Tensor<Real> mid = cm_forward(enc.bottleneck, ps_, cm_config(), cfg_.toggles(), trace);
    if (shape_trace) shape_trace->push_back("cm " + shape_str(mid.shape()));
    return decoder_forward(mid, enc.skips, mode, shape_trace, gate_trace);
  }

 private:
  ConvPadding enc_pad() const {
    return {cfg_.enc_kernel_t - 1, (cfg_.enc_kernel_f - 1) / 2,
            cfg_.enc_kernel_f - 1 - (cfg_.enc_kernel_f - 1) / 2};
  }

  Tensor<Real> bn_prelu(const Tensor<Real>& x, const std::string& prefix, BnMode mode) {
    const std::size_t C = x.dim(0);
    Tensor<Real> gamma = ps_.get_or_create(prefix + ".bn.gamma", {C}, Init::Ones);
    Tensor<Real> beta = ps_.get_or_create(prefix + ".bn.beta", {C}, Init::Zeros);
    Tensor<Real> rm = ps_.get_or_create(prefix + ".bn.running_mean", {C}, Init::Zeros, 1, false);
    Tensor<Real> rv = ps_.get_or_create(prefix + ".bn.running_var", {C}, Init::Ones, 1, false);
    Tensor<Real> alpha = ps_.get_or_create(prefix + ".prelu.alpha", {C}, Init::Const, 1, true, 0.25);
    return prelu_channel(batch_norm(x, gamma, beta, rm, rv, mode), alpha);
  }

  // One throwaway inference pass materializes every parameter so counting
  // and checkpointing work before any real input is seen.
  void register_params() {
    Tensor<Real> dummy({4, 1, cfg_.freq_bins});
    forward(dummy, BnMode::Infer);
  }

  ModelConfig cfg_;
  ParameterStore<Real>& ps_;
  ShapePlan plan_;
};

// End-to-end contract: four spectrogram planes in, CRM planes out.
template <class Real>
Tensor<Real> cmnet_forward(const ComplexSpectrogram& X, const ComplexSpectrogram& Y,
                           ParameterStore<Real>& ps, const ModelConfig& cfg,
                           BnMode mode = BnMode::Infer, CmTrace<Real>* trace = nullptr,
                           std::vector<std::string>* shape_trace = nullptr) {
  if (X.frames != Y.frames || X.bins != Y.bins)
    throw contract_error("cmnet_forward: X and Y spectrogram shapes differ");
  CmNet<Real> net(cfg, ps);
  return net.forward(make_input_planes<Real>(X, Y), mode, trace, shape_trace);
}

// ---------------------------------------------------------------------------
// parameter accounting
// ---------------------------------------------------------------------------

struct ParamReport {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_block;

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : per_block) os << "  " << k << " " << v << "\n";
    os << "  total " << total << "\n";
    return os.str();
  }
};

template <class Real>
ParamReport param_report(const ParameterStore<Real>& ps) {
  ParamReport r;
  r.total = ps.trainable_count();
  r.per_block = ps.breakdown(2);
  return r;
}

// ---------------------------------------------------------------------------
// checkpoints: <base>.manifest (human-readable) + <base>.blob (raw LE f32)
// ---------------------------------------------------------------------------

template <class Real>
void save_checkpoint(const std::string& base, const ModelConfig& cfg, const ParameterStore<Real>& ps) {
  std::ofstream mf(base + ".manifest");
  if (!mf) throw io_error("cannot write checkpoint manifest '" + base + ".manifest'");
  std::ofstream bf(base + ".blob", std::ios::binary);
  if (!bf) throw io_error("cannot write checkpoint blob '" + base + ".blob'");
  mf << "cmnet-checkpoint v1\n";
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(config_fingerprint(cfg)));
  mf << "fingerprint " << fp << "\n";
  std::istringstream cfgs(config_serialize(cfg));
  for (std::string line; std::getline(cfgs, line);) mf << "config " << line << "\n";
  std::size_t offset = 0;
  for (const auto& [name, e] : ps.entries()) {
    mf << "tensor name=" << name << " shape=";
    const Shape& s = e.tensor.shape();
    for (std::size_t i = 0; i < s.size(); ++i) mf << (i ? "x" : "") << s[i];
    mf << " dtype=f32 offset=" << offset << " trainable=" << (e.trainable ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < e.tensor.size(); ++i) {
      const float v = static_cast<float>(e.tensor.data()[i]);
      bf.write(reinterpret_cast<const char*>(&v), 4);
    }
    offset += 4 * e.tensor.size();
  }
  mf << "end\n";
  if (!mf || !bf) throw io_error("failed writing checkpoint '" + base + "'");
}

inline ModelConfig parse_config_lines(const std::vector<std::string>& lines) {
  ModelConfig cfg;
  auto split_list = [](const std::string& v) {
    std::vector<std::size_t> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    return out;
  };
  for (const std::string& line : lines) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "case_id") cfg.case_id = std::stoi(val);
    else if (key == "encoder_channels") cfg.encoder_channels = split_list(val);
    else if (key == "decoder_channels") cfg.decoder_channels = split_list(val);
    else if (key == "enc_kernel") { auto v = split_list(val); cfg.enc_kernel_t = v.at(0); cfg.enc_kernel_f = v.at(1); }
    else if (key == "cm_kernel") { auto v = split_list(val); cfg.cm_kernel_t = v.at(0); cfg.cm_kernel_f = v.at(1); }
    else if (key == "fc_dim") cfg.fc_dim = std::stoull(val);
    else if (key == "gru_hidden") cfg.gru_hidden = std::stoull(val);
    else if (key == "freq_bins") cfg.freq_bins = std::stoull(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else throw config_error("unknown checkpoint config key '" + key + "'");
  }
  return cfg;
}

inline std::pair<ModelConfig, ParameterStore<float>> load_checkpoint(const std::string& base) {
  std::ifstream mf(base + ".manifest");
  if (!mf) throw io_error("cannot read checkpoint manifest '" + base + ".manifest'");
  std::string header;
  std::getline(mf, header);
  if (header != "cmnet-checkpoint v1") throw config_error("bad checkpoint header in '" + base + ".manifest'");
  std::vector<std::string> cfg_lines;
  struct TensorRec {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<TensorRec> recs;
  std::string fingerprint;
  for (std::string line; std::getline(mf, line);) {
    if (line == "end") break;
    if (line.rfind("fingerprint ", 0) == 0) {
      fingerprint = line.substr(12);
    } else if (line.rfind("config ", 0) == 0) {
      cfg_lines.push_back(line.substr(7));
    } else if (line.rfind("tensor ", 0) == 0) {
      TensorRec r;
      std::istringstream is(line.substr(7));
      std::string field;
      while (is >> field) {
        const std::size_t eq = field.find('=');
        const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
        if (k == "name") r.name = v;
        else if (k == "offset") r.offset = std::stoull(v);
        else if (k == "shape") {
          std::istringstream ss(v);
          std::string tok;
          while (std::getline(ss, tok, 'x')) r.shape.push_back(std::stoull(tok));
        }
      }
      recs.push_back(std::move(r));
    }
  }
  ModelConfig cfg = parse_config_lines(cfg_lines);
  cfg.validate();
  {
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(config_fingerprint(cfg)));
    if (!fingerprint.empty() && fingerprint != fp)
      throw config_error("checkpoint fingerprint does not match its own config block");
  }
  ParameterStore<float> ps(cfg.seed);
  CmNet<float> net(cfg, ps);  // registers the parameter set this config implies
  std::ifstream bf(base + ".blob", std::ios::binary);
  if (!bf) throw io_error("cannot read checkpoint blob '" + base + ".blob'");
  std::size_t loaded = 0;
  for (const TensorRec& r : recs) {
    if (!ps.contains(r.name))
      throw config_error("checkpoint tensor '" + r.name + "' unknown to this model config");
    Tensor<float> t = ps.at(r.name);
    if (t.shape() != r.shape)
      throw config_error("checkpoint tensor '" + r.name + "' shape " + shape_str(r.shape) +
                         " does not match model " + shape_str(t.shape()));
    bf.seekg(static_cast<std::streamoff>(r.offset));
    bf.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(4 * t.size()));
    if (!bf) throw io_error("checkpoint blob truncated at tensor '" + r.name + "'");
    ++loaded;
  }
  if (loaded != ps.entries().size())
    throw config_error("checkpoint covers " + std::to_string(loaded) + " tensors, model has " +
                       std::to_string(ps.entries().size()));
  return {cfg, std::move(ps)};
}

}  // namespace cmnet
