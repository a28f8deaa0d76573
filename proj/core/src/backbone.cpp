// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/backbone.hpp"

#include <cmath>
#include <random>

#include "backbone_internal.hpp"
#include "zerosmooth/checkpoint.hpp"
#include "zerosmooth/correction.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {

using detail::CMap;
using detail::RowMat;
using detail::RowVec;

std::string_view to_string(PositionalMode mode) {
  switch (mode) {
    case PositionalMode::kRelative: return "rpe";
    case PositionalMode::kAbsolute: return "ape";
    case PositionalMode::kNone: return "none";
  }
  return "?";
}

PositionalMode parse_positional_mode(std::string_view name) {
  if (name == "rpe") return PositionalMode::kRelative;
  if (name == "ape") return PositionalMode::kAbsolute;
  if (name == "none") return PositionalMode::kNone;
  throw ConfigError("positional mode must be rpe|ape|none, got '" + std::string(name) + "'");
}

void BackboneConfig::validate() const {
  if (frames < 2) throw ConfigError("backbone needs t0 >= 2");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("empty video geometry");
  if (dim == 0 || dim % 2 != 0) throw ConfigError("token dim must be even and positive");
  if (heads == 0 || dim % heads != 0) throw ConfigError("token dim must be divisible by heads");
  if (blocks == 0) throw ConfigError("backbone needs at least one block");
  if (classes == 0) throw ConfigError("backbone needs at least one class");
}

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kSpatialResNet: return "spatial-resnet";
    case ModuleKind::kTemporalResNet: return "temporal-resnet";
    case ModuleKind::kSpatialSelfAttention: return "spatial-self-attention";
    case ModuleKind::kTemporalSelfAttention: return "temporal-self-attention";
    case ModuleKind::kSpatialCrossAttention: return "spatial-cross-attention";
    case ModuleKind::kTemporalCrossAttention: return "temporal-cross-attention";
  }
  return "?";
}

bool is_hooked(ModuleKind kind) {
  return kind != ModuleKind::kSpatialResNet && kind != ModuleKind::kTemporalResNet;
}

void AttentionHooks::observe_input(const HookSite&, const HiddenState&) {}
bool AttentionHooks::corrects(const HookSite&) const { return false; }
void AttentionHooks::correct_input(const HookSite&, HiddenState&) {}
void AttentionHooks::correct_query(const HookSite&, std::span<const double>, HiddenState&) {}
void AttentionHooks::correct_key_value(const HookSite&, std::span<const double>,
                                       std::span<const double>, HiddenState&, HiddenState&) {}
double AttentionHooks::blend_weight(const HookSite&) const { return 1.0; }

void ParameterSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

Tensor& ParameterSet::operator[](std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("missing parameter " + std::string(name));
  return values_[it->second];
}

const Tensor& ParameterSet::operator[](std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("missing parameter " + std::string(name));
  return values_[it->second];
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], Tensor(values_[i].shape()));
  return out;
}

namespace detail {

std::string block_name(std::size_t block, const char* leaf) {
  return "blk" + std::to_string(block) + "." + leaf;
}

void layer_norm(const CMap& x, std::span<const double> gain, std::span<const double> bias,
                RowMat& y, LayerNormCache* cache) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index d = x.cols();
  y.resize(rows, d);
  if (cache) {
    cache->xhat.resize(rows, d);
    cache->rstd.resize(rows);
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double xhat = (x(r, c) - mean) * rstd;
      y(r, c) = xhat * gain[c] + bias[c];
      if (cache) cache->xhat(r, c) = xhat;
    }
    if (cache) cache->rstd[r] = rstd;
  }
}

void layer_norm_backward(const LayerNormCache& cache, std::span<const double> gain,
                         const RowMat& dy, RowMat& dx, std::span<double> dgain,
                         std::span<double> dbias) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index d = dy.cols();
  Eigen::VectorXd dxhat(d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      dgain[c] += dy(r, c) * cache.xhat(r, c);
      dbias[c] += dy(r, c);
      dxhat[c] = dy(r, c) * gain[c];
    }
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = (dxhat.transpose().array() * cache.xhat.row(r).array()).mean();
    for (Eigen::Index c = 0; c < d; ++c) {
      dx(r, c) += cache.rstd[r] * (dxhat[c] - mean_dxhat - cache.xhat(r, c) * mean_dxhat_xhat);
    }
  }
}

RowMat im2col3x3(const RowMat& a, std::size_t frames, std::size_t height, std::size_t width) {
  const Eigen::Index d = a.cols();
  RowMat col = RowMat::Zero(a.rows(), 9 * d);
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  for (std::size_t f = 0; f < frames; ++f) {
    const long base = static_cast<long>(f * height * width);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long row = base + y * w + x;
        for (int k = 0; k < 9; ++k) {
          const long yy = y + k / 3 - 1;
          const long xx = x + k % 3 - 1;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          col.block(row, k * d, 1, d) = a.row(base + yy * w + xx);
        }
      }
    }
  }
  return col;
}

void col2im3x3_add(const RowMat& dcol, std::size_t frames, std::size_t height, std::size_t width,
                   RowMat& da) {
  const Eigen::Index d = da.cols();
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  for (std::size_t f = 0; f < frames; ++f) {
    const long base = static_cast<long>(f * height * width);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long row = base + y * w + x;
        for (int k = 0; k < 9; ++k) {
          const long yy = y + k / 3 - 1;
          const long xx = x + k % 3 - 1;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          da.row(base + yy * w + xx) += dcol.block(row, k * d, 1, d);
        }
      }
    }
  }
}

namespace {

CMap mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return cmap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
              static_cast<Eigen::Index>(cols));
}

Eigen::Map<const RowVec> vec(const Tensor& t) {
  return Eigen::Map<const RowVec>(t.data(), static_cast<Eigen::Index>(t.size()));
}

CMap as_rows(const Tensor& h) {
  const std::size_t d = h.dim(h.rank() - 1);
  return mat(h, h.size() / d, d);
}

Tensor to_hidden(const RowMat& m, std::size_t frames, std::size_t tokens) {
  Tensor out({frames, tokens, static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMat>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

struct Ctx {
  const BackboneConfig& cfg;
  const ParameterSet& p;
  std::size_t frames;
  std::size_t tokens;
  std::size_t dim;
  std::size_t rows;
};

// Spatial self-attention output X + softmax(QKᵀ/sqrt(dh))V Wo + bo, per frame.
Tensor spatial_output(const Ctx& c, std::size_t b, const Tensor& x, const Tensor& q,
                      const Tensor& k, const Tensor& v, SpatialTape* tape) {
  const auto d = static_cast<Eigen::Index>(c.dim);
  const auto l = static_cast<Eigen::Index>(c.tokens);
  RowMat att(c.rows, d);
  if (tape) tape->probs.resize(c.frames);
  for (std::size_t f = 0; f < c.frames; ++f) {
    const std::size_t off = f * c.tokens * c.dim;
    attention_forward(cmap(q.data() + off, l, d, d), cmap(k.data() + off, l, d, d),
                      cmap(v.data() + off, l, d, d), static_cast<int>(c.cfg.heads),
                      mmap(att.data() + off, l, d, d), tape ? &tape->probs[f] : nullptr);
  }
  Tensor out = x;
  auto o = Eigen::Map<RowMat>(out.data(), att.rows(), d);
  o.noalias() += att * mat(c.p[block_name(b, "sa.wo")], c.dim, c.dim);
  o.rowwise() += vec(c.p[block_name(b, "sa.bo")]);
  if (tape) tape->att = std::move(att);
  return out;
}

RowMat ape_rows(const BackboneConfig& cfg, std::size_t frames) {
  RowMat table(frames, cfg.dim);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto e = interpolated_ape(f + 1, cfg.frames, frames, cfg.dim);
    for (std::size_t i = 0; i < cfg.dim; ++i) table(f, i) = e[i];
  }
  return table;
}

// Temporal self-attention output X + Attn(LN(X)) Wo + bo.
Tensor temporal_output(const Ctx& c, std::size_t b, const Tensor& x, const ForwardOptions& opt,
                       TemporalTape* tape, const RowMat* ape_table, const Tensor* skip = nullptr) {
  const auto d = static_cast<Eigen::Index>(c.dim);
  const auto& p = c.p;
  RowMat n;
  layer_norm(as_rows(x), p[block_name(b, "ta.ln.g")].values(), p[block_name(b, "ta.ln.b")].values(),
             n, tape ? &tape->ln : nullptr);
  if (c.cfg.positional == PositionalMode::kAbsolute) {
    const RowMat u = *ape_table * mat(p[block_name(b, "ta.ape")], c.dim, c.dim);
    for (std::size_t f = 0; f < c.frames; ++f) {
      n.middleRows(static_cast<Eigen::Index>(f * c.tokens), static_cast<Eigen::Index>(c.tokens))
          .rowwise() += u.row(static_cast<Eigen::Index>(f));
    }
  }
  const bool relative = c.cfg.positional == PositionalMode::kRelative;
  std::span<const double> pk, pv;
  if (relative) {
    pk = p[block_name(b, "ta.pk")].values();
    pv = p[block_name(b, "ta.pv")].values();
  }
  const Tensor& wq = p[block_name(b, "ta.wq")];
  const Tensor& wk = p[block_name(b, "ta.wk")];
  const Tensor& wv = p[block_name(b, "ta.wv")];

  RowMat att;
  if (!tape) {
    const Tensor nt = to_hidden(n, c.frames, c.tokens);
    const WindowPlan plan = plan_windows(c.frames, c.cfg.frames, opt.windowing, opt.overlap);
    const HiddenState a = windowed_attention_rpe(
        nt, AttentionWeightsView{wq.values(), wk.values(), wv.values(), c.cfg.heads}, pk, pv, plan);
    att = as_rows(a);
  } else {
    const auto t = static_cast<Eigen::Index>(c.frames);
    const auto stride = static_cast<Eigen::Index>(c.tokens * c.dim);
    tape->q.noalias() = n * mat(wq, c.dim, c.dim);
    tape->kh.noalias() = n * mat(wk, c.dim, c.dim);
    tape->vh.noalias() = n * mat(wv, c.dim, c.dim);
    tape->pk_proj = RowMat::Zero(t, d);
    tape->pv_proj = RowMat::Zero(t, d);
    if (relative) {
      tape->pk_proj.noalias() = mat(p[block_name(b, "ta.pk")], c.frames, c.dim) * mat(wk, c.dim, c.dim);
      tape->pv_proj.noalias() = mat(p[block_name(b, "ta.pv")], c.frames, c.dim) * mat(wv, c.dim, c.dim);
    }
    att.resize(static_cast<Eigen::Index>(c.rows), d);
    tape->probs.resize(c.tokens);
    RowMat kk(t, d), vv(t, d);
    for (std::size_t tok = 0; tok < c.tokens; ++tok) {
      const std::size_t off = tok * c.dim;
      kk = cmap(tape->kh.data() + off, t, d, stride) + tape->pk_proj;
      vv = cmap(tape->vh.data() + off, t, d, stride) + tape->pv_proj;
      attention_forward(cmap(tape->q.data() + off, t, d, stride), cmap(kk.data(), t, d, d),
                        cmap(vv.data(), t, d, d), static_cast<int>(c.cfg.heads),
                        mmap(att.data() + off, t, d, stride), &tape->probs[tok]);
    }
  }
  Tensor out = skip ? *skip : x;
  auto o = Eigen::Map<RowMat>(out.data(), static_cast<Eigen::Index>(c.rows), d);
  o.noalias() += att * mat(p[block_name(b, "ta.wo")], c.dim, c.dim);
  o.rowwise() += vec(p[block_name(b, "ta.bo")]);
  if (tape) {
    tape->n = std::move(n);
    tape->att = std::move(att);
  }
  return out;
}

}  // namespace

Tensor backbone_forward(const ToyBackbone& model, const Tensor& z_t, int timestep, int label,
                        double fps, const ForwardOptions& options, Tape* tape) {
  const BackboneConfig& cfg = model.config();
  const ParameterSet& p = model.parameters();
  if (z_t.rank() != 4 || z_t.dim(1) != cfg.channels || z_t.dim(2) != cfg.height ||
      z_t.dim(3) != cfg.width) {
    throw DimensionError("denoise: latent must be T x " + std::to_string(cfg.channels) + " x " +
                         std::to_string(cfg.height) + " x " + std::to_string(cfg.width));
  }
  const std::size_t frames = z_t.dim(0);
  if (frames < cfg.frames) {
    throw DimensionError("denoise: " + std::to_string(frames) + " frames is fewer than t0=" +
                         std::to_string(cfg.frames));
  }
  if (tape && frames != cfg.frames) throw DimensionError("training pass requires exactly t0 frames");
  if (label < 0 || label > cfg.null_label()) {
    throw RangeError("class label " + std::to_string(label) + " out of range");
  }
  const Ctx c{cfg, p, frames, cfg.tokens(), cfg.dim, frames * cfg.tokens()};
  const auto d = static_cast<Eigen::Index>(c.dim);
  const std::size_t l = c.tokens;

  // Time / fps / class embedding.
  Eigen::VectorXd tin(d + 1);
  {
    const auto s = sinusoidal_embedding(static_cast<double>(timestep), c.dim);
    for (Eigen::Index i = 0; i < d; ++i) tin[i] = s[i];
    tin[d] = fps / 8.0;
  }
  const RowVec pre = tin.transpose() * mat(p["temb.w1"], c.dim + 1, c.dim) + vec(p["temb.b1"]);
  const RowVec hidden = pre.unaryExpr([](double v) { return silu(v); });
  RowVec temb = hidden * mat(p["temb.w2"], c.dim, c.dim) + vec(p["temb.b2"]);
  temb += mat(p["class"], cfg.classes + 1, c.dim).row(label);
  const RowVec temb_act = temb.unaryExpr([](double v) { return silu(v); });
  if (tape) {
    tape->frames = frames;
    tape->z = z_t;
    tape->label = label;
    tape->temb_in = tin;
    tape->temb_pre = pre.transpose();
    tape->temb = temb.transpose();
    tape->resnet.resize(cfg.blocks);
    tape->spatial.resize(cfg.blocks);
    tape->temporal.resize(cfg.blocks);
  }

  // Input projection and spatial position embedding.
  Tensor x({frames, l, c.dim});
  {
    const Tensor& w_in = p["in.w"];
    const Tensor& b_in = p["in.b"];
    const Tensor& pos = p["pos"];
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t q = 0; q < l; ++q) {
        double* row = x.data() + (f * l + q) * c.dim;
        for (std::size_t i = 0; i < c.dim; ++i) row[i] = b_in[i] + pos[q * c.dim + i];
        for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
          const double zv = z_t[(f * cfg.channels + ch) * l + q];
          for (std::size_t i = 0; i < c.dim; ++i) row[i] += zv * w_in[ch * c.dim + i];
        }
      }
    }
  }

  RowMat ape_table;
  if (cfg.positional == PositionalMode::kAbsolute) {
    ape_table = ape_rows(cfg, frames);
    if (tape) tape->ape_table = ape_table;
  }

  AttentionHooks* hooks = tape ? nullptr : options.hooks;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const int base_id = static_cast<int>(3 * b);

    // Spatial ResNet block.
    {
      ResNetTape* rt = tape ? &tape->resnet[b] : nullptr;
      RowMat n;
      layer_norm(as_rows(x), p[block_name(b, "res.ln.g")].values(),
                 p[block_name(b, "res.ln.b")].values(), n, rt ? &rt->ln : nullptr);
      const RowMat a = n.unaryExpr([](double v) { return silu(v); });
      RowMat col1 = im2col3x3(a, frames, cfg.height, cfg.width);
      const RowVec tproj =
          temb_act * mat(p[block_name(b, "res.temb.w")], c.dim, c.dim) + vec(p[block_name(b, "res.temb.b")]);
      RowMat c1 = col1 * mat(p[block_name(b, "res.conv1.w")], 9 * c.dim, c.dim);
      c1.rowwise() += vec(p[block_name(b, "res.conv1.b")]) + tproj;
      const RowMat a2 = c1.unaryExpr([](double v) { return silu(v); });
      RowMat col2 = im2col3x3(a2, frames, cfg.height, cfg.width);
      auto xm = Eigen::Map<RowMat>(x.data(), static_cast<Eigen::Index>(c.rows), d);
      xm.noalias() += col2 * mat(p[block_name(b, "res.conv2.w")], 9 * c.dim, c.dim);
      xm.rowwise() += vec(p[block_name(b, "res.conv2.b")]);
      if (rt) {
        rt->n = std::move(n);
        rt->col1 = std::move(col1);
        rt->c1 = std::move(c1);
        rt->col2 = std::move(col2);
      }
    }

    // Spatial self-attention.
    {
      SpatialTape* st = tape ? &tape->spatial[b] : nullptr;
      const HookSite site{options.step, base_id + 1, ModuleKind::kSpatialSelfAttention, options.pass};
      RowMat n;
      layer_norm(as_rows(x), p[block_name(b, "sa.ln.g")].values(),
                 p[block_name(b, "sa.ln.b")].values(), n, st ? &st->ln : nullptr);
      const Tensor& wq = p[block_name(b, "sa.wq")];
      const Tensor& wk = p[block_name(b, "sa.wk")];
      const Tensor& wv = p[block_name(b, "sa.wv")];
      Tensor q = to_hidden(n * mat(wq, c.dim, c.dim), frames, l);
      Tensor k = to_hidden(n * mat(wk, c.dim, c.dim), frames, l);
      Tensor v = to_hidden(n * mat(wv, c.dim, c.dim), frames, l);
      if (hooks) hooks->observe_input(site, to_hidden(n, frames, l));
      Tensor out = spatial_output(c, b, x, q, k, v, st);
      if (hooks && hooks->corrects(site)) {
        hooks->correct_query(site, wq.values(), q);
        hooks->correct_key_value(site, wk.values(), wv.values(), k, v);
        const Tensor corrected = spatial_output(c, b, x, q, k, v, nullptr);
        out = blend_output(out, corrected, hooks->blend_weight(site));
      }
      if (st) {
        st->n = std::move(n);
        st->q = as_rows(q);
        st->k = as_rows(k);
        st->v = as_rows(v);
      }
      x = std::move(out);
    }

    // Temporal self-attention.
    {
      TemporalTape* tt = tape ? &tape->temporal[b] : nullptr;
      const HookSite site{options.step, base_id + 2, ModuleKind::kTemporalSelfAttention, options.pass};
      if (hooks) hooks->observe_input(site, x);
      Tensor out = temporal_output(c, b, x, options, tt, &ape_table);
      if (hooks && hooks->corrects(site)) {
        Tensor corrected_in = x;
        hooks->correct_input(site, corrected_in);
        const Tensor corrected = temporal_output(c, b, corrected_in, options, nullptr, &ape_table, &x);
        out = blend_output(out, corrected, hooks->blend_weight(site));
      }
      x = std::move(out);
    }
  }

  // Output head.
  RowMat n;
  layer_norm(as_rows(x), p["out.ln.g"].values(), p["out.ln.b"].values(), n,
             tape ? &tape->out_ln : nullptr);
  RowMat e = n * mat(p["out.w"], c.dim, cfg.channels);
  e.rowwise() += vec(p["out.b"]);
  Tensor eps(z_t.shape());
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
      for (std::size_t q = 0; q < l; ++q) {
        eps[(f * cfg.channels + ch) * l + q] = e(static_cast<Eigen::Index>(f * l + q),
                                                 static_cast<Eigen::Index>(ch));
      }
    }
  }
  if (tape) tape->out_n = std::move(n);
  return eps;
}

}  // namespace detail

namespace {

void add_random(ParameterSet& p, std::mt19937_64& rng, std::string name, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
  p.add(std::move(name), std::move(t));
}

void add_const(ParameterSet& p, std::string name, Shape shape, double value) {
  p.add(std::move(name), Tensor(std::move(shape), value));
}

}  // namespace

ToyBackbone ToyBackbone::initialize(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.dim;
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double inv_conv = 1.0 / std::sqrt(9.0 * static_cast<double>(d));
  ParameterSet p;
  add_random(p, rng, "in.w", {config.channels, d}, 1.0 / std::sqrt(static_cast<double>(config.channels)));
  add_const(p, "in.b", {d}, 0.0);
  add_random(p, rng, "pos", {config.tokens(), d}, 0.1);
  add_random(p, rng, "temb.w1", {d + 1, d}, 1.0 / std::sqrt(static_cast<double>(d + 1)));
  add_const(p, "temb.b1", {d}, 0.0);
  add_random(p, rng, "temb.w2", {d, d}, inv_d);
  add_const(p, "temb.b2", {d}, 0.0);
  add_random(p, rng, "class", {config.classes + 1, d}, 0.1);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    auto name = [b](const char* leaf) { return detail::block_name(b, leaf); };
    add_const(p, name("res.ln.g"), {d}, 1.0);
    add_const(p, name("res.ln.b"), {d}, 0.0);
    add_random(p, rng, name("res.conv1.w"), {9 * d, d}, inv_conv);
    add_const(p, name("res.conv1.b"), {d}, 0.0);
    add_random(p, rng, name("res.temb.w"), {d, d}, inv_d);
    add_const(p, name("res.temb.b"), {d}, 0.0);
    add_random(p, rng, name("res.conv2.w"), {9 * d, d}, 0.5 * inv_conv);
    add_const(p, name("res.conv2.b"), {d}, 0.0);

    add_const(p, name("sa.ln.g"), {d}, 1.0);
    add_const(p, name("sa.ln.b"), {d}, 0.0);
    add_random(p, rng, name("sa.wq"), {d, d}, inv_d);
    add_random(p, rng, name("sa.wk"), {d, d}, inv_d);
    add_random(p, rng, name("sa.wv"), {d, d}, inv_d);
    add_random(p, rng, name("sa.wo"), {d, d}, 0.5 * inv_d);
    add_const(p, name("sa.bo"), {d}, 0.0);

    add_const(p, name("ta.ln.g"), {d}, 1.0);
    add_const(p, name("ta.ln.b"), {d}, 0.0);
    add_random(p, rng, name("ta.wq"), {d, d}, inv_d);
    add_random(p, rng, name("ta.wk"), {d, d}, inv_d);
    add_random(p, rng, name("ta.wv"), {d, d}, inv_d);
    add_random(p, rng, name("ta.wo"), {d, d}, 0.5 * inv_d);
    add_const(p, name("ta.bo"), {d}, 0.0);
    if (config.positional == PositionalMode::kRelative) {
      add_random(p, rng, name("ta.pk"), {config.frames, d}, 0.1);
      add_random(p, rng, name("ta.pv"), {config.frames, d}, 0.1);
    } else if (config.positional == PositionalMode::kAbsolute) {
      add_random(p, rng, name("ta.ape"), {d, d}, 0.1 * inv_d);
    }
  }
  add_const(p, "out.ln.g", {d}, 1.0);
  add_const(p, "out.ln.b", {d}, 0.0);
  add_random(p, rng, "out.w", {d, config.channels}, inv_d);
  add_const(p, "out.b", {config.channels}, 0.0);
  return ToyBackbone(config, std::move(p));
}

ToyBackbone::ToyBackbone(BackboneConfig config, ParameterSet parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
}

std::vector<ModuleInfo> ToyBackbone::modules() const {
  std::vector<ModuleInfo> out;
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const int id = static_cast<int>(3 * b);
    const int block = static_cast<int>(b);
    out.push_back({id, block, ModuleKind::kSpatialResNet});
    out.push_back({id + 1, block, ModuleKind::kSpatialSelfAttention});
    out.push_back({id + 2, block, ModuleKind::kTemporalSelfAttention});
  }
  return out;
}

std::size_t ToyBackbone::hooked_module_count() const {
  std::size_t n = 0;
  for (const ModuleInfo& m : modules()) n += is_hooked(m.kind) ? 1 : 0;
  return n;
}

Tensor ToyBackbone::denoise(const Tensor& z_t, int timestep, int label, double fps,
                            const ForwardOptions& options) const {
  return detail::backbone_forward(*this, z_t, timestep, label, fps, options, nullptr);
}

namespace {

double mse(const Tensor& pred, const Tensor& target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

double ToyBackbone::loss_and_gradient(const Tensor& z_t, const Tensor& eps, int timestep, int label,
                                      double fps, ParameterSet& grads) const {
  if (z_t.shape() != eps.shape()) throw DimensionError("loss: eps shape differs from z_t");
  detail::Tape tape;
  const Tensor pred = detail::backbone_forward(*this, z_t, timestep, label, fps, {}, &tape);
  Tensor d_pred(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) d_pred[i] = scale * (pred[i] - eps[i]);
  detail::backbone_backward(*this, tape, d_pred, grads);
  return mse(pred, eps);
}

double ToyBackbone::loss(const Tensor& z_t, const Tensor& eps, int timestep, int label,
                         double fps) const {
  if (z_t.shape() != eps.shape()) throw DimensionError("loss: eps shape differs from z_t");
  return mse(denoise(z_t, timestep, label, fps), eps);
}

namespace {

constexpr const char* kConfigArray = "__config__";

}  // namespace

void ToyBackbone::save(const std::filesystem::path& path) const {
  std::vector<NamedArray> arrays;
  const std::vector<double> header = {
      static_cast<double>(config_.frames),  static_cast<double>(config_.channels),
      static_cast<double>(config_.height),  static_cast<double>(config_.width),
      static_cast<double>(config_.dim),     static_cast<double>(config_.heads),
      static_cast<double>(config_.blocks),  static_cast<double>(static_cast<int>(config_.positional)),
      static_cast<double>(config_.classes)};
  arrays.push_back(to_named_array(kConfigArray, Tensor({header.size()}, header)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    arrays.push_back(to_named_array(params_.names()[i], params_.tensors()[i]));
  }
  write_container(path, arrays);
}

ToyBackbone ToyBackbone::load(const std::filesystem::path& path) {
  const std::vector<NamedArray> arrays = read_container(path);
  if (arrays.empty() || arrays.front().name != kConfigArray || arrays.front().data.size() != 9) {
    throw FormatError("checkpoint " + path.string() + " has no backbone config header");
  }
  const auto& h = arrays.front().data;
  BackboneConfig cfg;
  cfg.frames = static_cast<std::size_t>(h[0]);
  cfg.channels = static_cast<std::size_t>(h[1]);
  cfg.height = static_cast<std::size_t>(h[2]);
  cfg.width = static_cast<std::size_t>(h[3]);
  cfg.dim = static_cast<std::size_t>(h[4]);
  cfg.heads = static_cast<std::size_t>(h[5]);
  cfg.blocks = static_cast<std::size_t>(h[6]);
  const int mode = static_cast<int>(h[7]);
  if (mode < 0 || mode > 2) throw FormatError("checkpoint has an unknown positional mode");
  cfg.positional = static_cast<PositionalMode>(mode);
  cfg.classes = static_cast<std::size_t>(h[8]);
  cfg.validate();

  // Layout and shapes must match a fresh model of the same config.
  ParameterSet params = initialize(cfg, 0).parameters();
  std::size_t seen = 0;
  for (std::size_t i = 1; i < arrays.size(); ++i) {
    const NamedArray& a = arrays[i];
    if (!params.contains(a.name)) throw FormatError("checkpoint has unknown parameter " + a.name);
    Tensor& dst = params[a.name];
    if (dst.shape() != a.dims) throw FormatError("checkpoint parameter " + a.name + " has wrong shape");
    dst = to_tensor(a);
    ++seen;
  }
  if (seen != params.size()) throw FormatError("checkpoint is missing parameters");
  return ToyBackbone(cfg, std::move(params));
}

Tensor BackboneDenoiser::predict_noise(const Tensor& z_t, const StepInfo& step,
                                       const Conditioning& cond) const {
  ForwardOptions opt = options_;
  opt.step = step;
  opt.pass = 0;
  Tensor eps = model_.denoise(z_t, step.timestep, cond.label, cond.fps, opt);
  bool guided = false;
  for (double g : cond.guidance) guided = guided || g != 1.0;
  if (!guided) return eps;
  if (cond.guidance.size() != z_t.frames()) {
    throw DimensionError("guidance needs one scale per frame");
  }
  opt.pass = 1;
  const Tensor uncond = model_.denoise(z_t, step.timestep, model_.config().null_label(), cond.fps, opt);
  const std::size_t fs = z_t.frame_size();
  for (std::size_t f = 0; f < z_t.frames(); ++f) {
    const double g = cond.guidance[f];
    for (std::size_t i = f * fs; i < (f + 1) * fs; ++i) eps[i] = uncond[i] + g * (eps[i] - uncond[i]);
  }
  return eps;
}

CrossAttentionWeights CrossAttentionWeights::random(std::size_t dim, std::size_t heads,
                                                    std::uint64_t seed) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  auto draw = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
  };
  CrossAttentionWeights w;
  w.ln_gain.assign(dim, 1.0);
  w.ln_bias.assign(dim, 0.0);
  w.wq = draw(dim * dim);
  w.wk = draw(dim * dim);
  w.wv = draw(dim * dim);
  w.wo = draw(dim * dim);
  w.bo = draw(dim);
  w.heads = heads;
  return w;
}

namespace {

Tensor cross_output(const HiddenState& h, const Tensor& q, const detail::RowMat& k,
                    const detail::RowMat& v, const CrossAttentionWeights& w) {
  const auto d = static_cast<Eigen::Index>(h.dim(2));
  const auto rows = static_cast<Eigen::Index>(h.frames() * h.dim(1));
  detail::RowMat att(rows, d);
  // Queries attend the shared context independently, so all rows can be
  // processed as one sequence.
  detail::attention_forward(detail::cmap(q.data(), rows, d, d), detail::cmap(k.data(), k.rows(), d, d),
                            detail::cmap(v.data(), v.rows(), d, d), static_cast<int>(w.heads),
                            detail::mmap(att.data(), rows, d, d));
  Tensor out = h;
  auto o = Eigen::Map<detail::RowMat>(out.data(), rows, d);
  o.noalias() += att * detail::cmap(w.wo.data(), d, d, d);
  o.rowwise() += Eigen::Map<const detail::RowVec>(w.bo.data(), d);
  return out;
}

Tensor cross_module(const HiddenState& h, const Tensor& context, const CrossAttentionWeights& w,
                    AttentionHooks* hooks, const HookSite& site, bool observe) {
  const auto d = static_cast<Eigen::Index>(h.dim(2));
  const auto rows = static_cast<Eigen::Index>(h.frames() * h.dim(1));
  detail::RowMat n;
  detail::layer_norm(detail::cmap(h.data(), rows, d, d), w.ln_gain, w.ln_bias, n, nullptr);
  Tensor nt(h.shape());
  Eigen::Map<detail::RowMat>(nt.data(), rows, d) = n;
  if (observe && hooks) hooks->observe_input(site, nt);
  const auto ctx = detail::cmap(context.data(), static_cast<Eigen::Index>(context.dim(0)), d, d);
  const detail::RowMat k = ctx * detail::cmap(w.wk.data(), d, d, d);
  const detail::RowMat v = ctx * detail::cmap(w.wv.data(), d, d, d);
  Tensor q(h.shape());
  Eigen::Map<detail::RowMat>(q.data(), rows, d).noalias() = n * detail::cmap(w.wq.data(), d, d, d);
  Tensor out = cross_output(h, q, k, v, w);
  if (site.kind == ModuleKind::kSpatialCrossAttention && hooks && hooks->corrects(site)) {
    hooks->correct_query(site, w.wq, q);
    out = blend_output(out, cross_output(h, q, k, v, w), hooks->blend_weight(site));
  }
  return out;
}

}  // namespace

HiddenState cross_attention(ModuleKind kind, const HiddenState& h, const Tensor& context,
                            const CrossAttentionWeights& weights, AttentionHooks* hooks,
                            const HookSite& site_in) {
  if (kind != ModuleKind::kSpatialCrossAttention && kind != ModuleKind::kTemporalCrossAttention) {
    throw ConfigError("cross_attention needs a cross-attention module kind");
  }
  if (h.rank() != 3 || context.rank() != 2 || context.dim(1) != h.dim(2)) {
    throw DimensionError("cross_attention: h must be t x l x d and context m x d");
  }
  const std::size_t d = h.dim(2);
  if (weights.wq.size() != d * d || weights.wk.size() != d * d || weights.wv.size() != d * d ||
      weights.wo.size() != d * d || weights.bo.size() != d || weights.ln_gain.size() != d ||
      weights.ln_bias.size() != d) {
    throw DimensionError("cross_attention: weights do not match d");
  }
  HookSite site = site_in;
  site.kind = kind;
  if (kind == ModuleKind::kSpatialCrossAttention) {
    return cross_module(h, context, weights, hooks, site, true);
  }
  if (hooks) hooks->observe_input(site, h);
  Tensor out = cross_module(h, context, weights, nullptr, site, false);
  if (hooks && hooks->corrects(site)) {
    Tensor corrected = h;
    hooks->correct_input(site, corrected);
    out = blend_output(out, cross_module(corrected, context, weights, nullptr, site, false),
                       hooks->blend_weight(site));
  }
  return out;
}

}  // namespace zerosmooth
