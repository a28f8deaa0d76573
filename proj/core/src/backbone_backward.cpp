// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode gradients of the backbone's noise-prediction loss at t0 frames.

#include "backbone_internal.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth::detail {

namespace {

using GradMap = Eigen::Map<RowMat>;
using GradVec = Eigen::Map<RowVec>;

class Grads {
 public:
  explicit Grads(ParameterSet& g) : g_(g) {}

  GradMap mat(const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor& t = g_[name];
    return GradMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  GradVec vec(const std::string& name) {
    Tensor& t = g_[name];
    return GradVec(t.data(), static_cast<Eigen::Index>(t.size()));
  }
  std::span<double> span(const std::string& name) { return g_[name].values(); }

 private:
  ParameterSet& g_;
};

CMap pmat(const ParameterSet& p, const std::string& name, std::size_t rows, std::size_t cols) {
  return cmap(p[name].data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
              static_cast<Eigen::Index>(cols));
}

RowMat silu_grad_of(const RowMat& x) {
  return x.unaryExpr([](double v) { return silu_grad(v); });
}

// On entry dx holds dL/d(output); on exit dL/d(input).
void temporal_backward(const ToyBackbone& model, std::size_t b, const Tape& tape, RowMat& dx,
                       Grads& grads) {
  const BackboneConfig& cfg = model.config();
  const ParameterSet& p = model.parameters();
  const TemporalTape& tt = tape.temporal[b];
  const std::size_t dim = cfg.dim;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto t = static_cast<Eigen::Index>(tape.frames);
  const auto stride = static_cast<Eigen::Index>(cfg.tokens() * dim);
  auto name = [b](const char* leaf) { return block_name(b, leaf); };

  const RowMat& g = dx;
  grads.vec(name("ta.bo")) += g.colwise().sum();
  grads.mat(name("ta.wo"), dim, dim).noalias() += tt.att.transpose() * g;
  const RowMat datt = g * pmat(p, name("ta.wo"), dim, dim).transpose();

  RowMat dq = RowMat::Zero(g.rows(), d);
  RowMat dkh = RowMat::Zero(g.rows(), d);
  RowMat dvh = RowMat::Zero(g.rows(), d);
  RowMat dpk = RowMat::Zero(t, d);
  RowMat dpv = RowMat::Zero(t, d);
  RowMat kk(t, d), vv(t, d), dk(t, d), dv(t, d);
  for (std::size_t tok = 0; tok < cfg.tokens(); ++tok) {
    const std::size_t off = tok * dim;
    kk = cmap(tt.kh.data() + off, t, d, stride) + tt.pk_proj;
    vv = cmap(tt.vh.data() + off, t, d, stride) + tt.pv_proj;
    dk.setZero();
    dv.setZero();
    attention_backward(cmap(tt.q.data() + off, t, d, stride), cmap(kk.data(), t, d, d),
                       cmap(vv.data(), t, d, d), tt.probs[tok], cmap(datt.data() + off, t, d, stride),
                       static_cast<int>(cfg.heads), mmap(dq.data() + off, t, d, stride),
                       mmap(dk.data(), t, d, d), mmap(dv.data(), t, d, d));
    mmap(dkh.data() + off, t, d, stride) += dk;
    mmap(dvh.data() + off, t, d, stride) += dv;
    dpk += dk;
    dpv += dv;
  }

  const CMap wq = pmat(p, name("ta.wq"), dim, dim);
  const CMap wk = pmat(p, name("ta.wk"), dim, dim);
  const CMap wv = pmat(p, name("ta.wv"), dim, dim);
  grads.mat(name("ta.wq"), dim, dim).noalias() += tt.n.transpose() * dq;
  grads.mat(name("ta.wk"), dim, dim).noalias() += tt.n.transpose() * dkh;
  grads.mat(name("ta.wv"), dim, dim).noalias() += tt.n.transpose() * dvh;
  if (cfg.positional == PositionalMode::kRelative) {
    const CMap pk = pmat(p, name("ta.pk"), tape.frames, dim);
    const CMap pv = pmat(p, name("ta.pv"), tape.frames, dim);
    grads.mat(name("ta.wk"), dim, dim).noalias() += pk.transpose() * dpk;
    grads.mat(name("ta.wv"), dim, dim).noalias() += pv.transpose() * dpv;
    grads.mat(name("ta.pk"), tape.frames, dim).noalias() += dpk * wk.transpose();
    grads.mat(name("ta.pv"), tape.frames, dim).noalias() += dpv * wv.transpose();
  }
  RowMat dn = dq * wq.transpose();
  dn.noalias() += dkh * wk.transpose();
  dn.noalias() += dvh * wv.transpose();
  if (cfg.positional == PositionalMode::kAbsolute) {
    RowMat du = RowMat::Zero(t, d);
    const auto l = static_cast<Eigen::Index>(cfg.tokens());
    for (Eigen::Index f = 0; f < t; ++f) du.row(f) = dn.middleRows(f * l, l).colwise().sum();
    grads.mat(name("ta.ape"), dim, dim).noalias() += tape.ape_table.transpose() * du;
  }
  layer_norm_backward(tt.ln, p[name("ta.ln.g")].values(), dn, dx, grads.span(name("ta.ln.g")),
                      grads.span(name("ta.ln.b")));
}

void spatial_backward(const ToyBackbone& model, std::size_t b, const Tape& tape, RowMat& dx,
                      Grads& grads) {
  const BackboneConfig& cfg = model.config();
  const ParameterSet& p = model.parameters();
  const SpatialTape& st = tape.spatial[b];
  const std::size_t dim = cfg.dim;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto l = static_cast<Eigen::Index>(cfg.tokens());
  auto name = [b](const char* leaf) { return block_name(b, leaf); };

  const RowMat& g = dx;
  grads.vec(name("sa.bo")) += g.colwise().sum();
  grads.mat(name("sa.wo"), dim, dim).noalias() += st.att.transpose() * g;
  const RowMat datt = g * pmat(p, name("sa.wo"), dim, dim).transpose();

  RowMat dq = RowMat::Zero(g.rows(), d);
  RowMat dk = RowMat::Zero(g.rows(), d);
  RowMat dv = RowMat::Zero(g.rows(), d);
  for (std::size_t f = 0; f < tape.frames; ++f) {
    const Eigen::Index off = static_cast<Eigen::Index>(f) * l * d;
    attention_backward(cmap(st.q.data() + off, l, d, d), cmap(st.k.data() + off, l, d, d),
                       cmap(st.v.data() + off, l, d, d), st.probs[f],
                       cmap(datt.data() + off, l, d, d), static_cast<int>(cfg.heads),
                       mmap(dq.data() + off, l, d, d), mmap(dk.data() + off, l, d, d),
                       mmap(dv.data() + off, l, d, d));
  }
  const CMap wq = pmat(p, name("sa.wq"), dim, dim);
  const CMap wk = pmat(p, name("sa.wk"), dim, dim);
  const CMap wv = pmat(p, name("sa.wv"), dim, dim);
  grads.mat(name("sa.wq"), dim, dim).noalias() += st.n.transpose() * dq;
  grads.mat(name("sa.wk"), dim, dim).noalias() += st.n.transpose() * dk;
  grads.mat(name("sa.wv"), dim, dim).noalias() += st.n.transpose() * dv;
  RowMat dn = dq * wq.transpose();
  dn.noalias() += dk * wk.transpose();
  dn.noalias() += dv * wv.transpose();
  layer_norm_backward(st.ln, p[name("sa.ln.g")].values(), dn, dx, grads.span(name("sa.ln.g")),
                      grads.span(name("sa.ln.b")));
}

void resnet_backward(const ToyBackbone& model, std::size_t b, const Tape& tape, RowMat& dx,
                     const RowVec& temb_act, RowVec& dtemb_act, Grads& grads) {
  const BackboneConfig& cfg = model.config();
  const ParameterSet& p = model.parameters();
  const ResNetTape& rt = tape.resnet[b];
  const std::size_t dim = cfg.dim;
  auto name = [b](const char* leaf) { return block_name(b, leaf); };

  const RowMat& g = dx;
  grads.vec(name("res.conv2.b")) += g.colwise().sum();
  grads.mat(name("res.conv2.w"), 9 * dim, dim).noalias() += rt.col2.transpose() * g;
  const RowMat dcol2 = g * pmat(p, name("res.conv2.w"), 9 * dim, dim).transpose();
  RowMat da2 = RowMat::Zero(g.rows(), g.cols());
  col2im3x3_add(dcol2, tape.frames, cfg.height, cfg.width, da2);
  const RowMat dc1 = da2.cwiseProduct(silu_grad_of(rt.c1));

  const RowVec dtproj = dc1.colwise().sum();
  grads.vec(name("res.conv1.b")) += dtproj;
  grads.mat(name("res.conv1.w"), 9 * dim, dim).noalias() += rt.col1.transpose() * dc1;
  grads.vec(name("res.temb.b")) += dtproj;
  grads.mat(name("res.temb.w"), dim, dim).noalias() += temb_act.transpose() * dtproj;
  dtemb_act.noalias() += dtproj * pmat(p, name("res.temb.w"), dim, dim).transpose();

  const RowMat dcol1 = dc1 * pmat(p, name("res.conv1.w"), 9 * dim, dim).transpose();
  RowMat da = RowMat::Zero(g.rows(), g.cols());
  col2im3x3_add(dcol1, tape.frames, cfg.height, cfg.width, da);
  const RowMat dn = da.cwiseProduct(silu_grad_of(rt.n));
  layer_norm_backward(rt.ln, p[name("res.ln.g")].values(), dn, dx, grads.span(name("res.ln.g")),
                      grads.span(name("res.ln.b")));
}

}  // namespace

void backbone_backward(const ToyBackbone& model, const Tape& tape, const Tensor& d_eps,
                       ParameterSet& grads_set) {
  const BackboneConfig& cfg = model.config();
  const ParameterSet& p = model.parameters();
  if (grads_set.size() != p.size()) throw DimensionError("gradient set does not match parameters");
  if (d_eps.shape() != tape.z.shape()) throw DimensionError("backward: gradient shape mismatch");
  Grads grads(grads_set);
  const std::size_t dim = cfg.dim;
  const std::size_t l = cfg.tokens();
  const std::size_t rows = tape.frames * l;
  const auto d = static_cast<Eigen::Index>(dim);

  // Output head.
  RowMat de(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cfg.channels));
  for (std::size_t f = 0; f < tape.frames; ++f) {
    for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
      for (std::size_t q = 0; q < l; ++q) {
        de(static_cast<Eigen::Index>(f * l + q), static_cast<Eigen::Index>(ch)) =
            d_eps[(f * cfg.channels + ch) * l + q];
      }
    }
  }
  grads.vec("out.b") += de.colwise().sum();
  grads.mat("out.w", dim, cfg.channels).noalias() += tape.out_n.transpose() * de;
  const RowMat dn = de * pmat(p, "out.w", dim, cfg.channels).transpose();
  RowMat dx = RowMat::Zero(static_cast<Eigen::Index>(rows), d);
  layer_norm_backward(tape.out_ln, p["out.ln.g"].values(), dn, dx, grads.span("out.ln.g"),
                      grads.span("out.ln.b"));

  const RowVec temb = tape.temb.transpose();
  const RowVec temb_act = temb.unaryExpr([](double v) { return silu(v); });
  RowVec dtemb_act = RowVec::Zero(d);
  for (std::size_t b = cfg.blocks; b-- > 0;) {
    temporal_backward(model, b, tape, dx, grads);
    spatial_backward(model, b, tape, dx, grads);
    resnet_backward(model, b, tape, dx, temb_act, dtemb_act, grads);
  }

  // Input projection.
  {
    auto din_b = grads.vec("in.b");
    auto dpos = grads.mat("pos", l, dim);
    auto din_w = grads.mat("in.w", cfg.channels, dim);
    for (std::size_t f = 0; f < tape.frames; ++f) {
      for (std::size_t q = 0; q < l; ++q) {
        const auto r = static_cast<Eigen::Index>(f * l + q);
        din_b += dx.row(r);
        dpos.row(static_cast<Eigen::Index>(q)) += dx.row(r);
        for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
          din_w.row(static_cast<Eigen::Index>(ch)) += tape.z[(f * cfg.channels + ch) * l + q] * dx.row(r);
        }
      }
    }
  }

  // Embedding MLP.
  const RowVec dtemb = dtemb_act.cwiseProduct(temb.unaryExpr([](double v) { return silu_grad(v); }));
  grads.mat("class", cfg.classes + 1, dim).row(tape.label) += dtemb;
  grads.vec("temb.b2") += dtemb;
  const RowVec pre = tape.temb_pre.transpose();
  const RowVec hidden = pre.unaryExpr([](double v) { return silu(v); });
  grads.mat("temb.w2", dim, dim).noalias() += hidden.transpose() * dtemb;
  const RowVec dhidden = dtemb * pmat(p, "temb.w2", dim, dim).transpose();
  const RowVec dpre = dhidden.cwiseProduct(pre.unaryExpr([](double v) { return silu_grad(v); }));
  grads.vec("temb.b1") += dpre;
  grads.mat("temb.w1", dim + 1, dim).noalias() += tape.temb_in * dpre;
}

}  // namespace zerosmooth::detail
