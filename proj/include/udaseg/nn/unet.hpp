#pragma once

#include <string>
#include <vector>

#include "udaseg/common.hpp"
#include "udaseg/nn/layers.hpp"

namespace udaseg::nn {

// Resolution ladder of an encoder-decoder network. channels has one entry per
// resolution stage; strides has one entry per downsampling between stages.
struct UNetArch {
  int64_t in_channels = 1;
  std::vector<int64_t> channels;
  std::vector<Triple> strides;
  Triple kernel{3, 3, 3};
  double leaky_slope = 0.01;
};

// Spatial sizes per stage for a given input size; throws ConfigError when the
// schedule does not divide evenly (the transposed-conv upsampling needs exact
// alignment with the skip connections).
inline std::vector<Triple> propagate_shapes(const UNetArch& arch, const Triple& input) {
  std::vector<Triple> sizes{input};
  const char* axis_names = "zyx";
  for (size_t lvl = 0; lvl < arch.strides.size(); ++lvl) {
    Triple cur = sizes.back(), next{};
    for (int a = 0; a < 3; ++a) {
      int64_t s = arch.strides[lvl][a];
      if (s < 1) throw ConfigError("stride schedule: stride < 1");
      if (cur[a] % s != 0)
        throw ConfigError("stride schedule invalid at level " + std::to_string(lvl + 1) +
                          ", axis " + axis_names[a] + (": size " + std::to_string(cur[a])) +
                          " not divisible by " + std::to_string(s));
      next[a] = cur[a] / s;
      if (next[a] < 1)
        throw ConfigError("stride schedule invalid at level " + std::to_string(lvl + 1) +
                          ", axis " + axis_names[a] + ": size collapses below 1");
    }
    sizes.push_back(next);
  }
  return sizes;
}

template <typename S>
class UNetEncoder {
 public:
  UNetEncoder(const std::string& name, const UNetArch& arch) : arch_(arch) {
    Triple pad{arch.kernel[0] / 2, arch.kernel[1] / 2, arch.kernel[2] / 2};
    for (size_t i = 0; i < arch.channels.size(); ++i) {
      int64_t cin = i == 0 ? arch.in_channels : arch.channels[i - 1];
      int64_t c = arch.channels[i];
      Triple stride = i == 0 ? Triple{1, 1, 1} : arch.strides[i - 1];
      auto stage = std::make_unique<Sequential<S>>();
      std::string base = name + ".stage" + std::to_string(i);
      stage->template add<Conv<S>>(base + ".conv0", cin, c, arch.kernel, stride, pad);
      stage->template add<InstanceNorm<S>>(base + ".norm0", c);
      stage->template add<LeakyReLU<S>>(arch.leaky_slope);
      stage->template add<Conv<S>>(base + ".conv1", c, c, arch.kernel, Triple{1, 1, 1}, pad);
      stage->template add<InstanceNorm<S>>(base + ".norm1", c);
      stage->template add<LeakyReLU<S>>(arch.leaky_slope);
      stages_.push_back(std::move(stage));
    }
  }

  size_t levels() const { return stages_.size(); }
  const UNetArch& arch() const { return arch_; }

  std::vector<Tensor<S>> forward(const Tensor<S>& x, Tape<S>& tape) {
    std::vector<Tensor<S>> feats;
    Tensor<S> h = x;
    for (auto& stage : stages_) {
      h = stage->forward(h, tape);
      feats.push_back(h);
    }
    return feats;
  }

  Tensor<S> backward(std::vector<Tensor<S>> gfeats, Tape<S>& tape, bool accum) {
    Tensor<S> g = std::move(gfeats.back());
    for (size_t i = stages_.size(); i-- > 0;) {
      g = stages_[i]->backward(g, tape, accum);
      if (i > 0) g.array() += gfeats[i - 1].array();
    }
    return g;
  }

  void collect_params(std::vector<Param<S>*>& out) {
    for (auto& s : stages_) s->collect_params(out);
  }

  void init(Rng& rng) {
    for (auto& s : stages_) s->init(rng);
  }

 private:
  UNetArch arch_;
  std::vector<std::unique_ptr<Sequential<S>>> stages_;
};

// Decoder over encoder features, with optional deep-supervision heads at the
// finest `ds_heads` resolutions (head 0 = full resolution).
template <typename S>
class UNetDecoder {
 public:
  UNetDecoder(const std::string& name, const UNetArch& arch, int64_t out_channels, int ds_heads,
              bool final_tanh)
      : arch_(arch), out_channels_(out_channels), final_tanh_(final_tanh) {
    const size_t n_up = arch.strides.size();
    n_heads_ = std::min<size_t>(std::max(1, ds_heads), n_up);
    Triple pad{arch.kernel[0] / 2, arch.kernel[1] / 2, arch.kernel[2] / 2};
    stages_.resize(n_up);
    for (size_t i = 0; i < n_up; ++i) {
      std::string base = name + ".up" + std::to_string(i);
      auto& st = stages_[i];
      st.up = std::make_unique<ConvTranspose<S>>(base + ".tconv", arch.channels[i + 1],
                                                 arch.channels[i], arch.strides[i]);
      st.block = std::make_unique<Sequential<S>>();
      st.block->template add<Conv<S>>(base + ".conv0", 2 * arch.channels[i], arch.channels[i],
                                      arch.kernel, Triple{1, 1, 1}, pad);
      st.block->template add<InstanceNorm<S>>(base + ".norm0", arch.channels[i]);
      st.block->template add<LeakyReLU<S>>(arch.leaky_slope);
      st.block->template add<Conv<S>>(base + ".conv1", arch.channels[i], arch.channels[i],
                                      arch.kernel, Triple{1, 1, 1}, pad);
      st.block->template add<InstanceNorm<S>>(base + ".norm1", arch.channels[i]);
      st.block->template add<LeakyReLU<S>>(arch.leaky_slope);
      if (i < n_heads_)
        st.head = std::make_unique<Conv<S>>(base + ".head", arch.channels[i], out_channels,
                                            Triple{1, 1, 1}, Triple{1, 1, 1}, Triple{0, 0, 0});
    }
    if (final_tanh_) tanh_ = std::make_unique<Tanh<S>>();
  }

  size_t heads() const { return n_heads_; }

  // feats: one per encoder stage. Returns one logits tensor per head, finest
  // first.
  std::vector<Tensor<S>> forward(const std::vector<Tensor<S>>& feats, Tape<S>& tape) {
    const size_t n_up = stages_.size();
    std::vector<Tensor<S>> logits(n_heads_);
    Tensor<S> d = feats[n_up];
    for (size_t i = n_up; i-- > 0;) {
      Tensor<S> u = stages_[i].up->forward(d, tape);
      Tensor<S> cat = concat_channels(u, feats[i]);
      d = stages_[i].block->forward(cat, tape);
      if (i < n_heads_) {
        logits[i] = stages_[i].head->forward(d, tape);
        if (i == 0 && final_tanh_) logits[0] = tanh_->forward(logits[0], tape);
      }
    }
    return logits;
  }

  // glogits: gradient per head (finest first; missing heads may be empty
  // tensors). Returns the gradient w.r.t. each encoder feature.
  std::vector<Tensor<S>> backward(const std::vector<Tensor<S>>& glogits, Tape<S>& tape,
                                  bool accum) {
    const size_t n_up = stages_.size();
    std::vector<Tensor<S>> gfeats(n_up + 1);
    Tensor<S> gd;
    for (size_t i = 0; i < n_up; ++i) {
      Tensor<S> gh;
      if (i < n_heads_ && glogits[i].numel() > 0) {
        Tensor<S> g = glogits[i];
        if (i == 0 && final_tanh_) g = tanh_->backward(g, tape, accum);
        gh = stages_[i].head->backward(g, tape, accum);
      } else if (i < n_heads_) {
        // Head was applied in forward; unwind its saved state with zero grad.
        Tensor<S> zero_head({0});
        if (i == 0 && final_tanh_) {
          Tensor<S> y = tape.pop();  // tanh output
          (void)y;
        }
        Tensor<S> x = tape.pop();  // head conv input
        gh = Tensor<S>::zeros_like(x);
      }
      if (i == 0) {
        gd = std::move(gh);
      } else if (gh.numel() > 0) {
        gd.array() += gh.array();
      }
      Tensor<S> gcat = stages_[i].block->backward(gd, tape, accum);
      auto [gu, gskip] = split_channels(gcat, arch_.channels[i], arch_.channels[i]);
      gfeats[i] = std::move(gskip);
      gd = stages_[i].up->backward(gu, tape, accum);
    }
    gfeats[n_up] = std::move(gd);
    return gfeats;
  }

  void collect_params(std::vector<Param<S>*>& out) {
    for (auto& st : stages_) {
      st.up->collect_params(out);
      st.block->collect_params(out);
      if (st.head) st.head->collect_params(out);
    }
  }

  void init(Rng& rng) {
    for (auto& st : stages_) {
      st.up->init(rng);
      st.block->init(rng);
      if (st.head) st.head->init(rng);
    }
  }

 private:
  struct Stage {
    std::unique_ptr<ConvTranspose<S>> up;
    std::unique_ptr<Sequential<S>> block;
    std::unique_ptr<Conv<S>> head;
  };

  UNetArch arch_;
  int64_t out_channels_;
  bool final_tanh_;
  size_t n_heads_;
  std::vector<Stage> stages_;
  std::unique_ptr<Tanh<S>> tanh_;
};

}  // namespace udaseg::nn
