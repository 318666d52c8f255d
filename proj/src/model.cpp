#include "styleap/model.hpp"

#include <cmath>

#include "styleap/error.hpp"

namespace styleap {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "model config: " + m); };
  if (vocab_size < 1) fail("vocab_size must be positive");
  if (enc_layers < 0 || dec_layers < 0) fail("layer counts must be non-negative");
  if (model_dim < 1 || heads < 1) fail("model_dim and heads must be positive");
  if (model_dim % heads != 0) fail("model_dim " + std::to_string(model_dim) + " not divisible by heads " + std::to_string(heads));
  if (ffn_dim < 1) fail("ffn_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (max_positions < 2) fail("max_positions must be at least 2");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"enc_layers", enc_layers},     {"dec_layers", dec_layers},
          {"model_dim", model_dim},   {"heads", heads},               {"ffn_dim", ffn_dim},
          {"dropout", dropout},       {"tie_embeddings", tie_embeddings}, {"label_smoothing", label_smoothing},
          {"max_positions", max_positions}, {"norm_style", "post"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.max_positions = j.value("max_positions", c.max_positions);
  return c;
}

template <typename S>
struct Transformer<S>::Forward {
  struct Enc {
    nn::AttentionCache<S> att;
    Matrix m1, m2;
    nn::LayerNormCache<S> ln1, ln2;
    nn::FeedForwardCache<S> ffn;
  };
  struct Dec {
    nn::AttentionCache<S> self, cross;
    Matrix m1, m2, m3;
    nn::LayerNormCache<S> ln1, ln2, ln3;
    nn::FeedForwardCache<S> ffn;
  };

  nn::Segments src, tgt;
  std::vector<TokenId> src_tokens, dec_inputs, labels;
  Matrix src_mask, tgt_mask;
  std::vector<Enc> enc;
  std::vector<Dec> dec;
  Matrix memory, hidden;
};

template <typename S>
Transformer<S>::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Eigen::Index d = config_.model_dim;
  const Eigen::Index v = config_.vocab_size;

  const double stddev = 0.5 / std::sqrt(static_cast<double>(d));
  std::normal_distribution<double> normal(0.0, stddev);
  const std::vector<std::string> names = config_.tie_embeddings
                                             ? std::vector<std::string>{"embed"}
                                             : std::vector<std::string>{"embed.src", "embed.tgt", "embed.out"};
  embeddings_.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    embeddings_[i].init(names[i], v, d);
    for (Eigen::Index k = 0; k < embeddings_[i].value.size(); ++k) embeddings_[i].value.data()[k] = S(normal(rng));
  }
  out_bias_.init("out.bias", 1, v);

  encoder_.resize(static_cast<std::size_t>(config_.enc_layers));
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    encoder_[l].self_attn.init(p + ".self", d, config_.heads, rng);
    encoder_[l].ln1.init(p + ".ln1", d);
    encoder_[l].ffn.init(p + ".ffn", d, config_.ffn_dim, rng);
    encoder_[l].ln2.init(p + ".ln2", d);
  }
  decoder_.resize(static_cast<std::size_t>(config_.dec_layers));
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    decoder_[l].self_attn.init(p + ".self", d, config_.heads, rng);
    decoder_[l].ln1.init(p + ".ln1", d);
    decoder_[l].cross_attn.init(p + ".cross", d, config_.heads, rng);
    decoder_[l].ln2.init(p + ".ln2", d);
    decoder_[l].ffn.init(p + ".ffn", d, config_.ffn_dim, rng);
    decoder_[l].ln3.init(p + ".ln3", d);
  }

  positions_.resize(config_.max_positions, d);
  for (Eigen::Index pos = 0; pos < positions_.rows(); ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / rate;
      positions_(pos, i) = S(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
}

template <typename S>
std::vector<nn::Param<S>*> Transformer<S>::parameters() {
  std::vector<nn::Param<S>*> out;
  for (auto& e : embeddings_) out.push_back(&e);
  out.push_back(&out_bias_);
  for (auto& l : encoder_) {
    l.self_attn.collect(out);
    l.ln1.collect(out);
    l.ffn.collect(out);
    l.ln2.collect(out);
  }
  for (auto& l : decoder_) {
    l.self_attn.collect(out);
    l.ln1.collect(out);
    l.cross_attn.collect(out);
    l.ln2.collect(out);
    l.ffn.collect(out);
    l.ln3.collect(out);
  }
  return out;
}

template <typename S>
std::vector<const nn::Param<S>*> Transformer<S>::parameters() const {
  auto mutable_params = const_cast<Transformer*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename S>
void Transformer<S>::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

template <typename S>
typename Transformer<S>::Matrix Transformer<S>::embed(const nn::Param<S>& table, std::span<const TokenId> tokens,
                                                     Eigen::Index first_pos) const {
  const S scale = S(std::sqrt(static_cast<double>(config_.model_dim)));
  Matrix x(static_cast<Eigen::Index>(tokens.size()), config_.model_dim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t < 0 || t >= config_.vocab_size) {
      throw Error(ErrorKind::Config, "token id " + std::to_string(t) + " outside vocabulary");
    }
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) = table.value.row(t) * scale + positions_.row(first_pos + r);
  }
  return x;
}

template <typename S>
void Transformer<S>::run_forward(Forward& f, std::span<const SequencePair> batch, std::mt19937_64* rng) const {
  const nn::Dropout<S> drop(config_.dropout, rng);
  for (const auto& pair : batch) {
    const auto slen = static_cast<Eigen::Index>(pair.source.size() + 1);
    const auto tlen = static_cast<Eigen::Index>(pair.target.size() + 1);
    if (slen > config_.max_positions || tlen > config_.max_positions) {
      throw Error(ErrorKind::Config, "sequence longer than max_positions=" + std::to_string(config_.max_positions));
    }
    f.src.push(slen);
    f.tgt.push(tlen);
    f.src_tokens.insert(f.src_tokens.end(), pair.source.begin(), pair.source.end());
    f.src_tokens.push_back(eos_id);
    f.dec_inputs.push_back(bos_id);
    f.dec_inputs.insert(f.dec_inputs.end(), pair.target.begin(), pair.target.end());
    f.labels.insert(f.labels.end(), pair.target.begin(), pair.target.end());
    f.labels.push_back(eos_id);
  }

  auto embed_packed = [&](const nn::Param<S>& table, const std::vector<TokenId>& tokens, const nn::Segments& seg) {
    Matrix x(seg.total, config_.model_dim);
    for (std::size_t b = 0; b < seg.count(); ++b) {
      x.block(seg.offset[b], 0, seg.length[b], config_.model_dim) =
          embed(table, std::span<const TokenId>(tokens).subspan(static_cast<std::size_t>(seg.offset[b]),
                                                                static_cast<std::size_t>(seg.length[b])),
                0);
    }
    return x;
  };

  Matrix x = embed_packed(src_embed(), f.src_tokens, f.src);
  f.src_mask = drop.apply(x);
  f.enc.resize(encoder_.size());
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const auto& L = encoder_[l];
    auto& c = f.enc[l];
    Matrix a = L.self_attn.forward(x, f.src, x, f.src, false, drop, c.att);
    c.m1 = drop.apply(a);
    Matrix x1 = L.ln1.forward(x + a, &c.ln1);
    Matrix ff = L.ffn.forward(x1, c.ffn);
    c.m2 = drop.apply(ff);
    x = L.ln2.forward(x1 + ff, &c.ln2);
  }
  f.memory = std::move(x);

  Matrix y = embed_packed(tgt_embed(), f.dec_inputs, f.tgt);
  f.tgt_mask = drop.apply(y);
  f.dec.resize(decoder_.size());
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& L = decoder_[l];
    auto& c = f.dec[l];
    Matrix a = L.self_attn.forward(y, f.tgt, y, f.tgt, true, drop, c.self);
    c.m1 = drop.apply(a);
    Matrix y1 = L.ln1.forward(y + a, &c.ln1);
    Matrix a2 = L.cross_attn.forward(y1, f.tgt, f.memory, f.src, false, drop, c.cross);
    c.m2 = drop.apply(a2);
    Matrix y2 = L.ln2.forward(y1 + a2, &c.ln2);
    Matrix ff = L.ffn.forward(y2, c.ffn);
    c.m3 = drop.apply(ff);
    y = L.ln3.forward(y2 + ff, &c.ln3);
  }
  f.hidden = std::move(y);
}

template <typename S>
LossStats Transformer<S>::forward_backward(std::span<const SequencePair> batch, std::mt19937_64* rng, bool backward) {
  LossStats stats;
  if (batch.empty()) return stats;
  Forward f;
  run_forward(f, batch, rng);

  const auto& out = out_embed();
  Matrix logits = f.hidden * out.value.transpose();
  logits.rowwise() += out_bias_.value.row(0);

  const Eigen::Index n = logits.rows();
  const Eigen::Index v = logits.cols();
  const S eps = S(config_.label_smoothing);
  const S uniform = eps / S(v);
  Matrix& probs = logits;  // reused in place
  for (Eigen::Index r = 0; r < n; ++r) {
    auto row = probs.row(r);
    const S mx = row.maxCoeff();
    const S lse = mx + std::log((row.array() - mx).exp().sum());
    const S logp_label = row(f.labels[static_cast<std::size_t>(r)]) - lse;
    const S sum_logp = row.sum() - S(v) * lse;
    stats.nll_sum += static_cast<double>(-logp_label);
    stats.loss_sum += static_cast<double>(-(S(1) - eps) * logp_label - uniform * sum_logp);
    row = (row.array() - lse).exp();
  }
  stats.tokens = static_cast<std::size_t>(n);
  if (!backward) return stats;

  // d(mean loss)/d(logits) = (softmax - smoothed target) / n
  Matrix& dlogits = probs;
  dlogits.array() -= uniform;
  for (Eigen::Index r = 0; r < n; ++r) dlogits(r, f.labels[static_cast<std::size_t>(r)]) -= (S(1) - eps);
  dlogits /= S(n);

  out_bias_.grad.row(0) += dlogits.colwise().sum();
  out_embed().grad.noalias() += dlogits.transpose() * f.hidden;
  Matrix dy = dlogits * out_embed().value;

  Matrix dmemory = Matrix::Zero(f.memory.rows(), f.memory.cols());
  for (std::size_t li = decoder_.size(); li-- > 0;) {
    auto& L = decoder_[li];
    auto& c = f.dec[li];
    Matrix dz3 = L.ln3.backward(dy, c.ln3);
    Matrix dff = dz3;
    nn::Dropout<S>::backward(dff, c.m3);
    Matrix dy2 = L.ffn.backward(dff, c.ffn) + dz3;
    Matrix dz2 = L.ln2.backward(dy2, c.ln2);
    Matrix da2 = dz2;
    nn::Dropout<S>::backward(da2, c.m2);
    Matrix dy1 = L.cross_attn.backward(da2, f.tgt, f.src, c.cross, dmemory) + dz2;
    Matrix dz1 = L.ln1.backward(dy1, c.ln1);
    Matrix da1 = dz1;
    nn::Dropout<S>::backward(da1, c.m1);
    Matrix dkv = Matrix::Zero(dz1.rows(), dz1.cols());
    dy = L.self_attn.backward(da1, f.tgt, f.tgt, c.self, dkv);
    dy += dkv;
    dy += dz1;
  }
  const S scale = S(std::sqrt(static_cast<double>(config_.model_dim)));
  nn::Dropout<S>::backward(dy, f.tgt_mask);
  auto& tgt_table = tgt_embed();
  for (std::size_t i = 0; i < f.dec_inputs.size(); ++i) {
    tgt_table.grad.row(f.dec_inputs[i]) += scale * dy.row(static_cast<Eigen::Index>(i));
  }

  Matrix dx = std::move(dmemory);
  for (std::size_t li = encoder_.size(); li-- > 0;) {
    auto& L = encoder_[li];
    auto& c = f.enc[li];
    Matrix dz2 = L.ln2.backward(dx, c.ln2);
    Matrix dff = dz2;
    nn::Dropout<S>::backward(dff, c.m2);
    Matrix dx1 = L.ffn.backward(dff, c.ffn) + dz2;
    Matrix dz1 = L.ln1.backward(dx1, c.ln1);
    Matrix da = dz1;
    nn::Dropout<S>::backward(da, c.m1);
    Matrix dkv = Matrix::Zero(dz1.rows(), dz1.cols());
    dx = L.self_attn.backward(da, f.src, f.src, c.att, dkv);
    dx += dkv;
    dx += dz1;
  }
  nn::Dropout<S>::backward(dx, f.src_mask);
  auto& src_table = src_embed();
  for (std::size_t i = 0; i < f.src_tokens.size(); ++i) {
    src_table.grad.row(f.src_tokens[i]) += scale * dx.row(static_cast<Eigen::Index>(i));
  }
  return stats;
}

template <typename S>
AttentionTraceT<S> Transformer<S>::attention(std::span<const TokenId> source, std::span<const TokenId> target) const {
  Forward f;
  const SequencePair pair{source, target};
  run_forward(f, std::span<const SequencePair>(&pair, 1), nullptr);
  AttentionTraceT<S> trace;
  trace.layers = config_.dec_layers;
  trace.heads = config_.heads;
  for (const auto& c : f.dec) {
    for (int h = 0; h < config_.heads; ++h) {
      trace.self_attn.push_back(c.self.probs[static_cast<std::size_t>(h)]);
      trace.cross_attn.push_back(c.cross.probs[static_cast<std::size_t>(h)]);
    }
  }
  return trace;
}

template <typename S>
typename Transformer<S>::EncodedSource Transformer<S>::encode(std::span<const TokenId> source) const {
  std::vector<TokenId> tokens(source.begin(), source.end());
  tokens.push_back(eos_id);
  if (static_cast<int>(tokens.size()) > config_.max_positions) {
    throw Error(ErrorKind::Config, "source longer than max_positions=" + std::to_string(config_.max_positions));
  }
  nn::Segments seg;
  seg.push(static_cast<Eigen::Index>(tokens.size()));
  const nn::Dropout<S> none(0.0, nullptr);
  Matrix x = embed(src_embed(), tokens, 0);
  for (const auto& L : encoder_) {
    nn::AttentionCache<S> cache;
    Matrix a = L.self_attn.forward(x, seg, x, seg, false, none, cache);
    Matrix x1 = L.ln1.forward(x + a, nullptr);
    nn::FeedForwardCache<S> fc;
    Matrix ff = L.ffn.forward(x1, fc);
    x = L.ln2.forward(x1 + ff, nullptr);
  }
  EncodedSource enc;
  enc.memory = std::move(x);
  for (const auto& L : decoder_) {
    enc.cross_keys.push_back(L.cross_attn.wk.forward(enc.memory));
    enc.cross_values.push_back(L.cross_attn.wv.forward(enc.memory));
  }
  return enc;
}

template <typename S>
typename Transformer<S>::DecoderState Transformer<S>::start(Eigen::Index max_steps) const {
  DecoderState st;
  const Eigen::Index rows = std::max<Eigen::Index>(1, std::min<Eigen::Index>(max_steps, config_.max_positions));
  st.keys.assign(decoder_.size(), Matrix(rows, config_.model_dim));
  st.values.assign(decoder_.size(), Matrix(rows, config_.model_dim));
  return st;
}

namespace {

template <typename S, typename Q, typename K, typename V>
nn::RowVector<S> attend_row(const Q& q, const K& keys, const V& values, int heads) {
  const Eigen::Index dim = q.cols();
  const Eigen::Index dh = dim / heads;
  const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
  nn::RowVector<S> ctx(dim);
  for (int h = 0; h < heads; ++h) {
    nn::RowVector<S> scores = (q.segment(h * dh, dh) * keys.middleCols(h * dh, dh).transpose()) * scale;
    const S mx = scores.maxCoeff();
    scores = (scores.array() - mx).exp();
    scores /= scores.sum();
    ctx.segment(h * dh, dh).noalias() = scores * values.middleCols(h * dh, dh);
  }
  return ctx;
}

}  // namespace

template <typename S>
typename Transformer<S>::RowVector Transformer<S>::step(const EncodedSource& src, DecoderState& st, TokenId token) const {
  if (st.length >= config_.max_positions) throw Error(ErrorKind::Runtime, "decoder exceeded max_positions");
  if (!decoder_.empty() && st.length >= st.keys.front().rows()) {
    const Eigen::Index grow = std::min<Eigen::Index>(config_.max_positions, st.keys.front().rows() * 2);
    for (auto& k : st.keys) k.conservativeResize(grow, Eigen::NoChange);
    for (auto& v : st.values) v.conservativeResize(grow, Eigen::NoChange);
  }
  const TokenId one[1] = {token};
  Matrix x = embed(tgt_embed(), one, st.length);
  const Eigen::Index t = st.length + 1;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& L = decoder_[l];
    st.keys[l].row(st.length) = L.self_attn.wk.forward_row(x.row(0));
    st.values[l].row(st.length) = L.self_attn.wv.forward_row(x.row(0));
    const RowVector q = L.self_attn.wq.forward_row(x.row(0));
    const RowVector ctx = attend_row<S>(q, st.keys[l].topRows(t), st.values[l].topRows(t), config_.heads);
    Matrix y1 = L.ln1.forward(x + L.self_attn.wo.forward_row(ctx), nullptr);
    const RowVector q2 = L.cross_attn.wq.forward_row(y1.row(0));
    const RowVector ctx2 = attend_row<S>(q2, src.cross_keys[l], src.cross_values[l], config_.heads);
    Matrix y2 = L.ln2.forward(y1 + L.cross_attn.wo.forward_row(ctx2), nullptr);
    const RowVector hidden = L.ffn.fc1.forward_row(y2.row(0)).cwiseMax(S(0));
    x = L.ln3.forward(y2 + L.ffn.fc2.forward_row(hidden), nullptr);
  }
  ++st.length;
  RowVector logits = x.row(0) * out_embed().value.transpose() + out_bias_.value.row(0);
  const S mx = logits.maxCoeff();
  const S lse = mx + std::log((logits.array() - mx).exp().sum());
  logits.array() -= lse;
  return logits;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace styleap
