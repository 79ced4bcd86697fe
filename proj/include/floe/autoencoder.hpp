#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/layers.hpp"
#include "floe/parallel.hpp"
#include "floe/rng.hpp"
#include "floe/supersegment.hpp"
#include "floe/tensor.hpp"

namespace floe {

enum class Arch : std::uint8_t { lstm = 0, cnn = 1 };

inline const char* arch_name(Arch a) { return a == Arch::lstm ? "lstm" : "cnn"; }

inline Arch arch_from_string(const std::string& s) {
  if (s == "lstm") return Arch::lstm;
  if (s == "cnn") return Arch::cnn;
  throw ConfigError("unknown architecture '" + s + "' (expected lstm or cnn)");
}

/// Architecture constants. Defaults are the production configuration:
/// encoder channels 32 then 64, a 16-wide bottleneck, decoder channels
/// 64 then 32, and a linear per-step output head.
struct ArchConfig {
  Arch arch = Arch::lstm;
  std::size_t seq_len = 11;
  std::size_t n_features = 4;
  std::size_t enc1 = 32;
  std::size_t enc2 = 64;
  std::size_t bottleneck = 16;
  std::size_t dec1 = 64;
  std::size_t dec2 = 32;
  std::size_t kernel = 3; // cnn layers only
  double dropout_p = 0.2;

  std::size_t input_size() const { return seq_len * n_features; }
};

/// Sequence autoencoder with an LSTM or 1-D CNN encoder/decoder.
///
/// Encoder: two recurrent or convolutional layers (tanh cells for LSTM,
/// ReLU for CNN), dropout after each, then one 16-vector per sample: the
/// LSTM path takes the final hidden state, the CNN path mean-pools over
/// time, and a linear dense layer maps to the bottleneck. Decoder: the
/// embedding is repeated across all time steps, passed through two more
/// layers with dropout, and a shared per-step linear head reconstructs the
/// four features.
class Autoencoder {
public:
  Autoencoder(const ArchConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    Rng rng(init_seed);
    if (cfg_.arch == Arch::lstm) {
      enc_lstm1_.init(params_, "enc1", cfg_.n_features, cfg_.enc1, rng);
      enc_lstm2_.init(params_, "enc2", cfg_.enc1, cfg_.enc2, rng);
      bottleneck_.init(params_, "bottleneck", cfg_.enc2, cfg_.bottleneck, rng);
      dec_lstm1_.init(params_, "dec1", cfg_.bottleneck, cfg_.dec1, rng);
      dec_lstm2_.init(params_, "dec2", cfg_.dec1, cfg_.dec2, rng);
    } else {
      enc_conv1_.init(params_, "enc1", cfg_.n_features, cfg_.enc1, cfg_.kernel, rng);
      enc_conv2_.init(params_, "enc2", cfg_.enc1, cfg_.enc2, cfg_.kernel, rng);
      bottleneck_.init(params_, "bottleneck", cfg_.enc2, cfg_.bottleneck, rng);
      dec_conv1_.init(params_, "dec1", cfg_.bottleneck, cfg_.dec1, cfg_.kernel, rng);
      dec_conv2_.init(params_, "dec2", cfg_.dec1, cfg_.dec2, cfg_.kernel, rng);
    }
    output_.init(params_, "out", cfg_.dec2, cfg_.n_features, rng);
  }

  struct Cache {
    bool training = false;
    LstmLayer::Cache el1, el2, dl1, dl2;
    Conv1dLayer::Cache ec1, ec2, dc1, dc2;
    std::vector<double> enc1_pre, enc2_pre, dec1_pre, dec2_pre; // cnn pre-activations
    std::vector<double> enc1_act, enc2_act, dec1_act, dec2_act; // post relu (cnn)
    std::vector<double> enc1_drop, enc2_drop, dec1_drop, dec2_drop;
    std::vector<double> mask_e1, mask_e2, mask_d1, mask_d2; // scaled dropout masks
    std::vector<double> pooled;  // encoder summary vector (enc2 wide)
    std::vector<double> embedding;
    std::vector<double> dec_in;  // T x bottleneck, repeated embedding
  };

  const ArchConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::size_t param_count() const { return params_.total_size(); }

  /// Full pass. `x` is a standardized seq_len x n_features sample; dropout
  /// is active only in training mode, driven by `dropout_seed`.
  void forward(const double* x, bool training, std::uint64_t dropout_seed, Cache& cache,
               double* reconstruction, double* embedding_out = nullptr) const {
    Rng rng(dropout_seed);
    forward_encoder(x, training, &rng, cache);
    forward_decoder(training, &rng, cache, reconstruction);
    if (embedding_out)
      std::copy(cache.embedding.begin(), cache.embedding.end(), embedding_out);
  }

  /// Inference-mode embedding extraction (encoder and bottleneck only).
  std::vector<double> encode(const double* x) const {
    Cache cache;
    forward_encoder(x, false, nullptr, cache);
    return cache.embedding;
  }

  /// Inference-mode reconstruction of a bottleneck vector (decoder only).
  std::vector<double> decode(const double* embedding) const {
    Cache cache;
    cache.embedding.assign(embedding, embedding + cfg_.bottleneck);
    std::vector<double> reconstruction(cfg_.input_size());
    forward_decoder(false, nullptr, cache, reconstruction.data());
    return reconstruction;
  }

  /// Accumulates parameter gradients for the cached forward pass into gbuf.
  /// `drecon` is the gradient of the loss w.r.t. the reconstruction.
  void backward(const Cache& cache, const double* drecon, std::vector<Tensor>& gbuf) const {
    const std::size_t T = cfg_.seq_len;

    // shared output head, accumulated across time steps
    std::vector<double> d_dec2_drop(T * cfg_.dec2, 0.0);
    const std::vector<double>& head_in = cache.dec2_drop;
    for (std::size_t t = 0; t < T; ++t)
      output_.backward(params_, head_in.data() + t * cfg_.dec2, drecon + t * cfg_.n_features,
                       d_dec2_drop.data() + t * cfg_.dec2, gbuf);

    std::vector<double> d_dec2(T * cfg_.dec2);
    dropout_backward(d_dec2_drop.data(), d_dec2_drop.size(), cache.mask_d2, d_dec2.data());

    std::vector<double> d_dec_in(T * cfg_.bottleneck, 0.0);
    if (cfg_.arch == Arch::lstm) {
      std::vector<double> d_dec1_drop(T * cfg_.dec1);
      dec_lstm2_.backward(params_, cache.dl2, d_dec2.data(), d_dec1_drop.data(), gbuf);
      std::vector<double> d_dec1(T * cfg_.dec1);
      dropout_backward(d_dec1_drop.data(), d_dec1_drop.size(), cache.mask_d1, d_dec1.data());
      dec_lstm1_.backward(params_, cache.dl1, d_dec1.data(), d_dec_in.data(), gbuf);
    } else {
      relu_backward(cache.dec2_pre, d_dec2);
      std::vector<double> d_dec1_drop(T * cfg_.dec1);
      dec_conv2_.backward(params_, cache.dc2, d_dec2.data(), d_dec1_drop.data(), gbuf);
      std::vector<double> d_dec1(T * cfg_.dec1);
      dropout_backward(d_dec1_drop.data(), d_dec1_drop.size(), cache.mask_d1, d_dec1.data());
      relu_backward(cache.dec1_pre, d_dec1);
      dec_conv1_.backward(params_, cache.dc1, d_dec1.data(), d_dec_in.data(), gbuf);
    }

    // repeated embedding: sum the per-step gradients
    std::vector<double> d_embedding(cfg_.bottleneck, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < cfg_.bottleneck; ++j)
        d_embedding[j] += d_dec_in[t * cfg_.bottleneck + j];

    std::vector<double> d_pooled(cfg_.enc2, 0.0);
    bottleneck_.backward(params_, cache.pooled.data(), d_embedding.data(), d_pooled.data(), gbuf);

    std::vector<double> d_enc2_drop(T * cfg_.enc2, 0.0);
    if (cfg_.arch == Arch::lstm) {
      // summary = final time step
      std::copy(d_pooled.begin(), d_pooled.end(), d_enc2_drop.data() + (T - 1) * cfg_.enc2);
    } else {
      // summary = mean pool
      const double inv = 1.0 / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < cfg_.enc2; ++j) d_enc2_drop[t * cfg_.enc2 + j] = d_pooled[j] * inv;
    }

    std::vector<double> d_enc2(T * cfg_.enc2);
    dropout_backward(d_enc2_drop.data(), d_enc2_drop.size(), cache.mask_e2, d_enc2.data());

    std::vector<double> d_input(T * cfg_.n_features); // discarded
    if (cfg_.arch == Arch::lstm) {
      std::vector<double> d_enc1_drop(T * cfg_.enc1);
      enc_lstm2_.backward(params_, cache.el2, d_enc2.data(), d_enc1_drop.data(), gbuf);
      std::vector<double> d_enc1(T * cfg_.enc1);
      dropout_backward(d_enc1_drop.data(), d_enc1_drop.size(), cache.mask_e1, d_enc1.data());
      enc_lstm1_.backward(params_, cache.el1, d_enc1.data(), d_input.data(), gbuf);
    } else {
      relu_backward(cache.enc2_pre, d_enc2);
      std::vector<double> d_enc1_drop(T * cfg_.enc1);
      enc_conv2_.backward(params_, cache.ec2, d_enc2.data(), d_enc1_drop.data(), gbuf);
      std::vector<double> d_enc1(T * cfg_.enc1);
      dropout_backward(d_enc1_drop.data(), d_enc1_drop.size(), cache.mask_e1, d_enc1.data());
      relu_backward(cache.enc1_pre, d_enc1);
      enc_conv1_.backward(params_, cache.ec1, d_enc1.data(), d_input.data(), gbuf);
    }
  }

  // The expected number of trainable scalars, from the architecture constants.
  static std::size_t expected_param_count(const ArchConfig& c) {
    auto lstm = [](std::size_t in, std::size_t H) { return 4 * H * (in + H) + 4 * H; };
    auto conv = [&](std::size_t in, std::size_t out) { return out * in * c.kernel + out; };
    auto dense = [](std::size_t in, std::size_t out) { return out * in + out; };
    std::size_t n = dense(c.enc2, c.bottleneck) + dense(c.dec2, c.n_features);
    if (c.arch == Arch::lstm)
      n += lstm(c.n_features, c.enc1) + lstm(c.enc1, c.enc2) + lstm(c.bottleneck, c.dec1) +
           lstm(c.dec1, c.dec2);
    else
      n += conv(c.n_features, c.enc1) + conv(c.enc1, c.enc2) + conv(c.bottleneck, c.dec1) +
           conv(c.dec1, c.dec2);
    return n;
  }

private:
  static void relu_forward(const std::vector<double>& pre, std::vector<double>& post) {
    post.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
  }

  static void relu_backward(const std::vector<double>& pre, std::vector<double>& d) {
    for (std::size_t i = 0; i < d.size(); ++i)
      if (pre[i] <= 0.0) d[i] = 0.0;
  }

  void forward_encoder(const double* x, bool training, Rng* rng, Cache& cache) const {
    const std::size_t T = cfg_.seq_len;
    cache.training = training;

    if (cfg_.arch == Arch::lstm) {
      enc_lstm1_.forward(params_, x, T, cache.el1);
      cache.enc1_drop.resize(T * cfg_.enc1);
      dropout_forward(cache.el1.h.data(), T * cfg_.enc1, cfg_.dropout_p, training, rng,
                      cache.mask_e1, cache.enc1_drop.data());
      enc_lstm2_.forward(params_, cache.enc1_drop.data(), T, cache.el2);
      cache.enc2_drop.resize(T * cfg_.enc2);
      dropout_forward(cache.el2.h.data(), T * cfg_.enc2, cfg_.dropout_p, training, rng,
                      cache.mask_e2, cache.enc2_drop.data());
      cache.pooled.assign(cache.enc2_drop.begin() + static_cast<std::ptrdiff_t>((T - 1) * cfg_.enc2),
                          cache.enc2_drop.end());
    } else {
      cache.enc1_pre.resize(T * cfg_.enc1);
      enc_conv1_.forward(params_, x, T, cache.ec1, cache.enc1_pre.data());
      relu_forward(cache.enc1_pre, cache.enc1_act);
      cache.enc1_drop.resize(T * cfg_.enc1);
      dropout_forward(cache.enc1_act.data(), T * cfg_.enc1, cfg_.dropout_p, training, rng,
                      cache.mask_e1, cache.enc1_drop.data());
      cache.enc2_pre.resize(T * cfg_.enc2);
      enc_conv2_.forward(params_, cache.enc1_drop.data(), T, cache.ec2, cache.enc2_pre.data());
      relu_forward(cache.enc2_pre, cache.enc2_act);
      cache.enc2_drop.resize(T * cfg_.enc2);
      dropout_forward(cache.enc2_act.data(), T * cfg_.enc2, cfg_.dropout_p, training, rng,
                      cache.mask_e2, cache.enc2_drop.data());
      cache.pooled.assign(cfg_.enc2, 0.0);
      const double inv = 1.0 / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < cfg_.enc2; ++j)
          cache.pooled[j] += cache.enc2_drop[t * cfg_.enc2 + j] * inv;
    }

    cache.embedding.resize(cfg_.bottleneck);
    bottleneck_.forward(params_, cache.pooled.data(), cache.embedding.data());
  }

  void forward_decoder(bool training, Rng* rng, Cache& cache, double* reconstruction) const {
    const std::size_t T = cfg_.seq_len;
    cache.dec_in.resize(T * cfg_.bottleneck);
    for (std::size_t t = 0; t < T; ++t)
      std::copy(cache.embedding.begin(), cache.embedding.end(),
                cache.dec_in.data() + t * cfg_.bottleneck);

    if (cfg_.arch == Arch::lstm) {
      dec_lstm1_.forward(params_, cache.dec_in.data(), T, cache.dl1);
      cache.dec1_drop.resize(T * cfg_.dec1);
      dropout_forward(cache.dl1.h.data(), T * cfg_.dec1, cfg_.dropout_p, training, rng,
                      cache.mask_d1, cache.dec1_drop.data());
      dec_lstm2_.forward(params_, cache.dec1_drop.data(), T, cache.dl2);
      cache.dec2_drop.resize(T * cfg_.dec2);
      dropout_forward(cache.dl2.h.data(), T * cfg_.dec2, cfg_.dropout_p, training, rng,
                      cache.mask_d2, cache.dec2_drop.data());
    } else {
      cache.dec1_pre.resize(T * cfg_.dec1);
      dec_conv1_.forward(params_, cache.dec_in.data(), T, cache.dc1, cache.dec1_pre.data());
      relu_forward(cache.dec1_pre, cache.dec1_act);
      cache.dec1_drop.resize(T * cfg_.dec1);
      dropout_forward(cache.dec1_act.data(), T * cfg_.dec1, cfg_.dropout_p, training, rng,
                      cache.mask_d1, cache.dec1_drop.data());
      cache.dec2_pre.resize(T * cfg_.dec2);
      dec_conv2_.forward(params_, cache.dec1_drop.data(), T, cache.dc2, cache.dec2_pre.data());
      relu_forward(cache.dec2_pre, cache.dec2_act);
      cache.dec2_drop.resize(T * cfg_.dec2);
      dropout_forward(cache.dec2_act.data(), T * cfg_.dec2, cfg_.dropout_p, training, rng,
                      cache.mask_d2, cache.dec2_drop.data());
    }

    for (std::size_t t = 0; t < T; ++t)
      output_.forward(params_, cache.dec2_drop.data() + t * cfg_.dec2,
                      reconstruction + t * cfg_.n_features);
  }

  ArchConfig cfg_;
  ParamSet params_;
  LstmLayer enc_lstm1_, enc_lstm2_, dec_lstm1_, dec_lstm2_;
  Conv1dLayer enc_conv1_, enc_conv2_, dec_conv1_, dec_conv2_;
  DenseLayer bottleneck_, output_;
};

/// N x bottleneck latent vectors with their sample provenance.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<std::string> track_ids;        // table, indexed by track_index
  std::vector<std::size_t> sample_index;     // position in the source set
  std::vector<std::uint32_t> track_index;    // per sample
  std::vector<double> center_distance;       // per sample
  std::vector<double> values;                // row-major N x dim

  std::size_t size() const { return track_index.size(); }
  const double* row(std::size_t i) const { return values.data() + i * dim; }
};

/// Encoder over a standardized set; one embedding row per sample.
inline EmbeddingMatrix embed_set(const Autoencoder& model, const SuperSegmentSet& set) {
  if (!set.standardized()) throw DataError("embed_set: set must be standardized");
  EmbeddingMatrix out;
  out.dim = model.config().bottleneck;
  out.track_ids = set.track_ids;
  out.sample_index.resize(set.size());
  out.track_index.resize(set.size());
  out.center_distance.resize(set.size());
  out.values.resize(set.size() * out.dim);
  parallel_for(set.size(), [&](std::size_t i) {
    out.sample_index[i] = i;
    out.track_index[i] = set.samples[i].track_index;
    out.center_distance[i] = set.samples[i].center_distance;
    const auto e = model.encode(set.samples[i].values.data());
    std::copy(e.begin(), e.end(), out.values.data() + i * out.dim);
  });
  return out;
}

inline void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingMatrix& em) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "sample_index,track_id,center_distance_m";
  for (std::size_t d = 0; d < em.dim; ++d) {
    char col[8];
    std::snprintf(col, sizeof(col), ",e%02zu", d);
    os << col;
  }
  os << '\n';
  for (std::size_t i = 0; i < em.size(); ++i) {
    os << em.sample_index[i] << ',' << em.track_ids[em.track_index[i]] << ','
       << fmt_double(em.center_distance[i]);
    for (std::size_t d = 0; d < em.dim; ++d) os << ',' << fmt_double(em.values[i * em.dim + d]);
    os << '\n';
  }
}

inline EmbeddingMatrix read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open embeddings file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty embeddings file: " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 4) throw DataError("embeddings file: bad header in " + path.string());

  EmbeddingMatrix em;
  em.dim = header.size() - 3;
  std::unordered_map<std::string, std::uint32_t> id_index;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw DataError("embeddings file: bad row in " + path.string());
    em.sample_index.push_back(static_cast<std::size_t>(std::strtoull(f[0].c_str(), nullptr, 10)));
    const std::string id = trim(f[1]);
    auto [it, inserted] = id_index.try_emplace(id, static_cast<std::uint32_t>(em.track_ids.size()));
    if (inserted) em.track_ids.push_back(id);
    em.track_index.push_back(it->second);
    double v;
    if (!parse_double(f[2], v)) throw DataError("embeddings file: bad distance in " + path.string());
    em.center_distance.push_back(v);
    for (std::size_t d = 0; d < em.dim; ++d) {
      if (!parse_double(f[3 + d], v))
        throw DataError("embeddings file: bad value in " + path.string());
      em.values.push_back(v);
    }
  }
  return em;
}

} // namespace floe
