#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "floe/autoencoder.hpp"
#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/parallel.hpp"
#include "floe/rng.hpp"
#include "floe/supersegment.hpp"
#include "floe/tensor.hpp"

namespace floe {

struct TrainConfig {
  std::size_t max_epochs = 1000;
  std::size_t batch_size = 1024;
  std::size_t patience = 20;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs == 0 || batch_size == 0 || patience == 0)
      throw ConfigError("train config: max_epochs, batch_size and patience must be positive");
    if (patience >= max_epochs) throw ConfigError("train config: patience must be below max_epochs");
    if (!(learning_rate > 0) || !(beta1 > 0) || !(beta2 > 0) || !(epsilon > 0))
      throw ConfigError("train config: rates and moments must be positive");
  }
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

inline AdamState make_adam_state(const ParamSet& ps) {
  AdamState st;
  st.m = make_grad_buffer(ps);
  st.v = make_grad_buffer(ps);
  return st;
}

enum class StopReason : std::uint8_t { early_stop, max_epochs };

struct TrainReport {
  std::vector<double> train_loss; // per epoch, mean over samples as trained
  std::vector<double> val_loss;   // per epoch, inference mode
  std::size_t best_epoch = 0;     // index into the loss vectors
  double best_val_loss = 0.0;
  StopReason stop_reason = StopReason::max_epochs;
};

/// Mean squared error over all entries of equally shaped arrays.
inline double mse_loss(const double* pred, const double* target, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

inline double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw DataError("mse_loss: shape mismatch");
  return mse_loss(pred.data(), target.data(), pred.size());
}

// d(mse)/d(pred) scaled by `scale` (1/batch for batch means)
inline void mse_grad(const double* pred, const double* target, std::size_t n, double scale,
                     double* dpred) {
  const double c = 2.0 * scale / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) dpred[i] = c * (pred[i] - target[i]);
}

/// One Adam update from the gradients accumulated in `ps`. The step counter
/// is incremented before the bias-corrected update.
inline void adam_step(ParamSet& ps, AdamState& state, const TrainConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < ps.size(); ++p) {
    auto& e = ps[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double g = e.grad[i];
      if (!std::isfinite(g))
        throw Error("adam_step: non-finite gradient in parameter '" + e.name + "'");
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

namespace detail {

// Mean inference-mode loss over a set; chunk partials are reduced in fixed
// chunk order so the result does not depend on the thread count.
inline double evaluate_loss(const Autoencoder& model, const SuperSegmentSet& set) {
  const std::size_t n = set.size();
  std::vector<double> partial(kReductionChunks, 0.0);
  parallel_chunks(n, kReductionChunks, [&](std::size_t chunk, std::size_t b, std::size_t e) {
    Autoencoder::Cache cache;
    std::vector<double> recon(model.config().input_size());
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      model.forward(set.samples[i].values.data(), false, 0, cache, recon.data());
      acc += mse_loss(recon.data(), set.samples[i].values.data(), recon.size());
    }
    partial[chunk] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n);
}

} // namespace detail

/// Trains an autoencoder on the standardized train split, monitoring the
/// validation split each epoch. Stops when validation loss has not improved
/// for `patience` consecutive epochs or at `max_epochs`, and always returns
/// the weights of the best-validation epoch.
inline std::pair<std::unique_ptr<Autoencoder>, TrainReport> fit(const SuperSegmentSet& train_set,
                                                                const SuperSegmentSet& val_set,
                                                                const ArchConfig& arch,
                                                                const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.samples.empty()) throw DataError("fit: empty train split");
  if (val_set.samples.empty()) throw DataError("fit: empty validation split");
  if (!train_set.standardized() || !val_set.standardized())
    throw DataError("fit: splits must be standardized with train statistics");

  auto model = std::make_unique<Autoencoder>(arch, derive_seed(cfg.seed, 0));
  AdamState adam = make_adam_state(model->params());
  Rng shuffle_rng(derive_seed(cfg.seed, 1));

  const std::size_t n = train_set.size();
  const std::size_t sample_size = arch.input_size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // per-chunk gradient sinks, reduced in chunk order
  std::vector<std::vector<Tensor>> chunk_grads(kReductionChunks);
  for (auto& g : chunk_grads) g = make_grad_buffer(model->params());

  TrainReport report;
  std::vector<Tensor> best_values = model->params().snapshot_values();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsize = std::min(cfg.batch_size, n - start);
      const double scale = 1.0 / static_cast<double>(bsize);

      std::vector<double> chunk_loss(kReductionChunks, 0.0);
      parallel_chunks(bsize, kReductionChunks, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        auto& gbuf = chunk_grads[chunk];
        zero_grad_buffer(gbuf);
        Autoencoder::Cache cache;
        std::vector<double> recon(sample_size), drecon(sample_size);
        double acc = 0.0;
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t idx = order[start + k];
          const double* x = train_set.samples[idx].values.data();
          const std::uint64_t dropout_seed = derive_seed(cfg.seed, 2 + epoch, start + k);
          model->forward(x, true, dropout_seed, cache, recon.data());
          acc += mse_loss(recon.data(), x, sample_size);
          mse_grad(recon.data(), x, sample_size, scale, drecon.data());
          model->backward(cache, drecon.data(), gbuf);
        }
        chunk_loss[chunk] = acc;
      });

      model->params().zero_grads();
      auto& ps = model->params();
      // only chunks that ran this batch were re-zeroed; never touch the rest
      const std::size_t chunks_run = std::min(kReductionChunks, bsize);
      for (std::size_t chunk = 0; chunk < chunks_run; ++chunk)
        for (std::size_t p = 0; p < ps.size(); ++p)
          for (std::size_t i = 0; i < ps[p].grad.numel(); ++i)
            ps[p].grad[i] += chunk_grads[chunk][p][i];

      double batch_loss = 0.0;
      for (double l : chunk_loss) batch_loss += l;
      if (!std::isfinite(batch_loss))
        throw Error("fit: training diverged at epoch " + std::to_string(epoch));
      epoch_loss_sum += batch_loss;

      adam_step(ps, adam, cfg);
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(n);
    const double val_loss = detail::evaluate_loss(*model, val_set);
    if (!std::isfinite(val_loss))
      throw Error("fit: validation loss diverged at epoch " + std::to_string(epoch));
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      report.best_epoch = epoch;
      best_values = model->params().snapshot_values();
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.patience) {
        report.stop_reason = StopReason::early_stop;
        break;
      }
    }
  }
  model->params().restore_values(best_values);
  report.best_val_loss = best_val;
  return {std::move(model), std::move(report)};
}

// ---- model file ("AEWT") ----
//
// magic "AEWT", u32 version = 1, little-endian; u8 arch tag (0 = LSTM,
// 1 = CNN); u32 kernel, seq_len, n_features; u8 channel count = 5 then u32
// channels enc1, enc2, bottleneck, dec1, dec2; f64 dropout_p; feature stats
// as 8 f64 (means then stds); u32 block count; per block u16 name length,
// name bytes, u8 ndim, u32 dims, then f32 data.

inline void save_model(const Autoencoder& model, const FeatureStats& stats,
                       const std::filesystem::path& path) {
  auto os = open_binary_out(path);
  const ArchConfig& c = model.config();
  write_bytes(os, "AEWT", 4);
  write_u32(os, 1);
  write_u8(os, static_cast<std::uint8_t>(c.arch));
  write_u32(os, static_cast<std::uint32_t>(c.kernel));
  write_u32(os, static_cast<std::uint32_t>(c.seq_len));
  write_u32(os, static_cast<std::uint32_t>(c.n_features));
  write_u8(os, 5);
  for (std::size_t ch : {c.enc1, c.enc2, c.bottleneck, c.dec1, c.dec2})
    write_u32(os, static_cast<std::uint32_t>(ch));
  write_f64(os, c.dropout_p);
  for (double v : stats.mean) write_f64(os, v);
  for (double v : stats.stddev) write_f64(os, v);

  const ParamSet& ps = model.params();
  write_u32(os, static_cast<std::uint32_t>(ps.size()));
  for (std::size_t p = 0; p < ps.size(); ++p) {
    const auto& e = ps[p];
    write_u16(os, static_cast<std::uint16_t>(e.name.size()));
    write_bytes(os, e.name.data(), e.name.size());
    write_u8(os, static_cast<std::uint8_t>(e.value.dims.size()));
    for (std::size_t d : e.value.dims) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : e.value.data) write_f32(os, static_cast<float>(v));
  }
}

inline std::pair<std::unique_ptr<Autoencoder>, FeatureStats> load_model(
    const std::filesystem::path& path) {
  auto is = open_binary_in(path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::string_view(magic, 4) != "AEWT") throw IoError("not a model file: " + path.string());
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw IoError("unsupported model version " + std::to_string(version));

  ArchConfig c;
  const std::uint8_t tag = read_u8(is);
  if (tag > 1) throw IoError("unknown architecture tag in " + path.string());
  c.arch = static_cast<Arch>(tag);
  c.kernel = read_u32(is);
  c.seq_len = read_u32(is);
  c.n_features = read_u32(is);
  const std::uint8_t nch = read_u8(is);
  if (nch != 5) throw IoError("unexpected channel count in " + path.string());
  c.enc1 = read_u32(is);
  c.enc2 = read_u32(is);
  c.bottleneck = read_u32(is);
  c.dec1 = read_u32(is);
  c.dec2 = read_u32(is);
  c.dropout_p = read_f64(is);

  FeatureStats stats;
  for (double& v : stats.mean) v = read_f64(is);
  for (double& v : stats.stddev) v = read_f64(is);

  auto model = std::make_unique<Autoencoder>(c, 0);
  ParamSet& ps = model->params();
  const std::uint32_t blocks = read_u32(is);
  if (blocks != ps.size())
    throw IoError("model file has " + std::to_string(blocks) + " parameter blocks, expected " +
                  std::to_string(ps.size()));
  for (std::uint32_t bi = 0; bi < blocks; ++bi) {
    const std::uint16_t name_len = read_u16(is);
    std::string name(name_len, '\0');
    read_bytes(is, name.data(), name_len);
    auto& e = ps.at(name);
    const std::uint8_t ndim = read_u8(is);
    if (ndim != e.value.dims.size()) throw IoError("parameter '" + name + "' rank mismatch");
    for (std::size_t d = 0; d < ndim; ++d)
      if (read_u32(is) != e.value.dims[d]) throw IoError("parameter '" + name + "' shape mismatch");
    for (double& v : e.value.data) v = static_cast<double>(read_f32(is));
  }
  return {std::move(model), stats};
}

inline void write_train_report_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e)
    os << e << ',' << fmt_double(report.train_loss[e]) << ',' << fmt_double(report.val_loss[e]) << '\n';
}

} // namespace floe
