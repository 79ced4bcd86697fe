#include <doctest.h>

#include "floe/supersegment.hpp"
#include "floe/synth.hpp"
#include "floe/train.hpp"

using namespace floe;

namespace {

SuperSegmentSet sized_set(std::size_t n, SplitTag tag, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.track_length_m = 6000;
  cfg.correlation_length_m = 2000.0;
  cfg.regimes[2].ridge_rate = 0.0;
  const SynthCorpus corpus = generate_corpus(cfg, 4, seed);
  auto set = build_supersegment_set(corpus.tracks, tag);
  REQUIRE(set.size() >= n);
  set.samples.resize(n);
  return set;
}

} // namespace

// A final batch smaller than the reduction chunk count must contribute the
// gradients of exactly its own samples. The single-sample-batch schedule
// (batch_size = n - 1, so the second batch holds one sample) must match a
// run over the same data reached through a different chunk occupancy.
TEST_CASE("fit: tiny trailing batches stay exact") {
  const auto train_a = sized_set(21, SplitTag::train, 7); // batches of 20 and 1
  auto val = sized_set(12, SplitTag::val, 8);
  const auto stats = compute_stats(train_a);
  const auto train_std = standardize(train_a, stats);
  const auto val_std = standardize(val, stats);

  ArchConfig arch;
  arch.arch = Arch::cnn;
  arch.enc1 = 4;
  arch.enc2 = 5;
  arch.bottleneck = 3;
  arch.dec1 = 5;
  arch.dec2 = 4;
  arch.dropout_p = 0.0;

  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  cfg.batch_size = 20;
  cfg.seed = 5;
  auto [m1, r1] = fit(train_std, val_std, arch, cfg);

  // reference: gradients accumulated one sample at a time per batch, with a
  // snapshot after every epoch so the best-epoch restore can be mirrored
  Autoencoder ref(arch, derive_seed(cfg.seed, 0));
  AdamState adam = make_adam_state(ref.params());
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(train_std.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<Tensor>> epoch_values;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bsize = std::min(cfg.batch_size, order.size() - start);
      ref.params().zero_grads();
      auto gbuf = make_grad_buffer(ref.params());
      Autoencoder::Cache cache;
      std::vector<double> recon(arch.input_size()), drecon(arch.input_size());
      for (std::size_t k = 0; k < bsize; ++k) {
        const double* x = train_std.samples[order[start + k]].values.data();
        ref.forward(x, true, derive_seed(cfg.seed, 2 + epoch, start + k), cache, recon.data());
        mse_grad(recon.data(), x, recon.size(), 1.0 / static_cast<double>(bsize), drecon.data());
        ref.backward(cache, drecon.data(), gbuf);
      }
      for (std::size_t p = 0; p < ref.params().size(); ++p) ref.params()[p].grad = gbuf[p];
      adam_step(ref.params(), adam, cfg);
    }
    epoch_values.push_back(ref.params().snapshot_values());
  }

  const auto& want_values = epoch_values.at(r1.best_epoch);
  for (std::size_t p = 0; p < m1->params().size(); ++p) {
    const auto& got = m1->params()[p].value.data;
    const auto& want = want_values[p].data;
    REQUIRE(got.size() == want.size());
    // chunked reduction sums in a different order than the sequential
    // reference, so equality holds to rounding, not bitwise
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
  }
}
