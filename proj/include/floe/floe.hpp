#pragma once

// Umbrella header for the floe library: along-track sea-ice altimetry
// super-segments, LSTM/CNN sequence autoencoders, and UMAP projection.

#include "floe/autoencoder.hpp"
#include "floe/cluster.hpp"
#include "floe/config.hpp"
#include "floe/error.hpp"
#include "floe/gradcheck.hpp"
#include "floe/io.hpp"
#include "floe/knn.hpp"
#include "floe/layers.hpp"
#include "floe/metrics.hpp"
#include "floe/parallel.hpp"
#include "floe/rng.hpp"
#include "floe/supersegment.hpp"
#include "floe/svg.hpp"
#include "floe/synth.hpp"
#include "floe/tensor.hpp"
#include "floe/track.hpp"
#include "floe/train.hpp"
#include "floe/umap.hpp"
