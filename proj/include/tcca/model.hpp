#pragma once

#include <memory>
#include <vector>

#include "tcca/config.hpp"

namespace tcca {

// Encoder, decoder and (when enabled) the CRF transition matrix, with all
// parameters in one store.
struct Model {
  RunConfig config;
  int classes = 0;
  int feature_dim = 0;
  ad::ParamStore store;
  std::unique_ptr<Encoder> encoder;
  std::unique_ptr<Decoder> decoder;
  int transitions = -1;  // parameter id, -1 without CRF

  bool has_crf() const { return transitions >= 0; }
  bool set_mode() const { return config.decoder.set_head; }
  const Matrix& transition_matrix() const;
};

// `corpus` holds the future label sequences used by the precomputed
// transition initialization; it is ignored for random init or without CRF.
Model build_model(const RunConfig& config, int classes, int feature_dim,
                  const std::vector<std::vector<int>>& corpus);

}  // namespace tcca
