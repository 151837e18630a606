#include "tcca/model.hpp"

namespace tcca {

const Matrix& Model::transition_matrix() const {
  if (!has_crf()) throw InvalidArgument("model has no CRF transition matrix");
  return store.value(transitions);
}

Model build_model(const RunConfig& config, int classes, int feature_dim,
                  const std::vector<std::vector<int>>& corpus) {
  config.validate();
  Model model;
  model.config = config;
  model.classes = classes;
  model.feature_dim = feature_dim;

  Rng rng(derive_seed(config.train.seed, 0x30DE1));
  model.encoder = std::make_unique<Encoder>(model.store, config.encoder, feature_dim, classes, rng);
  model.decoder =
      std::make_unique<Decoder>(model.store, config.decoder, config.encoder.stages * classes, classes, rng);

  if (config.train.use_crf) {
    const TransitionMatrix init = config.crf.init == CrfConfig::Init::precomputed
                                      ? init_transitions_precomputed(corpus, classes)
                                      : init_transitions_random(config.train.seed, classes);
    model.transitions = model.store.add("crf.transitions", init.m);
    model.store.set_mask(model.transitions, TransitionMatrix::learnable_mask(classes));
  }
  return model;
}

}  // namespace tcca
