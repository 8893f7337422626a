// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Single-step gradient-sign attack on a speaker embedding: the cross-entropy
// gradient with respect to the embedding is taken in closed form, its
// elementwise sign gives the perturbation direction, and the attacked
// embedding is x + epsilon * sign. Every operation here is a pure function.

#ifndef VOICECLOAK_PERTURBATION_HPP_
#define VOICECLOAK_PERTURBATION_HPP_

#include <Eigen/Dense>
#include <cmath>

#include "voicecloak/embeddings.hpp"
#include "voicecloak/errors.hpp"

namespace voicecloak {

struct PerturbationConfig {
  double epsilon = 0.02;  // attack intensity, >= 0
};

struct PerturbationDirection {
  Eigen::VectorXd signs;  // entries in {-1, 0, +1}
};

// d(CE)/d(embedding) = W^T (y - t) for the affine + softmax head.
inline Eigen::VectorXd grad_ce_wrt_embedding(const SoftmaxHead& head,
                                             const SpeakerEmbedding& embedding,
                                             const LabelVector& label) {
  require(label.one_hot.size() == head.num_classes(),
          ErrorCode::kDimensionMismatch, "label length does not match head");
  label_class(label);  // rejects anything that is not a valid one-hot label
  const Posterior posterior = predict(head, embedding);
  const Eigen::VectorXd residual = posterior.probabilities - label.one_hot;
  return head.weights.transpose() * residual;
}

// Elementwise sign with sign(0) = 0.
inline PerturbationDirection fgsm_direction(const Eigen::VectorXd& gradient) {
  require(gradient.allFinite(), ErrorCode::kNonFiniteInput,
          "gradient has non-finite entries");
  PerturbationDirection direction;
  direction.signs = Eigen::VectorXd(gradient.size());
  for (int i = 0; i < gradient.size(); ++i) {
    direction.signs[i] =
        gradient[i] > 0.0 ? 1.0 : (gradient[i] < 0.0 ? -1.0 : 0.0);
  }
  return direction;
}

inline SpeakerEmbedding perturb_embedding(const SpeakerEmbedding& embedding,
                                          const PerturbationDirection& direction,
                                          const PerturbationConfig& config) {
  require(config.epsilon >= 0.0, ErrorCode::kInvalidParameter,
          "epsilon must be >= 0");
  require(direction.signs.size() == embedding.vector.size(),
          ErrorCode::kDimensionMismatch,
          "direction length does not match embedding");
  SpeakerEmbedding attacked;
  // epsilon == 0 must be a bit-exact identity; x + 0.0 * s would still flip
  // the sign bit of negative zeros.
  attacked.vector = config.epsilon == 0.0
                        ? embedding.vector
                        : (embedding.vector + config.epsilon * direction.signs)
                              .eval();
  attacked.source_utterance_id = embedding.source_utterance_id;
  return attacked;
}

inline SpeakerEmbedding attack(const SoftmaxHead& head,
                               const SpeakerEmbedding& embedding,
                               const LabelVector& label,
                               const PerturbationConfig& config) {
  return perturb_embedding(
      embedding, fgsm_direction(grad_ce_wrt_embedding(head, embedding, label)),
      config);
}

}  // namespace voicecloak

#endif  // VOICECLOAK_PERTURBATION_HPP_
