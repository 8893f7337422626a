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
// Conditional affine coupling flow, applied frame-wise. The inverse pass
// strips speaker information out of a feature sequence into a content latent,
// conditioned on (speaker embedding, per-frame prosody); the forward pass
// rebuilds features from the latent with any embedding. Coupling layers keep
// alternating halves of each frame fixed, so inversion is exact by
// construction for any finite parameters.

#ifndef VOICECLOAK_SYNTHESIS_HPP_
#define VOICECLOAK_SYNTHESIS_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "voicecloak/corpus.hpp"
#include "voicecloak/embeddings.hpp"
#include "voicecloak/errors.hpp"
#include "voicecloak/perturbation.hpp"
#include "voicecloak/rng.hpp"

namespace voicecloak {

// One hidden tanh layer mapping [kept half; embedding; prosody_t] to
// [raw log-scale; shift] for the transformed half.
struct CouplingConditioner {
  Eigen::MatrixXd hidden_weight;
  Eigen::VectorXd hidden_bias;
  Eigen::MatrixXd output_weight;
  Eigen::VectorXd output_bias;
};

struct CouplingLayer {
  int keep_parity = 0;  // frame indices with i % 2 == keep_parity pass through
  CouplingConditioner net;
};

struct CouplingFlow {
  int feature_dim = 0;
  int embedding_dim = 0;
  std::vector<CouplingLayer> layers;
};

struct ContentLatent {
  Eigen::MatrixXd latent;  // T x D
  std::string source_utterance_id;
  std::string source_speaker_id;
};

namespace synthesis_detail {

constexpr double kLogScaleClamp = 5.0;

inline std::vector<int> kept_indices(int dim, int parity) {
  std::vector<int> ids;
  for (int i = 0; i < dim; ++i) {
    if (i % 2 == parity) ids.push_back(i);
  }
  return ids;
}

inline std::vector<int> transformed_indices(int dim, int parity) {
  std::vector<int> ids;
  for (int i = 0; i < dim; ++i) {
    if (i % 2 != parity) ids.push_back(i);
  }
  return ids;
}

// Conditioner forward pass; outputs clamped log-scale and shift, plus the
// intermediates needed for backprop.
struct ConditionerPass {
  Eigen::VectorXd cond;        // input vector
  Eigen::VectorXd hidden;      // post-tanh hidden activations
  Eigen::VectorXd raw_scale;   // pre-clamp log-scale
  Eigen::VectorXd log_scale;   // clamped
  Eigen::VectorXd shift;
};

inline ConditionerPass run_conditioner(const CouplingConditioner& net,
                                       const Eigen::VectorXd& kept,
                                       const Eigen::VectorXd& embedding,
                                       double prosody_value,
                                       int n_transformed) {
  ConditionerPass pass;
  pass.cond = Eigen::VectorXd(kept.size() + embedding.size() + 1);
  pass.cond << kept, embedding, prosody_value;
  pass.hidden =
      ((net.hidden_weight * pass.cond + net.hidden_bias).array().tanh())
          .matrix();
  Eigen::VectorXd out = net.output_weight * pass.hidden + net.output_bias;
  pass.raw_scale = out.head(n_transformed);
  pass.shift = out.tail(n_transformed);
  pass.log_scale = pass.raw_scale.array()
                       .min(kLogScaleClamp)
                       .max(-kLogScaleClamp)
                       .matrix();
  return pass;
}

}  // namespace synthesis_detail

inline CouplingFlow make_flow(int feature_dim, int embedding_dim, int n_layers,
                              int hidden_dim, std::uint64_t seed) {
  require(feature_dim >= 1 && embedding_dim >= 1, ErrorCode::kInvalidParameter,
          "flow dims must be >= 1");
  require(n_layers >= 1 && hidden_dim >= 1, ErrorCode::kInvalidParameter,
          "flow needs >= 1 layers and hidden units");
  Rng rng(seed);
  CouplingFlow flow;
  flow.feature_dim = feature_dim;
  flow.embedding_dim = embedding_dim;
  for (int l = 0; l < n_layers; ++l) {
    CouplingLayer layer;
    layer.keep_parity = l % 2;  // alternate so every coordinate gets moved
    const int n_kept = static_cast<int>(
        synthesis_detail::kept_indices(feature_dim, layer.keep_parity).size());
    const int n_trans = feature_dim - n_kept;
    const int cond_dim = n_kept + embedding_dim + 1;
    EncoderLayer hidden = init_layer(hidden_dim, cond_dim, rng);
    EncoderLayer output = init_layer(2 * n_trans, hidden_dim, rng);
    layer.net = {std::move(hidden.weight), std::move(hidden.bias),
                 std::move(output.weight), std::move(output.bias)};
    flow.layers.push_back(std::move(layer));
  }
  return flow;
}

// Latent frame -> feature frame: x_trans = z_trans * exp(s) + shift.
inline Eigen::VectorXd flow_forward_frame(const CouplingFlow& flow,
                                          const Eigen::VectorXd& latent_frame,
                                          const Eigen::VectorXd& embedding,
                                          double prosody_value) {
  using namespace synthesis_detail;
  Eigen::VectorXd v = latent_frame;
  for (const auto& layer : flow.layers) {
    const auto kept_ids = kept_indices(flow.feature_dim, layer.keep_parity);
    const auto trans_ids =
        transformed_indices(flow.feature_dim, layer.keep_parity);
    if (trans_ids.empty()) continue;
    Eigen::VectorXd kept(kept_ids.size());
    for (std::size_t i = 0; i < kept_ids.size(); ++i) kept[i] = v[kept_ids[i]];
    const ConditionerPass pass =
        run_conditioner(layer.net, kept, embedding, prosody_value,
                        static_cast<int>(trans_ids.size()));
    for (std::size_t i = 0; i < trans_ids.size(); ++i) {
      v[trans_ids[i]] =
          v[trans_ids[i]] * std::exp(pass.log_scale[i]) + pass.shift[i];
    }
  }
  return v;
}

// Feature frame -> latent frame: z_trans = (x_trans - shift) * exp(-s).
inline Eigen::VectorXd flow_inverse_frame(const CouplingFlow& flow,
                                          const Eigen::VectorXd& feature_frame,
                                          const Eigen::VectorXd& embedding,
                                          double prosody_value) {
  using namespace synthesis_detail;
  Eigen::VectorXd v = feature_frame;
  for (std::size_t l = flow.layers.size(); l-- > 0;) {
    const auto& layer = flow.layers[l];
    const auto kept_ids = kept_indices(flow.feature_dim, layer.keep_parity);
    const auto trans_ids =
        transformed_indices(flow.feature_dim, layer.keep_parity);
    if (trans_ids.empty()) continue;
    Eigen::VectorXd kept(kept_ids.size());
    for (std::size_t i = 0; i < kept_ids.size(); ++i) kept[i] = v[kept_ids[i]];
    const ConditionerPass pass =
        run_conditioner(layer.net, kept, embedding, prosody_value,
                        static_cast<int>(trans_ids.size()));
    for (std::size_t i = 0; i < trans_ids.size(); ++i) {
      v[trans_ids[i]] =
          (v[trans_ids[i]] - pass.shift[i]) * std::exp(-pass.log_scale[i]);
    }
  }
  return v;
}

inline void check_flow_inputs(const CouplingFlow& flow, int feature_dim,
                              const Eigen::VectorXd& embedding) {
  require(!flow.layers.empty(), ErrorCode::kInvalidParameter,
          "flow has no layers");
  require(feature_dim == flow.feature_dim, ErrorCode::kDimensionMismatch,
          "feature dim does not match flow");
  require(embedding.size() == flow.embedding_dim,
          ErrorCode::kDimensionMismatch,
          "embedding dim does not match flow");
}

inline ContentLatent disentangle(const CouplingFlow& flow,
                                 const FeatureSequence& utterance,
                                 const SpeakerEmbedding& embedding) {
  check_flow_inputs(flow, utterance.feature_dim(), embedding.vector);
  const int t_len = utterance.num_frames();
  ContentLatent content;
  content.latent = Eigen::MatrixXd(t_len, flow.feature_dim);
  for (int t = 0; t < t_len; ++t) {
    content.latent.row(t) =
        flow_inverse_frame(flow, utterance.frames.row(t).transpose(),
                           embedding.vector, utterance.prosody[t])
            .transpose();
  }
  require(content.latent.allFinite(), ErrorCode::kNonFiniteActivation,
          "content latent has non-finite values");
  content.source_utterance_id = utterance.utterance_id;
  content.source_speaker_id = utterance.speaker_id;
  return content;
}

inline FeatureSequence resynthesize(const CouplingFlow& flow,
                                    const ContentLatent& content,
                                    const Eigen::VectorXd& prosody,
                                    const SpeakerEmbedding& embedding) {
  check_flow_inputs(flow, static_cast<int>(content.latent.cols()),
                    embedding.vector);
  require(prosody.size() == content.latent.rows(),
          ErrorCode::kDimensionMismatch,
          "prosody length does not match content latent");
  const int t_len = static_cast<int>(content.latent.rows());
  FeatureSequence out;
  out.utterance_id = content.source_utterance_id;
  out.speaker_id = content.source_speaker_id;
  out.frames = Eigen::MatrixXd(t_len, flow.feature_dim);
  for (int t = 0; t < t_len; ++t) {
    out.frames.row(t) =
        flow_forward_frame(flow, content.latent.row(t).transpose(),
                           embedding.vector, prosody[t])
            .transpose();
  }
  out.prosody = prosody;
  return out;
}

// --- Likelihood training ----------------------------------------------------

struct FlowLayerGradients {
  Eigen::MatrixXd hidden_weight;
  Eigen::VectorXd hidden_bias;
  Eigen::MatrixXd output_weight;
  Eigen::VectorXd output_bias;
};

struct FlowGradients {
  std::vector<FlowLayerGradients> layers;

  static FlowGradients zeros_like(const CouplingFlow& flow) {
    FlowGradients grads;
    for (const auto& layer : flow.layers) {
      grads.layers.push_back(
          {Eigen::MatrixXd::Zero(layer.net.hidden_weight.rows(),
                                 layer.net.hidden_weight.cols()),
           Eigen::VectorXd::Zero(layer.net.hidden_bias.size()),
           Eigen::MatrixXd::Zero(layer.net.output_weight.rows(),
                                 layer.net.output_weight.cols()),
           Eigen::VectorXd::Zero(layer.net.output_bias.size())});
    }
    return grads;
  }
};

// Per-frame negative log-likelihood under a standard-normal latent,
// NLL = 0.5 ||z||^2 + 0.5 D ln(2 pi) + sum of log-scales seen on the inverse
// path. When grads is non-null, adds scale * d(NLL)/d(params), backpropagating
// through the whole inverse chain (kept halves feed later conditioners).
inline double accumulate_flow_nll_gradients(const CouplingFlow& flow,
                                            const Eigen::VectorXd& frame,
                                            const Eigen::VectorXd& embedding,
                                            double prosody_value, double scale,
                                            FlowGradients* grads) {
  using namespace synthesis_detail;
  check_flow_inputs(flow, static_cast<int>(frame.size()), embedding);
  const std::size_t n_layers = flow.layers.size();

  // Inverse pass, layer L-1 down to 0, recording what backprop needs.
  std::vector<ConditionerPass> passes(n_layers);
  std::vector<Eigen::VectorXd> out_trans(n_layers);  // transformed half after
  Eigen::VectorXd v = frame;
  double sum_log_scale = 0.0;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = flow.layers[l];
    const auto kept_ids = kept_indices(flow.feature_dim, layer.keep_parity);
    const auto trans_ids =
        transformed_indices(flow.feature_dim, layer.keep_parity);
    Eigen::VectorXd kept(kept_ids.size());
    for (std::size_t i = 0; i < kept_ids.size(); ++i) kept[i] = v[kept_ids[i]];
    passes[l] = run_conditioner(layer.net, kept, embedding, prosody_value,
                                static_cast<int>(trans_ids.size()));
    out_trans[l] = Eigen::VectorXd(trans_ids.size());
    for (std::size_t i = 0; i < trans_ids.size(); ++i) {
      out_trans[l][i] = (v[trans_ids[i]] - passes[l].shift[i]) *
                        std::exp(-passes[l].log_scale[i]);
      v[trans_ids[i]] = out_trans[l][i];
    }
    sum_log_scale += passes[l].log_scale.sum();
  }

  const double nll = 0.5 * v.squaredNorm() +
                     0.5 * flow.feature_dim * std::log(2.0 * std::numbers::pi) +
                     sum_log_scale;

  if (grads == nullptr) return nll;

  // Adjoint sweep in the opposite order (layer 0 up to L-1). g holds
  // d(NLL)/d(z_l) where z_l is the vector entering layer l's inverse output.
  Eigen::VectorXd g = v;  // d(0.5||z||^2)/dz
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = flow.layers[l];
    const auto kept_ids = kept_indices(flow.feature_dim, layer.keep_parity);
    const auto trans_ids =
        transformed_indices(flow.feature_dim, layer.keep_parity);
    const ConditionerPass& pass = passes[l];
    const int n_trans = static_cast<int>(trans_ids.size());

    Eigen::VectorXd g_out(n_trans);
    for (int i = 0; i < n_trans; ++i) g_out[i] = g[trans_ids[i]];

    const Eigen::VectorXd inv_scale =
        (-pass.log_scale.array()).exp().matrix();
    // z_trans = (x_trans - shift) * exp(-s); the log-det adds +1 per s entry.
    Eigen::VectorXd d_input_trans = g_out.cwiseProduct(inv_scale);
    Eigen::VectorXd d_shift = -d_input_trans;
    Eigen::VectorXd d_scale =
        Eigen::VectorXd::Ones(n_trans) - g_out.cwiseProduct(out_trans[l]);
    for (int i = 0; i < n_trans; ++i) {
      if (std::abs(pass.raw_scale[i]) >= kLogScaleClamp) d_scale[i] = 0.0;
    }

    Eigen::VectorXd d_out(2 * n_trans);
    d_out << d_scale, d_shift;

    auto& layer_grads = grads->layers[l];
    layer_grads.output_weight.noalias() +=
        scale * d_out * pass.hidden.transpose();
    layer_grads.output_bias += scale * d_out;
    Eigen::VectorXd d_hidden =
        (layer.net.output_weight.transpose() * d_out).array() *
        (1.0 - pass.hidden.array().square());
    layer_grads.hidden_weight.noalias() +=
        scale * d_hidden * pass.cond.transpose();
    layer_grads.hidden_bias += scale * d_hidden;
    const Eigen::VectorXd d_cond = layer.net.hidden_weight.transpose() * d_hidden;

    // d(NLL)/d(z_{l+1}): kept entries also fed the conditioner.
    for (std::size_t i = 0; i < kept_ids.size(); ++i) {
      g[kept_ids[i]] += d_cond[static_cast<Eigen::Index>(i)];
    }
    for (int i = 0; i < n_trans; ++i) g[trans_ids[i]] = d_input_trans[i];
  }
  return nll;
}

inline double flow_frame_nll(const CouplingFlow& flow,
                             const Eigen::VectorXd& frame,
                             const Eigen::VectorXd& embedding,
                             double prosody_value) {
  return accumulate_flow_nll_gradients(flow, frame, embedding, prosody_value,
                                       0.0, nullptr);
}

inline double mean_flow_nll(const CouplingFlow& flow,
                            const std::vector<const FeatureSequence*>& utts,
                            const std::vector<Eigen::VectorXd>& embeddings) {
  require(!utts.empty(), ErrorCode::kEmptyInput, "no utterances");
  require(utts.size() == embeddings.size(), ErrorCode::kDimensionMismatch,
          "embeddings do not match utterances");
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    for (int t = 0; t < utts[i]->num_frames(); ++t) {
      total += flow_frame_nll(flow, utts[i]->frames.row(t).transpose(),
                              embeddings[i], utts[i]->prosody[t]);
      ++frames;
    }
  }
  return total / static_cast<double>(frames);
}

struct FlowTrainParams {
  int n_layers = 4;
  int hidden_dim = 32;
  double learning_rate = 0.05;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 1;
};

// Maximizes mean frame log-likelihood on the head_train split by plain
// mini-batch gradient descent; the speaker encoder stays frozen and supplies
// the conditioning embeddings.
inline CouplingFlow train_flow(const Corpus& corpus,
                               const SpeakerEncoder& encoder,
                               const FlowTrainParams& params) {
  using namespace embeddings_detail;
  require(!corpus.utterances.empty(), ErrorCode::kDegenerateCorpus,
          "corpus has no utterances");
  check_sgd_params(params.learning_rate, params.epochs, params.batch_size);

  std::vector<const FeatureSequence*> train_utts;
  for (const auto& utt : corpus.utterances) {
    if (corpus.split_of(utt.utterance_id) == SplitTag::kHeadTrain) {
      train_utts.push_back(&utt);
    }
  }
  require(!train_utts.empty(), ErrorCode::kDegenerateCorpus,
          "corpus has no head_train utterances");

  std::vector<Eigen::VectorXd> embeddings;
  embeddings.reserve(train_utts.size());
  for (const auto* utt : train_utts) {
    embeddings.push_back(extract_embedding(encoder, *utt).vector);
  }

  CouplingFlow flow =
      make_flow(corpus.feature_dim, encoder.embedding_dim(), params.n_layers,
                params.hidden_dim, derive_seed(params.seed, kStreamInit));

  Rng order_rng(derive_seed(params.seed, kStreamOrder));
  const std::size_t n = train_utts.size();
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const auto order = epoch_order(n, order_rng);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(params.batch_size));
      std::size_t batch_frames = 0;
      for (std::size_t i = start; i < stop; ++i) {
        batch_frames +=
            static_cast<std::size_t>(train_utts[order[i]]->num_frames());
      }
      FlowGradients grads = FlowGradients::zeros_like(flow);
      const double scale = 1.0 / static_cast<double>(batch_frames);
      for (std::size_t i = start; i < stop; ++i) {
        const auto* utt = train_utts[order[i]];
        for (int t = 0; t < utt->num_frames(); ++t) {
          accumulate_flow_nll_gradients(flow, utt->frames.row(t).transpose(),
                                        embeddings[order[i]], utt->prosody[t],
                                        scale, &grads);
        }
      }
      for (std::size_t l = 0; l < flow.layers.size(); ++l) {
        auto& net = flow.layers[l].net;
        net.hidden_weight -= params.learning_rate * grads.layers[l].hidden_weight;
        net.hidden_bias -= params.learning_rate * grads.layers[l].hidden_bias;
        net.output_weight -= params.learning_rate * grads.layers[l].output_weight;
        net.output_bias -= params.learning_rate * grads.layers[l].output_bias;
      }
    }
  }
  return flow;
}

// --- End-to-end anonymization ----------------------------------------------

struct AnonymizationResult {
  FeatureSequence protected_features;
  FeatureSequence regenerated_features;
  SpeakerEmbedding clean_embedding;
  SpeakerEmbedding perturbed_embedding;
  ContentLatent content;  // shared by both output paths
};

// Disentangles content once, then resynthesizes twice: with the clean
// embedding (regenerated) and with the attacked embedding (protected). The
// prosody track passes through untouched.
inline AnonymizationResult anonymize_utterance(const SpeakerEncoder& encoder,
                                               const SoftmaxHead& head,
                                               const CouplingFlow& flow,
                                               const FeatureSequence& utterance,
                                               const PerturbationConfig& config) {
  const int class_idx = head.class_index(utterance.speaker_id);
  require(class_idx >= 0, ErrorCode::kUnknownSpeaker,
          "utterance speaker not among head classes: " + utterance.speaker_id);

  AnonymizationResult result;
  result.clean_embedding = extract_embedding(encoder, utterance);
  result.content = disentangle(flow, utterance, result.clean_embedding);
  result.regenerated_features = resynthesize(
      flow, result.content, utterance.prosody, result.clean_embedding);
  const LabelVector label = one_hot_label(class_idx, head.num_classes());
  result.perturbed_embedding =
      attack(head, result.clean_embedding, label, config);
  result.protected_features = resynthesize(
      flow, result.content, utterance.prosody, result.perturbed_embedding);
  return result;
}

}  // namespace voicecloak

#endif  // VOICECLOAK_SYNTHESIS_HPP_
