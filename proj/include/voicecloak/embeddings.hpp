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
// Discriminative speaker embeddings: an MLP applied per frame (tanh on all
// layers except the last), mean-pooled over time, with an affine + softmax
// classification head trained by cross-entropy. All parameters are f64 and
// every training loop is deterministic for a fixed seed.

#ifndef VOICECLOAK_EMBEDDINGS_HPP_
#define VOICECLOAK_EMBEDDINGS_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "voicecloak/corpus.hpp"
#include "voicecloak/errors.hpp"
#include "voicecloak/rng.hpp"

namespace voicecloak {

struct EncoderLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct SpeakerEncoder {
  // Frame transform layers; tanh after every layer except the last.
  std::vector<EncoderLayer> layers;

  int input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
  }
  int embedding_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
  }
};

struct SpeakerEmbedding {
  Eigen::VectorXd vector;
  std::string source_utterance_id;
};

struct SoftmaxHead {
  Eigen::MatrixXd weights;  // C x E
  Eigen::VectorXd bias;     // C
  std::vector<std::string> class_labels;

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int embedding_dim() const { return static_cast<int>(weights.cols()); }

  int class_index(const std::string& label) const {
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
      if (class_labels[i] == label) return static_cast<int>(i);
    }
    return -1;
  }
};

struct Posterior {
  Eigen::VectorXd probabilities;
};

struct LabelVector {
  Eigen::VectorXd one_hot;
};

inline LabelVector one_hot_label(int class_index, int num_classes) {
  require(num_classes >= 1 && class_index >= 0 && class_index < num_classes,
          ErrorCode::kInvalidParameter, "label index out of range");
  LabelVector label;
  label.one_hot = Eigen::VectorXd::Zero(num_classes);
  label.one_hot[class_index] = 1.0;
  return label;
}

// Index of the single 1 in a one-hot label.
inline int label_class(const LabelVector& label) {
  int found = -1;
  for (int i = 0; i < label.one_hot.size(); ++i) {
    const double v = label.one_hot[i];
    if (v == 1.0) {
      if (found >= 0) fail(ErrorCode::kUnknownLabel, "multiple label entries set");
      found = i;
    } else if (v != 0.0) {
      fail(ErrorCode::kUnknownLabel, "label entries must be 0 or 1");
    }
  }
  if (found < 0) fail(ErrorCode::kUnknownLabel, "label names no class");
  return found;
}

// --- Initialization ---------------------------------------------------------

// Uniform in [-a, a] with a = 1/sqrt(fan_in); weights row-major, then bias.
inline EncoderLayer init_layer(int rows, int cols, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(cols));
  EncoderLayer layer;
  layer.weight = Eigen::MatrixXd(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) layer.weight(r, c) = rng.uniform(-a, a);
  }
  layer.bias = Eigen::VectorXd(rows);
  for (int r = 0; r < rows; ++r) layer.bias[r] = rng.uniform(-a, a);
  return layer;
}

inline SpeakerEncoder make_encoder(int input_dim, int hidden_dim,
                                   int embedding_dim, std::uint64_t seed) {
  require(input_dim >= 1 && hidden_dim >= 1 && embedding_dim >= 1,
          ErrorCode::kInvalidParameter, "encoder dims must be >= 1");
  Rng rng(seed);
  SpeakerEncoder encoder;
  encoder.layers.push_back(init_layer(hidden_dim, input_dim, rng));
  encoder.layers.push_back(init_layer(hidden_dim, hidden_dim, rng));
  encoder.layers.push_back(init_layer(embedding_dim, hidden_dim, rng));
  return encoder;
}

inline SoftmaxHead make_head(const std::vector<std::string>& class_labels,
                             int embedding_dim, std::uint64_t seed) {
  require(class_labels.size() >= 2, ErrorCode::kInvalidParameter,
          "a softmax head needs at least two classes");
  Rng rng(seed);
  EncoderLayer affine =
      init_layer(static_cast<int>(class_labels.size()), embedding_dim, rng);
  SoftmaxHead head;
  head.weights = std::move(affine.weight);
  head.bias = std::move(affine.bias);
  head.class_labels = class_labels;
  return head;
}

// --- Forward operations -----------------------------------------------------

inline Eigen::VectorXd transform_frame(const SpeakerEncoder& encoder,
                                       const Eigen::VectorXd& frame) {
  Eigen::VectorXd h = frame;
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    h = encoder.layers[l].weight * h + encoder.layers[l].bias;
    if (l + 1 < encoder.layers.size()) h = h.array().tanh().matrix();
  }
  return h;
}

inline SpeakerEmbedding extract_embedding(const SpeakerEncoder& encoder,
                                          const FeatureSequence& utterance) {
  require(!encoder.layers.empty(), ErrorCode::kInvalidParameter,
          "encoder has no layers");
  require(utterance.feature_dim() == encoder.input_dim(),
          ErrorCode::kDimensionMismatch,
          "utterance feature dim does not match encoder input dim");
  require(utterance.num_frames() >= 1, ErrorCode::kDimensionMismatch,
          "utterance has no frames");

  const int t_len = utterance.num_frames();
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(encoder.embedding_dim());
  for (int t = 0; t < t_len; ++t) {
    pooled += transform_frame(encoder, utterance.frames.row(t).transpose());
  }
  SpeakerEmbedding embedding;
  embedding.vector = pooled / static_cast<double>(t_len);
  embedding.source_utterance_id = utterance.utterance_id;
  return embedding;
}

// softmax(Wx + b) with max-subtraction so large logits cannot overflow.
inline Posterior predict(const SoftmaxHead& head,
                         const SpeakerEmbedding& embedding) {
  require(embedding.vector.size() == head.embedding_dim(),
          ErrorCode::kDimensionMismatch,
          "embedding dim does not match head");
  Eigen::VectorXd logits = head.weights * embedding.vector + head.bias;
  const double max_logit = logits.maxCoeff();
  Eigen::VectorXd exps = (logits.array() - max_logit).exp();
  Posterior posterior;
  posterior.probabilities = exps / exps.sum();
  return posterior;
}

inline double cross_entropy(const Posterior& posterior,
                            const LabelVector& label) {
  require(posterior.probabilities.size() == label.one_hot.size(),
          ErrorCode::kDimensionMismatch, "posterior/label length mismatch");
  double loss = 0.0;
  for (int c = 0; c < label.one_hot.size(); ++c) {
    if (label.one_hot[c] != 0.0) {
      loss -= label.one_hot[c] * std::log(posterior.probabilities[c]);
    }
  }
  return loss;
}

// --- Gradients --------------------------------------------------------------

struct HeadGradients {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  static HeadGradients zeros_like(const SoftmaxHead& head) {
    return {Eigen::MatrixXd::Zero(head.weights.rows(), head.weights.cols()),
            Eigen::VectorXd::Zero(head.bias.size())};
  }
};

struct EncoderGradients {
  std::vector<EncoderLayer> layers;

  static EncoderGradients zeros_like(const SpeakerEncoder& encoder) {
    EncoderGradients grads;
    for (const auto& layer : encoder.layers) {
      grads.layers.push_back(
          {Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
           Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return grads;
  }
};

// Adds scale * d(CE)/d(head params) for one embedding; d(logits) = y - t.
// Returns d(CE)/d(embedding) for callers that keep propagating.
inline Eigen::VectorXd accumulate_head_gradients(const SoftmaxHead& head,
                                                 const Eigen::VectorXd& embedding,
                                                 int label_index, double scale,
                                                 HeadGradients* grads) {
  SpeakerEmbedding wrapped{embedding, ""};
  const Posterior posterior = predict(head, wrapped);
  Eigen::VectorXd dlogits = posterior.probabilities;
  dlogits[label_index] -= 1.0;
  if (grads != nullptr) {
    grads->weights.noalias() += scale * dlogits * embedding.transpose();
    grads->bias += scale * dlogits;
  }
  return head.weights.transpose() * dlogits;
}

// Adds scale * d(CE)/d(all encoder + head params) for one utterance,
// backpropagating through the softmax head, mean pooling, and every frame
// transform.
inline void accumulate_joint_gradients(const SpeakerEncoder& encoder,
                                       const SoftmaxHead& head,
                                       const FeatureSequence& utterance,
                                       int label_index, double scale,
                                       EncoderGradients* encoder_grads,
                                       HeadGradients* head_grads) {
  const int t_len = utterance.num_frames();
  const std::size_t n_layers = encoder.layers.size();

  // Forward, keeping post-activation outputs of every layer per frame.
  std::vector<std::vector<Eigen::VectorXd>> acts(n_layers);
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(encoder.embedding_dim());
  for (int t = 0; t < t_len; ++t) {
    Eigen::VectorXd h = utterance.frames.row(t).transpose();
    for (std::size_t l = 0; l < n_layers; ++l) {
      h = encoder.layers[l].weight * h + encoder.layers[l].bias;
      if (l + 1 < n_layers) h = h.array().tanh().matrix();
      acts[l].push_back(h);
    }
    pooled += h;
  }
  const Eigen::VectorXd embedding = pooled / static_cast<double>(t_len);

  const Eigen::VectorXd d_embedding = accumulate_head_gradients(
      head, embedding, label_index, scale, head_grads);

  if (encoder_grads == nullptr) return;

  const Eigen::VectorXd d_frame_out = d_embedding / static_cast<double>(t_len);
  for (int t = 0; t < t_len; ++t) {
    Eigen::VectorXd delta = d_frame_out;
    for (std::size_t l = n_layers; l-- > 0;) {
      const Eigen::VectorXd& input =
          (l == 0) ? Eigen::VectorXd(utterance.frames.row(t).transpose())
                   : acts[l - 1][static_cast<std::size_t>(t)];
      encoder_grads->layers[l].weight.noalias() +=
          scale * delta * input.transpose();
      encoder_grads->layers[l].bias += scale * delta;
      if (l > 0) {
        const Eigen::VectorXd& a = acts[l - 1][static_cast<std::size_t>(t)];
        delta = (encoder.layers[l].weight.transpose() * delta).array() *
                (1.0 - a.array().square());
      }
    }
  }
}

// Mean cross-entropy over a set of utterances; shared by training loops and
// the finite-difference checks in the test suite.
inline double mean_ce_loss(const SpeakerEncoder& encoder,
                           const SoftmaxHead& head,
                           const std::vector<const FeatureSequence*>& utterances,
                           const std::vector<int>& label_indices) {
  require(!utterances.empty(), ErrorCode::kEmptyInput, "no utterances");
  require(utterances.size() == label_indices.size(),
          ErrorCode::kDimensionMismatch, "labels do not match utterances");
  double total = 0.0;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const SpeakerEmbedding emb = extract_embedding(encoder, *utterances[i]);
    const Posterior post = predict(head, emb);
    total += cross_entropy(
        post, one_hot_label(label_indices[i], head.num_classes()));
  }
  return total / static_cast<double>(utterances.size());
}

inline double classification_accuracy(
    const SpeakerEncoder& encoder, const SoftmaxHead& head,
    const std::vector<const FeatureSequence*>& utterances,
    const std::vector<int>& label_indices) {
  require(!utterances.empty(), ErrorCode::kEmptyInput, "no utterances");
  int correct = 0;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const SpeakerEmbedding emb = extract_embedding(encoder, *utterances[i]);
    const Posterior post = predict(head, emb);
    int argmax = 0;
    post.probabilities.maxCoeff(&argmax);
    if (argmax == label_indices[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(utterances.size());
}

// --- Training ---------------------------------------------------------------

struct HeadTrainParams {
  double learning_rate = 0.2;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct EncoderTrainParams {
  int hidden_dim = 32;
  int embedding_dim = 16;
  double learning_rate = 0.05;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

namespace embeddings_detail {

constexpr std::uint64_t kStreamInit = 21;
constexpr std::uint64_t kStreamOrder = 22;
constexpr std::uint64_t kStreamTempHead = 23;

struct TrainSet {
  std::vector<const FeatureSequence*> utterances;
  std::vector<int> label_indices;  // into corpus.speakers
};

inline TrainSet head_train_set(const Corpus& corpus) {
  require(corpus.speakers.size() >= 2, ErrorCode::kDegenerateCorpus,
          "need at least two speakers");
  TrainSet set;
  std::vector<int> per_speaker(corpus.speakers.size(), 0);
  for (const auto& utt : corpus.utterances) {
    if (corpus.split_of(utt.utterance_id) != SplitTag::kHeadTrain) continue;
    const int label = corpus.speaker_index(utt.speaker_id);
    require(label >= 0, ErrorCode::kDegenerateCorpus,
            "utterance speaker missing from corpus: " + utt.speaker_id);
    set.utterances.push_back(&utt);
    set.label_indices.push_back(label);
    ++per_speaker[static_cast<std::size_t>(label)];
  }
  for (std::size_t i = 0; i < per_speaker.size(); ++i) {
    require(per_speaker[i] > 0, ErrorCode::kDegenerateCorpus,
            "speaker has no head_train utterances: " +
                corpus.speakers[i].speaker_id);
  }
  return set;
}

inline void check_sgd_params(double learning_rate, int epochs, int batch_size) {
  require(learning_rate > 0.0, ErrorCode::kInvalidParameter,
          "learning_rate must be > 0");
  require(epochs >= 0, ErrorCode::kInvalidParameter, "epochs must be >= 0");
  require(batch_size >= 1, ErrorCode::kInvalidParameter,
          "batch_size must be >= 1");
}

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

}  // namespace embeddings_detail

// Retrains only the classification head; the encoder is read-only here and
// its parameters are never touched.
inline SoftmaxHead train_head(const SpeakerEncoder& encoder,
                              const Corpus& corpus,
                              const HeadTrainParams& params) {
  using namespace embeddings_detail;
  check_sgd_params(params.learning_rate, params.epochs, params.batch_size);
  const TrainSet set = head_train_set(corpus);

  std::vector<Eigen::VectorXd> embeddings;
  embeddings.reserve(set.utterances.size());
  for (const auto* utt : set.utterances) {
    embeddings.push_back(extract_embedding(encoder, *utt).vector);
  }

  std::vector<std::string> labels;
  for (const auto& spk : corpus.speakers) labels.push_back(spk.speaker_id);
  SoftmaxHead head = make_head(labels, encoder.embedding_dim(),
                               derive_seed(params.seed, kStreamInit));

  Rng order_rng(derive_seed(params.seed, kStreamOrder));
  const std::size_t n = set.utterances.size();
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const auto order = epoch_order(n, order_rng);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(params.batch_size));
      HeadGradients grads = HeadGradients::zeros_like(head);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        accumulate_head_gradients(head, embeddings[order[i]],
                                  set.label_indices[order[i]], scale, &grads);
      }
      head.weights -= params.learning_rate * grads.weights;
      head.bias -= params.learning_rate * grads.bias;
    }
  }
  return head;
}

// Joint encoder + throwaway head training; returns the encoder only.
inline SpeakerEncoder train_encoder(const Corpus& corpus,
                                    const EncoderTrainParams& params) {
  using namespace embeddings_detail;
  require(params.hidden_dim >= 1 && params.embedding_dim >= 1,
          ErrorCode::kInvalidParameter, "encoder dims must be >= 1");
  check_sgd_params(params.learning_rate, params.epochs, params.batch_size);
  const TrainSet set = head_train_set(corpus);

  SpeakerEncoder encoder =
      make_encoder(corpus.feature_dim, params.hidden_dim, params.embedding_dim,
                   derive_seed(params.seed, kStreamInit));
  std::vector<std::string> labels;
  for (const auto& spk : corpus.speakers) labels.push_back(spk.speaker_id);
  SoftmaxHead head = make_head(labels, params.embedding_dim,
                               derive_seed(params.seed, kStreamTempHead));

  Rng order_rng(derive_seed(params.seed, kStreamOrder));
  const std::size_t n = set.utterances.size();
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const auto order = epoch_order(n, order_rng);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(params.batch_size));
      EncoderGradients enc_grads = EncoderGradients::zeros_like(encoder);
      HeadGradients head_grads = HeadGradients::zeros_like(head);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        accumulate_joint_gradients(encoder, head, *set.utterances[order[i]],
                                   set.label_indices[order[i]], scale,
                                   &enc_grads, &head_grads);
      }
      for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
        encoder.layers[l].weight -= params.learning_rate * enc_grads.layers[l].weight;
        encoder.layers[l].bias -= params.learning_rate * enc_grads.layers[l].bias;
      }
      head.weights -= params.learning_rate * head_grads.weights;
      head.bias -= params.learning_rate * head_grads.bias;
    }
  }
  return encoder;
}

}  // namespace voicecloak

#endif  // VOICECLOAK_EMBEDDINGS_HPP_
