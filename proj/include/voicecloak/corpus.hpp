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
// Synthetic multi-speaker feature corpus. Each utterance is a T x D frame
// matrix drawn as speaker offset + smooth sinusoidal content + white noise,
// plus a strictly positive smooth prosody track. Generation is a pure
// function of its parameters.

#ifndef VOICECLOAK_CORPUS_HPP_
#define VOICECLOAK_CORPUS_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "voicecloak/binary_io.hpp"
#include "voicecloak/errors.hpp"
#include "voicecloak/rng.hpp"

namespace voicecloak {

enum class Gender : std::uint8_t { kFemale = 0, kMale = 1 };

inline const char* gender_name(Gender g) {
  return g == Gender::kFemale ? "female" : "male";
}

enum class SplitTag : std::uint8_t { kHeadTrain = 0, kEval = 1 };

struct SpeakerProfile {
  std::string speaker_id;
  Gender gender = Gender::kFemale;
  Eigen::VectorXd voice_vector;  // per-speaker feature offset, dim D
  double voice_scale = 1.0;      // per-speaker noise stddev, > 0

  friend bool operator==(const SpeakerProfile& a, const SpeakerProfile& b) {
    return a.speaker_id == b.speaker_id && a.gender == b.gender &&
           a.voice_vector == b.voice_vector && a.voice_scale == b.voice_scale;
  }
};

struct FeatureSequence {
  std::string utterance_id;
  std::string speaker_id;
  Eigen::MatrixXd frames;   // T x D, finite
  Eigen::VectorXd prosody;  // length T, strictly positive

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int feature_dim() const { return static_cast<int>(frames.cols()); }

  friend bool operator==(const FeatureSequence& a, const FeatureSequence& b) {
    return a.utterance_id == b.utterance_id && a.speaker_id == b.speaker_id &&
           a.frames == b.frames && a.prosody == b.prosody;
  }
};

struct Corpus {
  int feature_dim = 0;
  std::vector<SpeakerProfile> speakers;
  std::vector<FeatureSequence> utterances;
  std::map<std::string, SplitTag> split_tags;  // utterance_id -> tag

  int speaker_index(const std::string& speaker_id) const {
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      if (speakers[i].speaker_id == speaker_id) return static_cast<int>(i);
    }
    return -1;
  }

  SplitTag split_of(const std::string& utterance_id) const {
    auto it = split_tags.find(utterance_id);
    require(it != split_tags.end(), ErrorCode::kMissingUtterance,
            "no split tag for utterance " + utterance_id);
    return it->second;
  }

  // Utterances of one speaker restricted to a split, in corpus order.
  std::vector<const FeatureSequence*> utterances_of(
      const std::string& speaker_id, SplitTag tag) const {
    std::vector<const FeatureSequence*> out;
    for (const auto& utt : utterances) {
      if (utt.speaker_id == speaker_id && split_of(utt.utterance_id) == tag) {
        out.push_back(&utt);
      }
    }
    return out;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.feature_dim == b.feature_dim && a.speakers == b.speakers &&
           a.utterances == b.utterances && a.split_tags == b.split_tags;
  }
};

inline std::map<std::string, const FeatureSequence*> index_utterances(
    const Corpus& corpus) {
  std::map<std::string, const FeatureSequence*> index;
  for (const auto& utt : corpus.utterances) index[utt.utterance_id] = &utt;
  return index;
}

struct CorpusParams {
  int speakers_per_gender = 40;
  int utterances_per_speaker = 50;
  int min_frames = 24;
  int max_frames = 40;
  int feature_dim = 16;
  double separability = 1.0;
  std::uint64_t seed = 1;
};

namespace corpus_detail {

// Generation texture constants. The noise stddev range doubles as the
// per-speaker voice_scale; content is a 3-component random sinusoid mixture
// so utterances share structure but not realizations.
constexpr double kVoiceScaleLo = 0.10;
constexpr double kVoiceScaleHi = 0.30;
constexpr int kContentComponents = 3;
constexpr double kContentAmplitude = 0.5;
constexpr double kContentFreqLo = 0.05;
constexpr double kContentFreqHi = 0.45;
constexpr double kProsodyDecay = 0.95;
constexpr double kProsodyStep = 0.05;

// Stream tags for derive_seed; distinct per concern.
constexpr std::uint64_t kStreamSpeaker = 1;
constexpr std::uint64_t kStreamUtterance = 2;
constexpr std::uint64_t kStreamSplit = 3;

inline std::string speaker_id_for(Gender g, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%04d", g == Gender::kFemale ? 'F' : 'M',
                index);
  return buf;
}

inline std::string utterance_id_for(const std::string& speaker_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_u%04d", index);
  return speaker_id + buf;
}

// head_train share is ceil(0.7 * n), computed in exact integer arithmetic.
inline int head_train_count(int n_utterances) {
  return (7 * n_utterances + 9) / 10;
}

}  // namespace corpus_detail

inline Corpus generate_corpus(const CorpusParams& params) {
  require(params.speakers_per_gender >= 1, ErrorCode::kInvalidParameter,
          "speakers_per_gender must be >= 1");
  require(params.utterances_per_speaker >= 1, ErrorCode::kInvalidParameter,
          "utterances_per_speaker must be >= 1");
  require(params.min_frames >= 1 && params.max_frames >= params.min_frames,
          ErrorCode::kInvalidParameter, "bad frames_per_utterance range");
  require(params.feature_dim >= 1, ErrorCode::kInvalidParameter,
          "feature_dim must be >= 1");
  require(params.separability > 0.0, ErrorCode::kInvalidParameter,
          "separability must be > 0");

  using namespace corpus_detail;
  const int d = params.feature_dim;

  Corpus corpus;
  corpus.feature_dim = d;

  int speaker_serial = 0;
  for (Gender gender : {Gender::kFemale, Gender::kMale}) {
    for (int si = 0; si < params.speakers_per_gender; ++si, ++speaker_serial) {
      SpeakerProfile profile;
      profile.speaker_id = speaker_id_for(gender, si);
      profile.gender = gender;

      Rng spk_rng(derive_seed(params.seed, kStreamSpeaker,
                              static_cast<std::uint64_t>(speaker_serial)));
      profile.voice_vector = Eigen::VectorXd(d);
      for (int k = 0; k < d; ++k) {
        profile.voice_vector[k] = params.separability * spk_rng.normal();
      }
      profile.voice_scale = spk_rng.uniform(kVoiceScaleLo, kVoiceScaleHi);
      corpus.speakers.push_back(profile);

      for (int ui = 0; ui < params.utterances_per_speaker; ++ui) {
        Rng rng(derive_seed(params.seed, kStreamUtterance,
                            static_cast<std::uint64_t>(speaker_serial),
                            static_cast<std::uint64_t>(ui)));
        FeatureSequence utt;
        utt.utterance_id = utterance_id_for(profile.speaker_id, ui);
        utt.speaker_id = profile.speaker_id;

        const int t_len = rng.uniform_int(params.min_frames, params.max_frames);

        // Content: shared component frequencies across dims, independent
        // amplitude/phase per dim.
        double freq[kContentComponents];
        for (int k = 0; k < kContentComponents; ++k) {
          freq[k] = rng.uniform(kContentFreqLo, kContentFreqHi);
        }
        Eigen::MatrixXd amp(kContentComponents, d);
        Eigen::MatrixXd phase(kContentComponents, d);
        for (int k = 0; k < kContentComponents; ++k) {
          for (int j = 0; j < d; ++j) {
            amp(k, j) = rng.normal(0.0, kContentAmplitude);
            phase(k, j) = rng.uniform(0.0, 2.0 * std::numbers::pi);
          }
        }

        utt.frames = Eigen::MatrixXd(t_len, d);
        for (int t = 0; t < t_len; ++t) {
          for (int j = 0; j < d; ++j) {
            double content = 0.0;
            for (int k = 0; k < kContentComponents; ++k) {
              content += amp(k, j) * std::sin(freq[k] * t + phase(k, j));
            }
            utt.frames(t, j) = profile.voice_vector[j] + content +
                               profile.voice_scale * rng.normal();
          }
        }

        // Prosody: exp of a mean-reverting log random walk, always positive.
        utt.prosody = Eigen::VectorXd(t_len);
        double log_p = rng.normal(0.0, kProsodyStep);
        for (int t = 0; t < t_len; ++t) {
          utt.prosody[t] = std::exp(log_p);
          log_p = kProsodyDecay * log_p + kProsodyStep * rng.normal();
        }

        corpus.utterances.push_back(std::move(utt));
      }

      // Per-speaker 70/30 split, ceiling on the head_train side.
      Rng split_rng(derive_seed(params.seed, kStreamSplit,
                                static_cast<std::uint64_t>(speaker_serial)));
      const int n = params.utterances_per_speaker;
      std::vector<int> train_picks =
          split_rng.sample_indices(n, head_train_count(n));
      std::vector<bool> is_train(static_cast<std::size_t>(n), false);
      for (int idx : train_picks) is_train[static_cast<std::size_t>(idx)] = true;
      for (int ui = 0; ui < n; ++ui) {
        corpus.split_tags[utterance_id_for(profile.speaker_id, ui)] =
            is_train[static_cast<std::size_t>(ui)] ? SplitTag::kHeadTrain
                                                   : SplitTag::kEval;
      }
    }
  }
  return corpus;
}

// --- Corpus container ("AVXC") ---------------------------------------------
//
// Binary, little-endian: magic "AVXC", version u32, feature_dim u32,
// speaker count u32, per speaker (length-prefixed id, gender u8,
// voice_vector D x f64, voice_scale f64), utterance count u32, per utterance
// (id, speaker_id, split_tag u8, T u32, frames T x D x f64 row-major,
// prosody T x f64).

namespace corpus_detail {
constexpr char kCorpusMagic[4] = {'A', 'V', 'X', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;
}  // namespace corpus_detail

inline void save_corpus(const Corpus& corpus,
                        const std::filesystem::path& path) {
  using namespace corpus_detail;
  BinaryWriter w(path);
  w.write_magic(kCorpusMagic);
  w.write_u32(kCorpusVersion);
  w.write_u32(static_cast<std::uint32_t>(corpus.feature_dim));
  w.write_u32(static_cast<std::uint32_t>(corpus.speakers.size()));
  for (const auto& spk : corpus.speakers) {
    w.write_string(spk.speaker_id);
    w.write_u8(static_cast<std::uint8_t>(spk.gender));
    for (int j = 0; j < corpus.feature_dim; ++j) w.write_f64(spk.voice_vector[j]);
    w.write_f64(spk.voice_scale);
  }
  w.write_u32(static_cast<std::uint32_t>(corpus.utterances.size()));
  for (const auto& utt : corpus.utterances) {
    w.write_string(utt.utterance_id);
    w.write_string(utt.speaker_id);
    w.write_u8(static_cast<std::uint8_t>(corpus.split_of(utt.utterance_id)));
    const int t_len = utt.num_frames();
    w.write_u32(static_cast<std::uint32_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      for (int j = 0; j < corpus.feature_dim; ++j) w.write_f64(utt.frames(t, j));
    }
    for (int t = 0; t < t_len; ++t) w.write_f64(utt.prosody[t]);
  }
  w.finish();
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  using namespace corpus_detail;
  BinaryReader r(path);
  r.expect_magic(kCorpusMagic);
  if (r.read_u32() != kCorpusVersion) r.fail_at("unsupported format version");

  Corpus corpus;
  corpus.feature_dim = static_cast<int>(r.read_u32());
  if (corpus.feature_dim < 1 || corpus.feature_dim > (1 << 16)) {
    r.fail_at("implausible feature_dim");
  }
  const int d = corpus.feature_dim;

  const std::uint32_t n_speakers = r.read_u32();
  for (std::uint32_t i = 0; i < n_speakers; ++i) {
    SpeakerProfile spk;
    spk.speaker_id = r.read_string();
    if (corpus.speaker_index(spk.speaker_id) >= 0) {
      r.fail_at("duplicate speaker_id " + spk.speaker_id);
    }
    const std::uint8_t g = r.read_u8();
    if (g > 1) r.fail_at("bad gender byte");
    spk.gender = static_cast<Gender>(g);
    spk.voice_vector = Eigen::VectorXd(d);
    for (int j = 0; j < d; ++j) spk.voice_vector[j] = r.read_f64();
    spk.voice_scale = r.read_f64();
    if (!(spk.voice_scale > 0.0) || !std::isfinite(spk.voice_scale)) {
      r.fail_at("voice_scale must be positive and finite");
    }
    corpus.speakers.push_back(std::move(spk));
  }

  const std::uint32_t n_utterances = r.read_u32();
  for (std::uint32_t i = 0; i < n_utterances; ++i) {
    FeatureSequence utt;
    utt.utterance_id = r.read_string();
    if (corpus.split_tags.count(utt.utterance_id) != 0) {
      r.fail_at("duplicate utterance_id " + utt.utterance_id);
    }
    utt.speaker_id = r.read_string();
    if (corpus.speaker_index(utt.speaker_id) < 0) {
      r.fail_at("utterance references unknown speaker " + utt.speaker_id);
    }
    const std::uint8_t tag = r.read_u8();
    if (tag > 1) r.fail_at("bad split tag");
    const std::uint32_t t_len = r.read_u32();
    if (t_len < 1 || t_len > (1u << 24)) r.fail_at("implausible frame count");
    utt.frames = Eigen::MatrixXd(static_cast<int>(t_len), d);
    for (std::uint32_t t = 0; t < t_len; ++t) {
      for (int j = 0; j < d; ++j) {
        const double v = r.read_f64();
        if (!std::isfinite(v)) r.fail_at("non-finite frame value");
        utt.frames(static_cast<int>(t), j) = v;
      }
    }
    utt.prosody = Eigen::VectorXd(static_cast<int>(t_len));
    for (std::uint32_t t = 0; t < t_len; ++t) {
      const double v = r.read_f64();
      if (!(v > 0.0) || !std::isfinite(v)) {
        r.fail_at("prosody values must be positive and finite");
      }
      utt.prosody[static_cast<int>(t)] = v;
    }
    corpus.split_tags[utt.utterance_id] = static_cast<SplitTag>(tag);
    corpus.utterances.push_back(std::move(utt));
  }

  r.expect_end();
  return corpus;
}

}  // namespace voicecloak

#endif  // VOICECLOAK_CORPUS_HPP_
